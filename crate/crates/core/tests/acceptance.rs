//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the lines are always printed.

mod common;

use std::time::{Duration, Instant};

use num_traits::{One, Signed, Zero};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_autocorrelation, random_function, random_spec, walsh_strategy};
use rankone::correlation::{autocorrelation_at_depth, autocorrelation_sequence, corr_functional, interval_budgets, CorrelationSequence};
use rankone::pair::{design_blocking_stage, design_generic_stage, plan_pair, verify_pair, verify_polynomial_limit, PairPlan, PairPolicy, PairVerification, PolynomialSpec, Verdict};
use rankone::rank1::RankOneSpec;
use rankone::schedule::{generate_schedule, Interval, IntervalSchedule};
use rankone::spectral::{chaos_exp_coefficients, exact_density, exp_tail_bound, fejer_density};
use rankone::suspension::{gaussian_covariance, poisson_linear_covariance, SimulationConfig};
use rankone::walsh::lemma3_truncate;
use rankone::{rat, ExactLevelFunction, Rational, Scalar};

const HORIZON: u64 = 10_000;

type Outcome = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn iv(a: u64, b: u64) -> Interval {
    Interval::new(a, b).unwrap()
}

struct Pipeline {
    schedule: IntervalSchedule,
    plan: PairPlan,
    check: PairVerification,
    elapsed: Duration,
}

fn pipeline() -> Pipeline {
    let start = Instant::now();
    let schedule = generate_schedule(&rat(10, 1), HORIZON, &[]).unwrap();
    let plan = plan_pair(&schedule, &PairPolicy::default()).unwrap();
    let check = verify_pair(&plan.spec_s, &plan.spec_t, &plan.cert_s, &plan.cert_t).unwrap();
    Pipeline {
        schedule,
        plan,
        check,
        elapsed: start.elapsed(),
    }
}

fn product_vanishes(p: &Pipeline) -> Outcome {
    let n0 = p.plan.n0;
    ensure(p.check.passed(), || format!("verification problems: {:?} {:?}", p.check.s.problems, p.check.t.problems))?;
    for n in n0..=HORIZON {
        let e = p.check.product.get(n as i64).ok_or(format!("product sequence misses n = {n}"))?;
        ensure(e.lower.is_zero() && e.upper.is_zero(), || format!("product at n = {n} is {e:?}"))?;
    }
    ensure(n0 <= 100, || format!("n0 = {n0} > 100"))?;
    ensure(p.elapsed < Duration::from_secs(60), || format!("took {:?}", p.elapsed))?;
    Ok(format!("n0 = {n0}, product exactly 0 on [{n0}, {HORIZON}], {:?}", p.elapsed))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let specs = 8;
    for k in 0..specs {
        let spec = random_spec(&mut rng, 6);
        let f = random_function(&mut rng, &spec);
        let seq = autocorrelation_sequence(&spec, &f, 200, None).map_err(|e| e.to_string())?;
        for n in 0..=200u64 {
            let want = brute_autocorrelation(&spec, &f, n, spec.max_depth());
            ensure(seq.get(n as i64) == Some(&want), || format!("spec #{k}, n = {n}: {:?} vs oracle {want:?}", seq.get(n as i64)))?;
        }
    }
    Ok(format!("{specs} random specs (<= 6 stages), n in [0, 200]"))
}

/// Blocking `[1, 5]`, then a generic stage at height 12, then a closing block.
fn generic_spec(poly: &PolynomialSpec, cuts: usize) -> RankOneSpec {
    let d = design_generic_stage(12, iv(12, 12 * (cuts as u64 + 1) * 7), poly, cuts).unwrap();
    let next = d.stage.next_height(12).unwrap();
    RankOneSpec::new(
        1,
        vec![
            design_blocking_stage(1, iv(1, 5), 2).unwrap(),
            d.stage,
            design_blocking_stage(next, iv(1, next), 2).unwrap(),
        ],
    )
}

fn rigidity() -> Outcome {
    let f = ExactLevelFunction::base_indicator(1);
    let mut deficits: Vec<Rational> = Vec::new();
    for r in [8usize, 16, 32, 64] {
        let spec = generic_spec(&PolynomialSpec::delta0(), r);
        let norm = f.norm_sq(&spec).unwrap();
        let b = autocorrelation_at_depth(&spec, &f, 12, spec.max_depth()).unwrap();
        let target = (Rational::one() - rat(1, r as i64)) * &norm;
        ensure(b.lower >= target, || format!("r = {r}: lower {} < {}", b.lower.to_text(), target.to_text()))?;
        let deficit = &norm - &b.lower;
        if let Some(prev) = deficits.last() {
            ensure(&deficit <= prev, || format!("r = {r}: deficit {} grew", deficit.to_text()))?;
        }
        deficits.push(deficit);
    }
    let text: Vec<String> = deficits.iter().map(|d| d.to_text()).collect();
    Ok(format!("deficits for r = 8, 16, 32, 64: {}", text.join(", ")))
}

fn polynomial_limit() -> Outcome {
    let poly = PolynomialSpec::new([(0, rat(1, 2)), (1, rat(1, 2))].into_iter().collect()).unwrap();
    let spec = generic_spec(&poly, 64);
    let f = ExactLevelFunction::base_indicator(1);
    let chk = verify_polynomial_limit(&spec, 12, &poly, &f, &f).map_err(|e| e.to_string())?;
    let bound = &chk.norm_sq_f * (rat(2, 64) + &chk.rounding_mass);
    ensure(chk.deviation <= bound && chk.within_bound(), || {
        format!("deviation {} > {}", chk.deviation.to_text(), bound.to_text())
    })?;
    Ok(format!("deviation {} <= {}", chk.deviation.to_text(), bound.to_text()))
}

fn correlation_budget(p: &Pipeline) -> Outcome {
    let product = &p.check.product;
    let total = corr_functional(product, 1, HORIZON as i64).map_err(|e| e.to_string())?;
    ensure(total.is_exact(), || format!("Corr over [1, H] is not exact: {total:?}"))?;
    let head = corr_functional(product, 1, p.plan.n0 as i64 - 1).map_err(|e| e.to_string())?;
    ensure(total == head, || format!("Corr over [1, H] = {:?} but over [1, n0 - 1] = {head:?}", total))?;
    let mut intervals = Vec::new();
    for b in &p.schedule.blocks {
        intervals.push((b.i.start as i64, b.i.end as i64));
        if let Some(j) = b.j {
            intervals.push((j.start as i64, j.end as i64));
        }
    }
    for eps in [rat(1, 1), rat(1, 1_000_000), Rational::new(1.into(), num_bigint::BigInt::from(10).pow(40))] {
        ensure(total.upper < eps, || format!("Corr {} is not below eps = {}", total.upper.to_text(), eps.to_text()))?;
        for line in interval_budgets(product, &intervals, &eps).map_err(|e| e.to_string())? {
            ensure(line.within, || {
                format!("[{}, {}]: Corr {} exceeds {}", line.start, line.end, line.corr.upper.to_text(), line.budget.to_text())
            })?;
        }
    }
    Ok(format!(
        "Corr over [1, {HORIZON}] = {} (= Corr over [1, n0 - 1]); {} intervals within eps/2^(k+1)",
        total.upper.to_text(),
        intervals.len()
    ))
}

fn spectral_witness(p: &Pipeline) -> Outcome {
    let product = &p.check.product;
    let d = exact_density(product, 1 << 12).map_err(|e| e.to_string())?;
    let rho0 = product.get(0).unwrap().midpoint_f64();
    ensure((d.mean() - rho0).abs() <= 1e-9, || format!("grid mean {} vs rho(0) {rho0}", d.mean()))?;
    ensure(d.min() >= -1e-9, || format!("exact density min {}", d.min()))?;
    let f = ExactLevelFunction::base_indicator(1);
    let mut mins = Vec::new();
    for (name, spec) in [("S", &p.plan.spec_s), ("T", &p.plan.spec_t)] {
        let seq = autocorrelation_sequence(spec, &f, HORIZON, None).map_err(|e| e.to_string())?;
        let fe = fejer_density(&seq, HORIZON, 1 << 15).map_err(|e| e.to_string())?;
        ensure(fe.min() >= -1e-9, || format!("Fejér density of {name} dips to {}", fe.min()))?;
        mins.push(format!("{name} min {:.3e}", fe.min()));
    }
    Ok(format!("product density mean {:.6} = rho(0), min {:.3e}; Fejér {}", d.mean(), d.min(), mins.join(", ")))
}

fn suspension(p: &Pipeline) -> Outcome {
    let start = Instant::now();
    let spec = &p.plan.spec_s;
    let f = ExactLevelFunction::base_indicator(1);
    let zero_n = p
        .plan
        .cert_s
        .zero_intervals
        .iter()
        .find(|c| c.verdict == Verdict::ExactZero)
        .map(|c| c.interval.start)
        .ok_or("no certified zero interval")?;
    let rigid_n = p.plan.cert_s.rigidity_times.first().map(|r| r.time).ok_or("no rigidity time")?;
    let seq = autocorrelation_sequence(spec, &f, rigid_n.max(zero_n), None).map_err(|e| e.to_string())?;
    let cfg = SimulationConfig {
        sample_count: 100_000,
        seed: 1,
        ..SimulationConfig::default()
    };
    let mut parts = Vec::new();
    for n in [0, zero_n, rigid_n] {
        let exact = seq.get(n as i64).unwrap();
        ensure(exact.is_exact(), || format!("base correlation at {n} is not exact"))?;
        let exact = exact.lower.to_f64_lossy();
        let est = poisson_linear_covariance(spec, 2, &f, n, &cfg).map_err(|e| e.to_string())?;
        ensure(est.contains(exact), || {
            format!("n = {n}: CI [{:.5}, {:.5}] misses {exact:.5}", est.ci_low, est.ci_high)
        })?;
        parts.push(format!("n={n}: {exact:.4} in [{:.4}, {:.4}]", est.ci_low, est.ci_high));
    }
    let cov = autocorrelation_sequence(spec, &f, 20, None).and_then(|s| s.normalized()).map_err(|e| e.to_string())?;
    let lags: Vec<usize> = (0..=20).collect();
    let g = gaussian_covariance(&cov, &lags, &cfg).map_err(|e| e.to_string())?;
    ensure(g.max_abs_error() <= 0.01, || format!("Gaussian covariance error {}", g.max_abs_error()))?;
    ensure(start.elapsed() < Duration::from_secs(300), || format!("took {:?}", start.elapsed()))?;
    Ok(format!(
        "Poisson {}; Gaussian max error {:.4} over lags 0..=20; {:?}",
        parts.join("; "),
        g.max_abs_error(),
        start.elapsed()
    ))
}

fn truncation_exactness() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let deltas = [rat(1, 2), rat(1, 10), rat(1, 100), rat(1, 1000)];
    let result = runner.run(&(walsh_strategy(), 0..deltas.len()), |(f, k)| {
        let delta = &deltas[k];
        let t = lemma3_truncate(&f, delta).map_err(|e| TestCaseError::fail(e.to_string()))?;
        // The kept terms are terms of f, so ‖f'‖ / ‖f‖ is known exactly.
        for (set, c) in t.kept.terms() {
            if f.terms().get(set) != Some(c) {
                return Err(TestCaseError::fail(format!("kept term {set:?} is not a term of f")));
            }
        }
        let fraction = t.kept.norm_sq() / f.norm_sq();
        let rhs = Rational::one() - delta * delta / rat(2, 1);
        if !(rhs.is_negative() || fraction > &rhs * &rhs) {
            return Err(TestCaseError::fail(format!("‖f - f'‖ >= {}", delta.to_text())));
        }
        if t.normalized_norm_sq() != Rational::one() {
            return Err(TestCaseError::fail("‖f'‖ != 1"));
        }
        for m in t.m + 1..=HORIZON {
            if !t.kept.shifted_inner_product(m as i64, &t.kept).is_zero() {
                return Err(TestCaseError::fail(format!("(U^{m} f', f') != 0 with M = {}", t.m)));
            }
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!("100 random zero-mean polynomials, all m in (M, {HORIZON}]"))
}

fn chaos_convergence() -> Outcome {
    let seq = CorrelationSequence::from_values(0, vec![Rational::one(), rat(1, 2)], Rational::one(), "rho");
    let c = chaos_exp_coefficients(&seq, 10).map_err(|e| e.to_string())?;
    let sum = &c.coefficients.entries[1].lower;
    let err = (sum.to_f64_lossy() - (0.5f64.exp() - 1.0)).abs();
    ensure(err < 1e-9, || format!("|sum - (e^(1/2) - 1)| = {err:e}"))?;
    // True tail sum_{k > 10} (1/2)^k / k!, bracketed exactly: terms 11..=40
    // plus at most twice the 41st term.
    let x = rat(1, 2);
    let mut term = Rational::one();
    let mut tail = Rational::zero();
    for k in 1..=41u64 {
        term = term * &x / Rational::from_integer(k.into());
        if k > 10 && k <= 40 {
            tail += &term;
        }
    }
    let tail_upper = tail + term * rat(2, 1);
    let bound = &c.tail[1];
    ensure(bound >= &tail_upper, || format!("tail bound {} below the true tail", bound.to_text()))?;
    ensure(*bound == exp_tail_bound(&x, 10), || "tail bound mismatch".into())?;
    Ok(format!("error {err:.2e}, tail bound {:.3e} >= true tail {:.3e}", bound.to_f64_lossy(), tail_upper.to_f64_lossy()))
}

fn main() {
    let p = pipeline();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 product vanishes on [n0, 10^4]", Box::new(|| product_vanishes(&p))),
        ("2 brackets equal point enumeration", Box::new(oracle_equivalence)),
        ("3 rigidity at generic stages", Box::new(rigidity)),
        ("4 polynomial limit a0 = a1 = 1/2", Box::new(polynomial_limit)),
        ("5 correlation budget", Box::new(|| correlation_budget(&p))),
        ("6 spectral witness", Box::new(|| spectral_witness(&p))),
        ("7 suspension first chaos", Box::new(|| suspension(&p))),
        ("8 truncation exactness", Box::new(truncation_exactness)),
        ("9 chaos coefficients", Box::new(chaos_convergence)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

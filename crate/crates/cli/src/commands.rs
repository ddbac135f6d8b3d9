use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_traits::{One, Zero};
use serde::Serialize;

use rankone::correlation::{autocorrelation_sequence, corr_functional, cross_correlation_best, CorrelationSequence};
use rankone::pair::{plan_pair, verify as verify_factor, verify_pair, ConstructionCertificate, PairPolicy, PolynomialSpec, TrackedFunction, Verdict};
use rankone::rank1::{LevelFunction, RankOneSpec};
use rankone::schedule::{generate_schedule, parse_growth, validate_schedule, IntervalSchedule};
use rankone::spectral::{chaos_exp_coefficients, exact_density, fejer_density, summability_report};
use rankone::suspension::{gaussian_covariance, poisson_linear_covariance, CovarianceEstimate, SimulationConfig};
use rankone::walsh::{corr_sum, corr_tail_certificate, lemma3_truncate, lemma3_truncate_stream, GeometricStream, WalshRecord};
use rankone::{parse_rational, ExactWalsh, Rational, Scalar};

use crate::io::{load, read, Run};
use crate::{CorrelateArgs, Failure, Lemma3Args, PlanArgs, ReportArgs, ScheduleArgs, SimKind, SimulateArgs, SpectrumArgs, VerifyArgs};

fn rational(flag: &str, text: &str) -> Result<Rational, Failure> {
    parse_rational(text).ok_or_else(|| Failure::Usage(format!("--{flag}: {text:?} is not a rational number")))
}

fn parse_poly(text: &str) -> Result<PolynomialSpec, Failure> {
    let mut terms = BTreeMap::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (z, a) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--poly: expected z=a, got {part:?}")))?;
        let z: i64 = z.trim().parse().map_err(|_| Failure::Usage(format!("--poly: bad exponent {z:?}")))?;
        terms.insert(z, rational("poly", a)?);
    }
    Ok(PolynomialSpec::new(terms)?)
}

fn load_spec(run: &mut Run, path: &Path) -> Result<RankOneSpec, Failure> {
    run.input("spec", path);
    let spec = load(path, RankOneSpec::from_toml)?;
    spec.check().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

fn load_cert(path: &Path) -> Result<ConstructionCertificate, Failure> {
    load(path, ConstructionCertificate::from_toml)
}

/// From `--function`, else `--cert`, else the base indicator of stage 1.
fn load_function(run: &mut Run, function: Option<&Path>, cert: Option<&Path>) -> Result<LevelFunction<Rational>, Failure> {
    let tracked = match (function, cert) {
        (Some(p), _) => {
            run.input("function", p);
            load(p, |t| toml::from_str::<TrackedFunction>(t).map_err(|e| rankone::Error::Parse(e.to_string())))?
        }
        (None, Some(p)) => {
            run.input("cert", p);
            load_cert(p)?.tracked
        }
        (None, None) => return Ok(LevelFunction::base_indicator(1)),
    };
    Ok(tracked.to_level_function()?)
}

pub fn schedule(a: ScheduleArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("schedule", out);
    let growth = parse_growth(&a.growth)?;
    run.param("growth", growth.to_text());
    run.param("horizon", a.horizon);
    run.param("seed_lengths", format!("{:?}", a.seed_lengths));
    let s = generate_schedule(&growth, a.horizon, &a.seed_lengths)?;
    let report = validate_schedule(&s);
    if !report.is_valid() {
        return Err(Failure::Usage(format!("generated schedule is invalid: {}", report.violations.join("; "))));
    }
    let path = run.emit("schedule", &a.output, &s.to_toml())?;
    print!("{s}");
    println!("wrote {}", path.display());
    run.finish()
}

pub fn plan(a: PlanArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("plan", out);
    run.input("schedule", &a.schedule);
    let schedule = load(&a.schedule, IntervalSchedule::from_toml)?;
    let mut policy = match &a.policy {
        Some(p) => {
            run.input("policy", p);
            load(p, |t| toml::from_str::<PairPolicy>(t).map_err(|e| rankone::Error::Parse(e.to_string())))?
        }
        None => PairPolicy::default(),
    };
    if let Some(v) = a.blocking_cuts {
        policy.blocking_cuts = v;
    }
    if let Some(v) = a.generic_cuts {
        policy.generic_cuts = v;
    }
    if let Some(v) = a.max_generic {
        policy.max_generic_per_block = v;
    }
    if let Some(p) = &a.poly {
        policy.poly = parse_poly(p)?;
    }
    if let Some(v) = a.tracked_stage {
        policy.tracked_stage = v;
    }
    if a.no_close {
        policy.close_horizon = false;
    }
    run.param("policy", toml::to_string(&policy).expect("policy serializes").trim().replace('\n', "; "));
    let plan = plan_pair(&schedule, &policy).map_err(|e| match e {
        e @ rankone::Error::IncompatibleGeometry { .. } => Failure::Usage(e.to_string()),
        e => e.into(),
    })?;
    run.emit("spec_s", Path::new("spec_s.toml"), &plan.spec_s.to_toml())?;
    run.emit("spec_t", Path::new("spec_t.toml"), &plan.spec_t.to_toml())?;
    run.emit("cert_s", Path::new("cert_s.toml"), &plan.cert_s.to_toml())?;
    run.emit("cert_t", Path::new("cert_t.toml"), &plan.cert_t.to_toml())?;
    println!(
        "S: {} stages, T: {} stages, n0 = {}, horizon = {}",
        plan.spec_s.stages.len(),
        plan.spec_t.stages.len(),
        plan.n0,
        schedule.horizon
    );
    println!("wrote spec_s.toml, spec_t.toml, cert_s.toml, cert_t.toml to {}", run.out_dir.display());
    run.finish()
}

pub fn verify(a: VerifyArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("verify", out);
    if a.specs.len() != a.certs.len() || !(1..=2).contains(&a.specs.len()) {
        return Err(Failure::Usage("give one or two --spec/--cert pairs".into()));
    }
    let mut specs = Vec::new();
    let mut certs = Vec::new();
    for (i, (s, c)) in a.specs.iter().zip(&a.certs).enumerate() {
        run.input(&format!("spec_{i}"), s);
        run.input(&format!("cert_{i}"), c);
        specs.push(load(s, RankOneSpec::from_toml)?);
        certs.push(load_cert(c)?);
    }
    let (passed, first, problems, table) = if specs.len() == 2 {
        let v = verify_pair(&specs[0], &specs[1], &certs[0], &certs[1])?;
        let mut problems: Vec<String> = v.s.problems.iter().map(|p| format!("S: {p}")).collect();
        problems.extend(v.t.problems.iter().map(|p| format!("T: {p}")));
        if let Some(n) = v.product_first_nonzero {
            problems.push(format!("product correlation is not exactly zero at n = {n}"));
        }
        println!("checked {} claims; n0 = {}", v.s.checked + v.t.checked, v.n0);
        (v.passed(), v.first_violated_n(), problems, v.product)
    } else {
        let (r, seq) = verify_factor(&specs[0], &certs[0])?;
        println!("checked {} claims", r.checked);
        (r.passed(), r.first_violated_n, r.problems, seq)
    };
    if let Some(t) = &a.table {
        run.emit("table", t, &table.to_csv())?;
    }
    run.param("passed", passed);
    run.finish()?;
    if passed {
        println!("PASS");
        return Ok(());
    }
    for p in &problems {
        println!("  {p}");
    }
    Err(Failure::Violation(match first {
        Some(n) => format!("certificate violated; first violated n = {n}"),
        None => format!("certificate violated ({} problems)", problems.len()),
    }))
}

pub fn correlate(a: CorrelateArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("correlate", out);
    let spec = load_spec(&mut run, &a.spec)?;
    let f = load_function(&mut run, a.function.as_deref(), a.cert.as_deref())?;
    f.check(&spec)?;
    run.param("max_n", a.max_n);
    let tol = a.tolerance.as_deref().map(|t| rational("tolerance", t)).transpose()?;
    if let Some(t) = &tol {
        run.param("tolerance", t.to_text());
    }
    let seq = autocorrelation_sequence(&spec, &f, a.max_n, tol.as_ref())?;
    let path = run.emit("table", &a.output, &seq.to_csv())?;
    println!("{}; max bracket width {}", seq.subject, seq.max_gap().to_text());
    println!("wrote {}", path.display());
    run.finish()
}

fn load_table(run: &mut Run, name: &str, path: &Path) -> Result<CorrelationSequence<Rational>, Failure> {
    run.input(name, path);
    let text = read(path)?;
    CorrelationSequence::from_csv(&text, true, path.display().to_string())
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn spectrum(a: SpectrumArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("spectrum", out);
    let seq = load_table(&mut run, "corr", &a.corr)?;
    run.param("grid", a.grid);
    run.param("exact", a.exact);
    let d = if a.exact {
        exact_density(&seq, a.grid)?
    } else {
        run.param("order", a.order);
        fejer_density(&seq, a.order, a.grid)?
    };
    let path = run.emit("density", &a.output, &d.to_csv())?;
    println!("density (order {}, grid {}): mean {:.12}, min {:.6e}, max {:.6e}", d.order, d.grid(), d.mean(), d.min(), d.max());
    let horizon = seq.end().max(0) as u64;
    let s = summability_report(&seq, horizon)?;
    println!(
        "on [1, {horizon}]: l1 in [{}, {}], l2 in [{}, {}], {} nonzero entries",
        s.l1.lower.to_text(),
        s.l1.upper.to_text(),
        s.l2.lower.to_text(),
        s.l2.upper.to_text(),
        s.support.len()
    );
    if let Some(k) = a.chaos {
        run.param("chaos", k);
        let c = chaos_exp_coefficients(&seq.normalized()?, k)?;
        let mut csv = String::from("n,lower,upper,tail\n");
        for ((n, b), t) in c.coefficients.iter().zip(&c.tail) {
            writeln!(csv, "{n},{},{},{}", b.lower.to_text(), b.upper.to_text(), t.to_text()).expect("string write");
        }
        run.emit("chaos", Path::new("chaos.csv"), &csv)?;
    }
    println!("wrote {}", path.display());
    run.finish()
}

fn sim_config(run: &mut Run, a: &SimulateArgs) -> Result<SimulationConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            run.input("config", p);
            load(p, |t| toml::from_str::<SimulationConfig>(t).map_err(|e| rankone::Error::Parse(e.to_string())))?
        }
        None => SimulationConfig::default(),
    };
    if let Some(v) = a.samples {
        cfg.sample_count = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lag_max {
        cfg.lag_max = v;
    }
    if let Some(v) = a.intensity {
        cfg.intensity = v;
    }
    if let Some(v) = a.confidence {
        cfg.confidence = v;
    }
    if let Some(v) = a.escape_cap {
        cfg.escape_cap = v;
    }
    cfg.check()?;
    run.seed(cfg.seed);
    run.param("config", toml::to_string(&cfg).expect("config serializes").trim().replace('\n', "; "));
    Ok(cfg)
}

#[derive(Serialize)]
struct PoissonEntry {
    n: u64,
    exact_lower: String,
    exact_upper: String,
    covered: bool,
    #[serde(flatten)]
    estimate: CovarianceEstimate,
}

#[derive(Serialize)]
struct PoissonDocument {
    depth: usize,
    entries: Vec<PoissonEntry>,
}

pub fn simulate(a: SimulateArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("simulate", out);
    let cfg = sim_config(&mut run, &a)?;
    run.param("kind", format!("{:?}", a.kind).to_lowercase());
    let text = match a.kind {
        SimKind::Gaussian => {
            let path = a.cov.as_deref().ok_or_else(|| Failure::Usage("--kind gaussian needs --cov".into()))?;
            let mut cov = load_table(&mut run, "cov", path)?;
            if a.normalize {
                cov = cov.normalized()?;
            }
            let lags: Vec<usize> = (0..=cfg.lag_max).collect();
            let r = gaussian_covariance(&cov, &lags, &cfg)?;
            println!("{:?} sampler, {} paths of length {}; max |error| {:.5}", r.method, r.samples, r.length, r.max_abs_error());
            toml::to_string(&r).expect("report serializes")
        }
        SimKind::Poisson => {
            let path = a.spec.as_deref().ok_or_else(|| Failure::Usage("--kind poisson needs --spec".into()))?;
            let spec = load_spec(&mut run, path)?;
            let f = load_function(&mut run, a.function.as_deref(), a.cert.as_deref())?;
            run.param("depth", a.depth);
            run.param("n", format!("{:?}", a.n));
            let mut entries = Vec::new();
            for &n in &a.n {
                let estimate = poisson_linear_covariance(&spec, a.depth, &f, n, &cfg)?;
                let exact = cross_correlation_best(&spec, &f, &f, n as i64)?;
                let covered = estimate.ci_low <= exact.upper.to_f64_lossy() && exact.lower.to_f64_lossy() <= estimate.ci_high;
                println!(
                    "n = {n}: estimate {:.5} CI [{:.5}, {:.5}], exact [{}, {}], escape {:.2e}",
                    estimate.estimate,
                    estimate.ci_low,
                    estimate.ci_high,
                    exact.lower.to_text(),
                    exact.upper.to_text(),
                    estimate.escape_fraction
                );
                entries.push(PoissonEntry {
                    n,
                    exact_lower: exact.lower.to_text(),
                    exact_upper: exact.upper.to_text(),
                    covered,
                    estimate,
                });
            }
            toml::to_string(&PoissonDocument { depth: a.depth, entries }).expect("report serializes")
        }
    };
    let path = run.emit("report", &a.output, &text)?;
    println!("wrote {}", path.display());
    run.finish()
}

#[derive(Serialize)]
struct TruncationDocument {
    delta: String,
    m: u64,
    horizon: u64,
    kept_norm_sq: String,
    /// Lower bound on ‖f_T‖² / ‖f‖².
    kept_fraction: String,
    distance_sq_bound: String,
    within_delta: bool,
    /// Corr over [1, M].
    corr_head: String,
    /// Corr over (M, horizon]; zero for a valid truncation.
    corr_tail: String,
    terms: Vec<WalshRecord>,
}

pub fn lemma3(a: Lemma3Args, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("lemma3", out);
    let delta = rational("delta", &a.delta)?;
    run.param("delta", delta.to_text());
    run.param("horizon", a.horizon);
    let t = match (&a.f, &a.geometric) {
        (Some(p), _) => {
            run.input("f", p);
            let f = load(p, ExactWalsh::from_toml)?;
            lemma3_truncate(&f, &delta)?
        }
        (None, Some(g)) => {
            let (x, q) = g
                .split_once(',')
                .ok_or_else(|| Failure::Usage(format!("--geometric: expected a,q, got {g:?}")))?;
            let (x, q) = (rational("geometric", x)?, rational("geometric", q)?);
            if !(q.is_zero() || (q > -Rational::one() && q < Rational::one())) {
                return Err(Failure::Usage("--geometric: need |q| < 1".into()));
            }
            run.param("geometric", g);
            run.param("max_terms", a.max_terms);
            lemma3_truncate_stream(&GeometricStream { a: x, q }, &delta, a.max_terms)?
        }
        (None, None) => return Err(Failure::Usage("give --f or --geometric".into())),
    };
    let tail = corr_tail_certificate(&t, t.m, a.horizon);
    let within = t.within(&delta);
    let doc = TruncationDocument {
        delta: delta.to_text(),
        m: t.m,
        horizon: a.horizon,
        kept_norm_sq: t.kept_norm_sq.to_text(),
        kept_fraction: t.kept_fraction.to_text(),
        distance_sq_bound: t.distance_sq_bound().to_text(),
        within_delta: within,
        corr_head: corr_sum(&t, 0, t.m).to_text(),
        corr_tail: tail.to_text(),
        terms: t.kept.to_records(),
    };
    let path = run.emit("truncation", &a.output, &toml::to_string(&doc).expect("document serializes"))?;
    println!(
        "kept {} terms, M = {}, Corr[1, M] = {}, Corr(M, {}] = {}",
        t.kept.len(),
        t.m,
        doc.corr_head,
        a.horizon,
        doc.corr_tail
    );
    println!("wrote {}", path.display());
    run.finish()?;
    if !tail.is_zero() || !within {
        return Err(Failure::Violation(format!("truncation certificate failed: within = {within}, tail = {}", doc.corr_tail)));
    }
    Ok(())
}

pub fn report(a: ReportArgs, out: PathBuf) -> Result<(), Failure> {
    let mut run = Run::new("report", out);
    for (k, p) in [("spec_s", &a.spec_s), ("cert_s", &a.cert_s), ("spec_t", &a.spec_t), ("cert_t", &a.cert_t)] {
        run.input(k, p);
    }
    let (spec_s, spec_t) = (load(&a.spec_s, RankOneSpec::from_toml)?, load(&a.spec_t, RankOneSpec::from_toml)?);
    let (cert_s, cert_t) = (load_cert(&a.cert_s)?, load_cert(&a.cert_t)?);
    let v = verify_pair(&spec_s, &spec_t, &cert_s, &cert_t)?;
    let h = cert_s.horizon;
    let mut md = String::new();
    let w = &mut md;
    writeln!(w, "# Pair report\n").unwrap();
    writeln!(w, "- horizon: {h}\n- n0: {}\n- verification: {}", v.n0, if v.passed() { "PASS" } else { "FAIL" }).unwrap();
    if let Some(n) = v.first_violated_n() {
        writeln!(w, "- first violated n: {n}").unwrap();
    }
    let corr = corr_functional(&v.product, 1, h as i64)?;
    writeln!(w, "- product Corr over [1, {h}]: [{}, {}]", corr.lower.to_text(), corr.upper.to_text()).unwrap();
    for (name, spec, cert) in [("S", &spec_s, &cert_s), ("T", &spec_t, &cert_t)] {
        writeln!(w, "\n## {name}\n").unwrap();
        writeln!(w, "heights: {:?}\n", spec.heights()?).unwrap();
        writeln!(w, "| claim | interval | verdict |\n|---|---|---|").unwrap();
        for c in &cert.zero_intervals {
            let verdict = match &c.verdict {
                Verdict::ExactZero => "exact zero".to_string(),
                Verdict::Violated { first_n } => format!("violated at {first_n}"),
            };
            writeln!(w, "| {} | {} | {verdict} |", c.source, c.interval).unwrap();
        }
        if !cert.rigidity_times.is_empty() {
            writeln!(w, "\n| rigidity time | cuts | (f, T^t f) >= | target |\n|---|---|---|---|").unwrap();
            for r in &cert.rigidity_times {
                writeln!(w, "| {} | {} | {} | {} |", r.time, r.cuts, r.lower.to_text(), r.target.to_text()).unwrap();
            }
        }
        if !cert.polynomial_claims.is_empty() {
            writeln!(w, "\n| time | poly | deviation | bound |\n|---|---|---|---|").unwrap();
            for p in &cert.polynomial_claims {
                writeln!(w, "| {} | {} | {} | {} |", p.time, p.poly, p.deviation.to_text(), p.bound.to_text()).unwrap();
            }
        }
    }
    writeln!(w, "\n## Not certified\n").unwrap();
    for u in &cert_s.unverified {
        writeln!(w, "- {u}").unwrap();
    }
    let path = run.emit("report", &a.output, &md)?;
    println!("wrote {}", path.display());
    run.finish()
}

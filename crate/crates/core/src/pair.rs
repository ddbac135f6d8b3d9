//! Planning stage sequences for the pair `(S, T)` from an interval schedule.
//!
//! `S` receives a blocking stage for every `I_k` and generic stages inside
//! `Ĩ_k`; `T` receives blocking stages for every `J_k` and generic stages
//! inside `J̃_k`. A blocking stage puts `max(F)` spacers atop *every* column:
//! new occurrence distances then exceed `max(F)`, and the tower keeps at least
//! `max(F)` levels of padding above its last occurrence, so every later stage
//! also only creates distances beyond `max(F)`. The tracked autocorrelation is
//! therefore exactly zero on `F` minus the distances that already existed.
//!
//! Certificates are produced by running the correlation module at tolerance
//! zero and can be re-checked with [`verify`] / [`verify_pair`].

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::correlation::{
    autocorrelation_sequence, cross_correlation_best, product_correlation, Bounds, CorrelationSequence,
};
use crate::error::{Error, Result};
use crate::rank1::{LevelFunction, RankOneSpec, StageSpec};
use crate::scalar::{max_of, rational_text, Rational, Scalar};
use crate::schedule::{validate_schedule, Interval, IntervalSchedule};

/// `sum_z a_z T^z` with `a_z >= 0` and `sum a_z <= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PolyTerm>", into = "Vec<PolyTerm>")]
pub struct PolynomialSpec {
    coefficients: BTreeMap<i64, Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub z: i64,
    #[serde(with = "rational_text")]
    pub a: Rational,
}

impl TryFrom<Vec<PolyTerm>> for PolynomialSpec {
    type Error = Error;

    fn try_from(terms: Vec<PolyTerm>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in terms {
            if map.insert(t.z, t.a).is_some() {
                return Err(Error::InvalidPolynomial(format!("z = {} listed twice", t.z)));
            }
        }
        Self::new(map)
    }
}

impl From<PolynomialSpec> for Vec<PolyTerm> {
    fn from(p: PolynomialSpec) -> Self {
        p.coefficients.into_iter().map(|(z, a)| PolyTerm { z, a }).collect()
    }
}

impl PolynomialSpec {
    pub fn new(coefficients: BTreeMap<i64, Rational>) -> Result<Self> {
        if let Some((z, a)) = coefficients.iter().find(|(_, a)| a.is_negative()) {
            return Err(Error::InvalidPolynomial(format!("a_{z} = {} is negative", a.to_text())));
        }
        let coefficients: BTreeMap<_, _> = coefficients.into_iter().filter(|(_, a)| !a.is_zero()).collect();
        let p = Self { coefficients };
        if p.mass() > Rational::one() {
            return Err(Error::InvalidPolynomial(format!("total mass {} exceeds 1", p.mass().to_text())));
        }
        Ok(p)
    }

    /// The identity `T^0`: the polynomial of a rigidity time.
    pub fn delta0() -> Self {
        Self {
            coefficients: BTreeMap::from([(0, Rational::one())]),
        }
    }

    pub fn coefficients(&self) -> &BTreeMap<i64, Rational> {
        &self.coefficients
    }

    pub fn mass(&self) -> Rational {
        self.coefficients.values().fold(Rational::zero(), |a, b| a + b)
    }

    pub fn is_delta0(&self) -> bool {
        *self == Self::delta0()
    }

    /// Mass exactly one, as required on a probability space.
    pub fn check_probability(&self) -> Result<()> {
        if self.mass().is_one() {
            Ok(())
        } else {
            Err(Error::InvalidPolynomial(format!("mass {} is not 1", self.mass().to_text())))
        }
    }
}

impl fmt::Display for PolynomialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coefficients
            .iter()
            .map(|(z, a)| format!("{}·T^{z}", a.to_text()))
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

/// Column counts realizing a polynomial with `cuts` columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    pub counts: BTreeMap<i64, u64>,
    /// Columns carrying the escape filler (the missing mass `1 - sum a_z`).
    pub filler: u64,
    /// `sum_z |count_z / cuts - a_z|`.
    pub rounding_mass: Rational,
}

/// Largest-remainder apportionment of `cuts` columns among the `a_z` and the
/// filler `1 - sum a_z`; ties go to smaller `z`, the filler last.
pub fn realize_histogram(poly: &PolynomialSpec, cuts: usize) -> Result<Histogram> {
    if cuts < 2 {
        return Err(Error::InvalidArgument(format!("cuts = {cuts} < 2")));
    }
    if let Some(z) = poly.coefficients.keys().find(|z| **z < 0) {
        return Err(Error::InvalidPolynomial(format!(
            "T^{z} needs a negative spacer and cannot be realized by stacking"
        )));
    }
    let r = Rational::from_integer(cuts.into());
    let mut shares: Vec<(Option<i64>, Rational)> = poly
        .coefficients
        .iter()
        .map(|(z, a)| (Some(*z), a * &r))
        .collect();
    shares.push((None, (Rational::one() - poly.mass()) * &r));

    let mut counts: Vec<u64> = shares
        .iter()
        .map(|(_, s)| s.floor().to_integer().try_into().expect("share below cuts"))
        .collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| shares[b].1.fract().cmp(&shares[a].1.fract()).then(a.cmp(&b)));
    for &idx in order.iter().take((cuts as u64 - assigned) as usize) {
        counts[idx] += 1;
    }

    let filler = counts.pop().expect("filler share");
    let mut rounding_mass = Rational::zero();
    let mut out = BTreeMap::new();
    for ((z, a), c) in poly.coefficients.iter().zip(counts) {
        rounding_mass += (Rational::from_integer(c.into()) / &r - a).abs();
        if c > 0 {
            out.insert(*z, c);
        }
    }
    Ok(Histogram {
        counts: out,
        filler,
        rounding_mass,
    })
}

/// Stage with `cuts` columns each topped by `max(forbidden)` spacers.
///
/// Every new occurrence distance is at least `h + max(F) - (h - 1) > max(F)`
/// and the top padding afterwards is at least `max(F)`.
pub fn design_blocking_stage(current_height: u64, forbidden: Interval, cuts: usize) -> Result<StageSpec> {
    if current_height == 0 {
        return Err(Error::InvalidArgument("current height must be at least 1".into()));
    }
    if cuts < 2 {
        return Err(Error::InvalidArgument(format!("cuts = {cuts} < 2")));
    }
    if forbidden.end < current_height {
        return Err(Error::OrderingViolated {
            start: forbidden.start,
            end: forbidden.end,
            height: current_height,
        });
    }
    Ok(StageSpec::new(vec![forbidden.end; cuts]))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenericDesign {
    pub stage: StageSpec,
    pub histogram: Histogram,
}

/// Stage whose spacer multiset realizes `poly`: `count_z` columns with `z`
/// spacers (ascending), then filler columns with `current_height` spacers, so
/// that `T^h` sends a filler column into its own spacer block.
pub fn design_generic_stage(
    current_height: u64,
    budget: Interval,
    poly: &PolynomialSpec,
    cuts: usize,
) -> Result<GenericDesign> {
    let histogram = realize_histogram(poly, cuts)?;
    let mut spacers = Vec::with_capacity(cuts);
    for (z, c) in &histogram.counts {
        spacers.extend(std::iter::repeat_n(*z as u64, *c as usize));
    }
    spacers.extend(std::iter::repeat_n(current_height, histogram.filler as usize));
    let stage = StageSpec::new(spacers);
    if !budget.contains(current_height) {
        return Err(Error::BudgetTooSmall(format!(
            "height {current_height} is outside the window {budget}"
        )));
    }
    let next = stage.next_height(current_height)?;
    if next > budget.end {
        return Err(Error::BudgetTooSmall(format!(
            "next height {next} exceeds the window {budget}"
        )));
    }
    Ok(GenericDesign { stage, histogram })
}

/// Knobs of [`plan_pair`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairPolicy {
    pub blocking_cuts: usize,
    pub generic_cuts: usize,
    pub max_generic_per_block: usize,
    pub poly: PolynomialSpec,
    /// Append one more blocking stage over `(max distance, horizon]` when the
    /// last scheduled block ends below the horizon.
    pub close_horizon: bool,
    /// Tracked functions are `1_{B_k}` for this `k`.
    pub tracked_stage: usize,
    pub base_height: u64,
}

impl Default for PairPolicy {
    fn default() -> Self {
        Self {
            blocking_cuts: 2,
            generic_cuts: 4,
            max_generic_per_block: 2,
            poly: PolynomialSpec::delta0(),
            close_horizon: true,
            tracked_stage: 1,
            base_height: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    ExactZero,
    Violated { first_n: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroClaim {
    /// Schedule interval that asked for the claim (`I_2`, `J_1`, `closing`).
    pub source: String,
    pub interval: Interval,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigidityClaim {
    pub stage: usize,
    pub time: u64,
    pub cuts: usize,
    /// Certified lower bound of `(f, T^time f)`.
    #[serde(with = "rational_text")]
    pub lower: Rational,
    /// `(1 - 1/cuts) ‖f‖²`.
    #[serde(with = "rational_text")]
    pub target: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialClaim {
    pub stage: usize,
    pub time: u64,
    pub cuts: usize,
    pub poly: PolynomialSpec,
    #[serde(with = "rational_text")]
    pub rounding_mass: Rational,
    /// Certified bound on `|(f, T^time f) - sum a_z (f, T^{-z} f)|`.
    #[serde(with = "rational_text")]
    pub deviation: Rational,
    /// `‖f‖² (2 / cuts + rounding_mass)`.
    #[serde(with = "rational_text")]
    pub bound: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub stage: usize,
    pub height: u64,
    pub max_distance: u64,
    pub min_gap_spacer: u64,
    /// `height + min_gap_spacer - max_distance`: no pair of occurrences in
    /// different columns is closer than this.
    pub min_new_distance: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackedTerm {
    pub level: u64,
    #[serde(with = "rational_text")]
    pub coefficient: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackedFunction {
    pub stage: usize,
    pub terms: Vec<TrackedTerm>,
}

impl TrackedFunction {
    pub fn from_level_function(f: &LevelFunction<Rational>) -> Self {
        Self {
            stage: f.stage,
            terms: f
                .levels
                .iter()
                .map(|(l, c)| TrackedTerm {
                    level: *l,
                    coefficient: c.clone(),
                })
                .collect(),
        }
    }

    pub fn to_level_function(&self) -> Result<LevelFunction<Rational>> {
        LevelFunction::new(
            self.stage,
            self.terms.iter().map(|t| (t.level, t.coefficient.clone())).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionCertificate {
    pub factor: String,
    pub horizon: u64,
    /// Every `n` in `[n0, horizon]` lies in an exact-zero claim of one factor.
    pub n0: u64,
    pub tracked: TrackedFunction,
    pub zero_intervals: Vec<ZeroClaim>,
    pub rigidity_times: Vec<RigidityClaim>,
    pub polynomial_claims: Vec<PolynomialClaim>,
    pub min_distance_ledger: Vec<DistanceEntry>,
    /// Properties that have no finite certificate; recorded, never checked.
    pub unverified: Vec<String>,
}

impl ConstructionCertificate {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("certificate serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairPlan {
    pub spec_s: RankOneSpec,
    pub spec_t: RankOneSpec,
    pub cert_s: ConstructionCertificate,
    pub cert_t: ConstructionCertificate,
    pub f: LevelFunction<Rational>,
    pub g: LevelFunction<Rational>,
    pub n0: u64,
}

#[derive(Clone, Debug)]
enum Event {
    Block(String, Interval),
    Window(Interval),
}

#[derive(Clone, Debug)]
enum Role {
    Blocking,
    Generic(PolynomialSpec, Histogram),
}

/// Incremental stage builder for one factor.
struct Builder<'a> {
    policy: &'a PairPolicy,
    stages: Vec<StageSpec>,
    roles: Vec<Role>,
    height: u64,
    /// Occurrences of the tracked level once its tower exists.
    positions: Option<Vec<u64>>,
    claims: Vec<(String, Interval)>,
    last_block_end: Option<u64>,
}

impl<'a> Builder<'a> {
    fn new(policy: &'a PairPolicy) -> Self {
        Self {
            policy,
            stages: Vec::new(),
            roles: Vec::new(),
            height: policy.base_height,
            positions: (policy.tracked_stage == 1).then(|| vec![0]),
            claims: Vec::new(),
            last_block_end: None,
        }
    }

    fn max_distance(&self) -> u64 {
        self.positions.as_ref().and_then(|p| p.last().copied()).unwrap_or(0)
    }

    fn push(&mut self, stage: StageSpec, role: Role) -> Result<()> {
        let offsets = stage.offsets(self.height)?;
        if let Some(pos) = &self.positions {
            self.positions = Some(offsets.iter().flat_map(|o| pos.iter().map(move |p| p + o)).collect());
        }
        self.height = stage.next_height(self.height)?;
        self.stages.push(stage);
        self.roles.push(role);
        if self.positions.is_none() && self.stages.len() + 1 == self.policy.tracked_stage {
            self.positions = Some(vec![0]);
        }
        Ok(())
    }

    fn block(&mut self, index: usize, source: String, forbidden: Interval) -> Result<()> {
        let maxdist = self.max_distance();
        if forbidden.end <= maxdist {
            return Err(Error::IncompatibleGeometry {
                block: index,
                detail: format!("{source} = {forbidden} lies below the existing distance {maxdist}"),
            });
        }
        // Spacers of at least the tower height keep every new distance above
        // the block and pad the top by at least its end.
        let padded = Interval::new(forbidden.start, forbidden.end.max(self.height)).expect("start <= end");
        let stage = design_blocking_stage(self.height, padded, self.policy.blocking_cuts)?;
        self.push(stage, Role::Blocking)?;
        let claim = Interval::new(forbidden.start.max(maxdist + 1), forbidden.end).expect("maxdist < end");
        self.claims.push((source, claim));
        self.last_block_end = Some(forbidden.end);
        Ok(())
    }

    fn window(&mut self, window: Interval) -> Result<()> {
        for _ in 0..self.policy.max_generic_per_block {
            match design_generic_stage(self.height, window, &self.policy.poly, self.policy.generic_cuts) {
                Ok(d) => self.push(d.stage, Role::Generic(self.policy.poly.clone(), d.histogram))?,
                Err(Error::BudgetTooSmall(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn run(mut self, events: &[Event], horizon: u64) -> Result<Self> {
        let mut blocks = 0;
        for ev in events {
            match ev {
                Event::Block(src, iv) => {
                    blocks += 1;
                    self.block(blocks, src.clone(), *iv)?;
                }
                Event::Window(iv) => self.window(*iv)?,
            }
        }
        if self.policy.close_horizon && self.last_block_end.is_some_and(|e| e < horizon) {
            let start = self.max_distance() + 1;
            if let Some(iv) = Interval::new(start, horizon) {
                self.block(blocks + 1, "closing".into(), iv)?;
            }
        }
        Ok(self)
    }
}

/// First `n` in `iv` where the sequence is not exactly zero.
fn first_nonzero(seq: &CorrelationSequence<Rational>, iv: Interval) -> Option<u64> {
    iv.iter().find(|&n| !seq.get(n as i64).is_some_and(Bounds::is_exact_zero))
}

fn value_at(
    seq: &CorrelationSequence<Rational>,
    spec: &RankOneSpec,
    f: &LevelFunction<Rational>,
    n: i64,
) -> Result<Bounds<Rational>> {
    match seq.get(n) {
        Some(b) => Ok(b.clone()),
        None => cross_correlation_best(spec, f, f, n),
    }
}

/// `max(|x - y|)` over `x in a`, `y in b`.
fn max_deviation(a: &Bounds<Rational>, b: &Bounds<Rational>) -> Rational {
    max_of(&a.upper - &b.lower, &b.upper - &a.lower)
}

fn generic_claims(
    spec: &RankOneSpec,
    roles: &[Role],
    f: &LevelFunction<Rational>,
    seq: &CorrelationSequence<Rational>,
) -> Result<(Vec<RigidityClaim>, Vec<PolynomialClaim>)> {
    let norm = f.norm_sq(spec)?;
    let heights = spec.heights()?;
    let (mut rig, mut polys) = (Vec::new(), Vec::new());
    for (idx, role) in roles.iter().enumerate() {
        let Role::Generic(poly, hist) = role else { continue };
        let stage = idx + 1;
        if stage < f.stage {
            continue;
        }
        let time = heights[idx];
        let cuts = spec.stages[idx].cuts;
        let at = value_at(seq, spec, f, time as i64)?;
        if poly.is_delta0() {
            let r = Rational::from_integer(cuts.into());
            rig.push(RigidityClaim {
                stage,
                time,
                cuts,
                lower: at.lower.clone(),
                target: (Rational::one() - r.recip()) * &norm,
            });
        }
        let target = poly_target(poly, |z| value_at(seq, spec, f, -z))?;
        polys.push(PolynomialClaim {
            stage,
            time,
            cuts,
            poly: poly.clone(),
            rounding_mass: hist.rounding_mass.clone(),
            deviation: max_deviation(&at, &target),
            bound: &norm * bound_factor(cuts, &hist.rounding_mass),
        });
    }
    Ok((rig, polys))
}

fn bound_factor(cuts: usize, rounding_mass: &Rational) -> Rational {
    Rational::new(2.into(), cuts.into()) + rounding_mass
}

fn poly_target(
    poly: &PolynomialSpec,
    mut corr: impl FnMut(i64) -> Result<Bounds<Rational>>,
) -> Result<Bounds<Rational>> {
    let mut acc = Bounds::zero();
    for (z, a) in &poly.coefficients {
        acc = acc.add(&corr(*z)?.scale(a));
    }
    Ok(acc)
}

fn distance_ledger(spec: &RankOneSpec, tracked_stage: usize) -> Result<Vec<DistanceEntry>> {
    let heights = spec.heights()?;
    let mut out = Vec::new();
    let mut positions: Option<Vec<u64>> = (tracked_stage == 1).then(|| vec![0]);
    for (idx, st) in spec.stages.iter().enumerate() {
        let h = heights[idx];
        let max_distance = positions.as_ref().and_then(|p| p.last().copied()).unwrap_or(0);
        let min_gap_spacer = st.spacers[..st.cuts - 1].iter().copied().min().unwrap_or(0);
        out.push(DistanceEntry {
            stage: idx + 1,
            height: h,
            max_distance,
            min_gap_spacer,
            min_new_distance: (h + min_gap_spacer) as i64 - max_distance as i64,
        });
        let offsets = st.offsets(h)?;
        positions = match positions {
            Some(p) => Some(offsets.iter().flat_map(|o| p.iter().map(move |x| x + o)).collect()),
            None if idx + 2 == tracked_stage => Some(vec![0]),
            None => None,
        };
    }
    Ok(out)
}

/// Smallest `n0` such that `[n0, horizon]` is inside the union of the
/// exact-zero claims; `horizon + 1` when `horizon` itself is uncovered.
pub fn threshold(claims: &[&ZeroClaim], horizon: u64) -> u64 {
    let mut ivs: Vec<Interval> = claims
        .iter()
        .filter(|c| c.verdict == Verdict::ExactZero)
        .map(|c| c.interval)
        .collect();
    ivs.sort_by_key(|iv| std::cmp::Reverse(iv.end));
    let mut n0 = horizon + 1;
    loop {
        let reach = ivs
            .iter()
            .filter(|iv| iv.end + 1 >= n0 && iv.start < n0)
            .map(|iv| iv.start)
            .min();
        match reach {
            Some(s) => n0 = s,
            None => return n0.max(1),
        }
    }
}

const UNVERIFIED: &[&str] = &[
    "simple spectrum of the factor (no finite certificate exists)",
    "simple spectrum of every symmetric power",
    "simple spectrum of the Gaussian and Poisson extensions",
    "Lebesgue spectrum of the product on the full orthocomplement of the coordinate spaces",
    "zero correlations for a dense family of vectors (only the tracked function is certified)",
];

fn certify(
    factor: &str,
    spec: &RankOneSpec,
    roles: &[Role],
    f: &LevelFunction<Rational>,
    claims: &[(String, Interval)],
    horizon: u64,
) -> Result<(ConstructionCertificate, CorrelationSequence<Rational>)> {
    let seq = autocorrelation_sequence(spec, f, horizon, None)?;
    let zero_intervals = claims
        .iter()
        .map(|(src, iv)| ZeroClaim {
            source: src.clone(),
            interval: *iv,
            verdict: match first_nonzero(&seq, *iv) {
                None => Verdict::ExactZero,
                Some(n) => Verdict::Violated { first_n: n },
            },
        })
        .collect();
    let (rigidity_times, polynomial_claims) = generic_claims(spec, roles, f, &seq)?;
    let cert = ConstructionCertificate {
        factor: factor.into(),
        horizon,
        n0: 0,
        tracked: TrackedFunction::from_level_function(f),
        zero_intervals,
        rigidity_times,
        polynomial_claims,
        min_distance_ledger: distance_ledger(spec, f.stage)?,
        unverified: UNVERIFIED.iter().map(|s| s.to_string()).collect(),
    };
    Ok((cert, seq))
}

/// Builds `S` and `T` from a valid schedule and certifies both.
pub fn plan_pair(schedule: &IntervalSchedule, policy: &PairPolicy) -> Result<PairPlan> {
    let report = validate_schedule(schedule);
    if !report.is_valid() {
        return Err(Error::InfeasibleSchedule(report.violations.join("; ")));
    }
    if policy.tracked_stage == 0 || policy.base_height == 0 {
        return Err(Error::InvalidArgument("tracked stage and base height must be at least 1".into()));
    }
    let mut s_events = Vec::new();
    let mut t_events = Vec::new();
    for (k, b) in schedule.blocks.iter().enumerate() {
        let n = k + 1;
        s_events.push(Event::Block(format!("I_{n}"), b.i));
        s_events.extend(b.i_tilde.map(Event::Window));
        t_events.extend(b.j_tilde.map(Event::Window));
        if let Some(j) = b.j {
            t_events.push(Event::Block(format!("J_{n}"), j));
        }
    }
    let horizon = schedule.horizon;
    let s = Builder::new(policy).run(&s_events, horizon)?;
    let t = Builder::new(policy).run(&t_events, horizon)?;

    let finish = |b: &Builder| -> Result<(RankOneSpec, LevelFunction<Rational>)> {
        let spec = RankOneSpec::new(policy.base_height, b.stages.clone());
        if policy.tracked_stage > spec.max_depth() {
            return Err(Error::InvalidArgument(format!(
                "tracked stage {} exceeds the planned depth {}",
                policy.tracked_stage,
                spec.max_depth()
            )));
        }
        Ok((spec, LevelFunction::base_indicator(policy.tracked_stage)))
    };
    let (spec_s, f) = finish(&s)?;
    let (spec_t, g) = finish(&t)?;
    let (mut cert_s, _) = certify("S", &spec_s, &s.roles, &f, &s.claims, horizon)?;
    let (mut cert_t, _) = certify("T", &spec_t, &t.roles, &g, &t.claims, horizon)?;
    let all: Vec<&ZeroClaim> = cert_s.zero_intervals.iter().chain(&cert_t.zero_intervals).collect();
    let n0 = threshold(&all, horizon);
    cert_s.n0 = n0;
    cert_t.n0 = n0;
    Ok(PairPlan {
        spec_s,
        spec_t,
        cert_s,
        cert_t,
        f,
        g,
        n0,
    })
}

/// Certified bound on `|(f, T^time g) - sum_z a_z (f, T^{-z} g)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialCheck {
    pub stage: usize,
    pub cuts: usize,
    pub deviation: Rational,
    pub rounding_mass: Rational,
    /// `2 / cuts + rounding_mass`.
    pub factor: Rational,
    pub norm_sq_f: Rational,
    pub norm_sq_g: Rational,
}

impl PolynomialCheck {
    /// `deviation <= ‖f‖ ‖g‖ · factor`, compared through squares.
    pub fn within_bound(&self) -> bool {
        &self.deviation * &self.deviation <= &self.norm_sq_f * &self.norm_sq_g * &self.factor * &self.factor
    }
}

/// Checks the weak limit at a generic stage height `time` against `poly`.
pub fn verify_polynomial_limit(
    spec: &RankOneSpec,
    time: u64,
    poly: &PolynomialSpec,
    f: &LevelFunction<Rational>,
    g: &LevelFunction<Rational>,
) -> Result<PolynomialCheck> {
    let heights = spec.heights()?;
    let mut found = None;
    for (idx, st) in spec.stages.iter().enumerate() {
        if heights[idx] != time {
            continue;
        }
        let Ok(hist) = realize_histogram(poly, st.cuts) else { continue };
        let mut expected: Vec<u64> = hist
            .counts
            .iter()
            .flat_map(|(z, c)| std::iter::repeat_n(*z as u64, *c as usize))
            .chain(std::iter::repeat_n(time, hist.filler as usize))
            .collect();
        let mut got = st.spacers.clone();
        expected.sort_unstable();
        got.sort_unstable();
        if expected == got {
            found = Some((idx + 1, st.cuts, hist));
            break;
        }
    }
    let (stage, cuts, hist) = found.ok_or(Error::NotGenericTime(time))?;
    let at = cross_correlation_best(spec, f, g, time as i64)?;
    let target = poly_target(poly, |z| cross_correlation_best(spec, f, g, -z))?;
    Ok(PolynomialCheck {
        stage,
        cuts,
        deviation: max_deviation(&at, &target),
        factor: bound_factor(cuts, &hist.rounding_mass),
        rounding_mass: hist.rounding_mass,
        norm_sq_f: f.norm_sq(spec)?,
        norm_sq_g: g.norm_sq(spec)?,
    })
}

/// Outcome of re-checking a certificate against its spec.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    pub checked: usize,
    pub problems: Vec<String>,
    /// Smallest `n` at which a claimed exact zero fails.
    pub first_violated_n: Option<u64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }

    fn violated_at(&mut self, n: u64) {
        self.first_violated_n = Some(self.first_violated_n.map_or(n, |m| m.min(n)));
    }
}

/// Recomputes every verdict, rigidity bound, polynomial bound and ledger
/// entry of `cert` from `spec` alone.
pub fn verify(spec: &RankOneSpec, cert: &ConstructionCertificate) -> Result<(VerificationReport, CorrelationSequence<Rational>)> {
    spec.check()?;
    let f = cert.tracked.to_level_function()?;
    let seq = autocorrelation_sequence(spec, &f, cert.horizon, None)?;
    let mut rep = VerificationReport::default();

    for claim in &cert.zero_intervals {
        rep.checked += 1;
        let actual = first_nonzero(&seq, claim.interval);
        match (&claim.verdict, actual) {
            (Verdict::ExactZero, Some(n)) => {
                rep.violated_at(n);
                rep.problems.push(format!(
                    "{} claim {}: correlation is not exactly zero at n = {n}",
                    claim.source, claim.interval
                ));
            }
            (Verdict::Violated { first_n }, None) => rep.problems.push(format!(
                "{} claim {}: recorded as violated at n = {first_n} but is exactly zero",
                claim.source, claim.interval
            )),
            (Verdict::Violated { first_n }, Some(n)) if *first_n != n => {
                rep.violated_at(n);
                rep.problems.push(format!(
                    "{} claim {}: recorded first violation {first_n}, actual {n}",
                    claim.source, claim.interval
                ));
            }
            (Verdict::Violated { first_n }, Some(_)) => {
                rep.violated_at(*first_n);
                rep.problems.push(format!(
                    "{} claim {}: violated at n = {first_n}",
                    claim.source, claim.interval
                ));
            }
            (Verdict::ExactZero, None) => {}
        }
    }

    let heights = spec.heights()?;
    let norm = f.norm_sq(spec)?;
    for rc in &cert.rigidity_times {
        rep.checked += 1;
        if rc.stage == 0 || rc.stage > spec.stages.len() || heights[rc.stage - 1] != rc.time {
            rep.problems.push(format!("rigidity time {} is not the height of stage {}", rc.time, rc.stage));
            continue;
        }
        let at = value_at(&seq, spec, &f, rc.time as i64)?;
        let target = (Rational::one() - Rational::new(1.into(), rc.cuts.into())) * &norm;
        if at.lower != rc.lower || target != rc.target {
            rep.problems.push(format!(
                "rigidity time {}: recorded ({}, {}) but recomputed ({}, {})",
                rc.time,
                rc.lower.to_text(),
                rc.target.to_text(),
                at.lower.to_text(),
                target.to_text()
            ));
        } else if at.lower < target {
            rep.problems.push(format!(
                "rigidity time {}: lower bound {} is below {}",
                rc.time,
                at.lower.to_text(),
                target.to_text()
            ));
        }
    }

    for pc in &cert.polynomial_claims {
        rep.checked += 1;
        match verify_polynomial_limit(spec, pc.time, &pc.poly, &f, &f) {
            Ok(chk) => {
                let bound = &norm * &chk.factor;
                if chk.deviation != pc.deviation || bound != pc.bound {
                    rep.problems.push(format!(
                        "polynomial claim at {}: recorded deviation {} (bound {}), recomputed {} (bound {})",
                        pc.time,
                        pc.deviation.to_text(),
                        pc.bound.to_text(),
                        chk.deviation.to_text(),
                        bound.to_text()
                    ));
                } else if !chk.within_bound() {
                    rep.problems.push(format!(
                        "polynomial claim at {}: deviation {} exceeds {}",
                        pc.time,
                        chk.deviation.to_text(),
                        bound.to_text()
                    ));
                }
            }
            Err(e) => rep.problems.push(format!("polynomial claim at {}: {e}", pc.time)),
        }
    }

    rep.checked += 1;
    let ledger = distance_ledger(spec, f.stage)?;
    if ledger != cert.min_distance_ledger {
        rep.problems.push("minimum-distance ledger does not match the spec".into());
    }
    Ok((rep, seq))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairVerification {
    pub s: VerificationReport,
    pub t: VerificationReport,
    pub n0: u64,
    /// First `n` in `[n0, horizon]` where the product is not exactly zero.
    pub product_first_nonzero: Option<u64>,
    pub product: CorrelationSequence<Rational>,
}

impl PairVerification {
    pub fn passed(&self) -> bool {
        self.s.passed() && self.t.passed() && self.product_first_nonzero.is_none()
    }

    pub fn first_violated_n(&self) -> Option<u64> {
        [self.s.first_violated_n, self.t.first_violated_n, self.product_first_nonzero]
            .into_iter()
            .flatten()
            .min()
    }
}

/// Verifies both certificates and the product vanishing on `[n0, horizon]`.
pub fn verify_pair(
    spec_s: &RankOneSpec,
    spec_t: &RankOneSpec,
    cert_s: &ConstructionCertificate,
    cert_t: &ConstructionCertificate,
) -> Result<PairVerification> {
    if cert_s.horizon != cert_t.horizon || cert_s.n0 != cert_t.n0 {
        return Err(Error::InvalidArgument("certificates disagree on horizon or n0".into()));
    }
    let (mut s, seq_s) = verify(spec_s, cert_s)?;
    let (t, seq_t) = verify(spec_t, cert_t)?;
    let all: Vec<&ZeroClaim> = cert_s.zero_intervals.iter().chain(&cert_t.zero_intervals).collect();
    let n0 = threshold(&all, cert_s.horizon);
    if n0 != cert_s.n0 {
        s.problems
            .push(format!("recorded n0 = {} but the claims give {n0}", cert_s.n0));
    }
    let product = product_correlation(&seq_s, &seq_t)?;
    let product_first_nonzero = Interval::new(cert_s.n0.max(1), cert_s.horizon).and_then(|iv| first_nonzero(&product, iv));
    Ok(PairVerification {
        s,
        t,
        n0: cert_s.n0,
        product_first_nonzero,
        product,
    })
}

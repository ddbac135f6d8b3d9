//! Exact correlation sequences `(f, T^n g)` of level functions.
//!
//! With `O` the occurrence set of tower `k` inside tower `N` and `w` the
//! level width of tower `N`, the part of the integral resolved inside tower
//! `N` is
//!
//! ```text
//! w * sum_{l, l'} c_l d_{l'} #{(a, b) in O x O : b - a = n + l - l'}
//! ```
//!
//! Points of the support that are within `n` levels of the top of tower `N`
//! are not resolved; their mass gives the certified gap. Deepening the tower
//! never widens the bracket.
//!
//! Everything here is a pure function of its inputs: concurrent calls share no
//! mutable state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank1::{OccurrenceSet, LevelFunction, RankOneSpec};
use crate::scalar::{max_of, min_of, Scalar};

/// Closed bracket `[lower, upper]` around an exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds<S> {
    pub lower: S,
    pub upper: S,
}

impl<S: Scalar> Bounds<S> {
    pub fn new(lower: S, upper: S) -> Self {
        debug_assert!(lower <= upper);
        Self { lower, upper }
    }

    pub fn exact(v: S) -> Self {
        Self {
            lower: v.clone(),
            upper: v,
        }
    }

    pub fn zero() -> Self {
        Self::exact(S::zero())
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn is_exact_zero(&self) -> bool {
        self.lower.is_zero() && self.upper.is_zero()
    }

    pub fn gap(&self) -> S {
        self.upper.clone() - self.lower.clone()
    }

    pub fn contains(&self, v: &S) -> bool {
        &self.lower <= v && v <= &self.upper
    }

    pub fn midpoint_f64(&self) -> f64 {
        (self.lower.to_f64_lossy() + self.upper.to_f64_lossy()) / 2.0
    }

    /// Bracket of `|x|` for `x` in `self`.
    pub fn abs(&self) -> Self {
        let (lo, hi) = (self.lower.abs(), self.upper.abs());
        if !self.lower.is_positive() && !self.upper.is_negative() {
            Self::new(S::zero(), max_of(lo, hi))
        } else {
            Self::new(min_of(lo.clone(), hi.clone()), max_of(lo, hi))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.lower.clone() + other.lower.clone(),
            self.upper.clone() + other.upper.clone(),
        )
    }

    /// Interval product.
    pub fn mul(&self, other: &Self) -> Self {
        let cands = [
            self.lower.clone() * other.lower.clone(),
            self.lower.clone() * other.upper.clone(),
            self.upper.clone() * other.lower.clone(),
            self.upper.clone() * other.upper.clone(),
        ];
        let lo = cands.iter().cloned().reduce(min_of).expect("four candidates");
        let hi = cands.into_iter().reduce(max_of).expect("four candidates");
        Self::new(lo, hi)
    }

    pub fn scale(&self, c: &S) -> Self {
        let (a, b) = (self.lower.clone() * c.clone(), self.upper.clone() * c.clone());
        if c.is_negative() {
            Self::new(b, a)
        } else {
            Self::new(a, b)
        }
    }
}

/// `n -> [lower, upper]` for a contiguous range of `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSequence<S> {
    pub start: i64,
    pub entries: Vec<Bounds<S>>,
    pub norm_sq_f: S,
    pub norm_sq_g: S,
    /// True for autocorrelations of real functions, which are even in `n`.
    pub symmetric: bool,
    pub subject: String,
}

impl<S: Scalar> CorrelationSequence<S> {
    /// A sequence given by exact values on `start..start + len`.
    pub fn from_values(start: i64, values: Vec<S>, norm_sq: S, subject: impl Into<String>) -> Self {
        Self {
            start,
            entries: values.into_iter().map(Bounds::exact).collect(),
            norm_sq_f: norm_sq.clone(),
            norm_sq_g: norm_sq,
            symmetric: true,
            subject: subject.into(),
        }
    }

    /// Last covered index.
    pub fn end(&self) -> i64 {
        self.start + self.entries.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> Option<&Bounds<S>> {
        let direct = |m: i64| {
            (m >= self.start && m <= self.end()).then(|| &self.entries[(m - self.start) as usize])
        };
        direct(n).or_else(|| if self.symmetric { direct(-n) } else { None })
    }

    pub fn covers(&self, a: i64, b: i64) -> bool {
        a > b || (self.get(a).is_some() && self.get(b).is_some() && (a..=b).all(|n| self.get(n).is_some()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Bounds<S>)> {
        self.entries
            .iter()
            .enumerate()
            .map(move |(i, e)| (self.start + i as i64, e))
    }

    pub fn is_exact(&self) -> bool {
        self.entries.iter().all(Bounds::is_exact)
    }

    pub fn max_gap(&self) -> S {
        self.entries
            .iter()
            .map(Bounds::gap)
            .fold(S::zero(), max_of)
    }

    /// Autocorrelation divided by `‖f‖²`, so that entry 0 is exactly 1.
    pub fn normalized(&self) -> Result<Self> {
        if self.norm_sq_f != self.norm_sq_g || !self.norm_sq_f.is_positive() {
            return Err(Error::InvalidArgument("only nonzero autocorrelations can be normalized".into()));
        }
        let inv = S::one() / self.norm_sq_f.clone();
        Ok(Self {
            start: self.start,
            entries: self.entries.iter().map(|e| e.scale(&inv)).collect(),
            norm_sq_f: S::one(),
            norm_sq_g: S::one(),
            symmetric: self.symmetric,
            subject: format!("normalized {}", self.subject),
        })
    }

    /// Delimited table `n,lower,upper` with lossless scalar text.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "lower", "upper"]).expect("in-memory write");
        for (n, e) in self.iter() {
            w.write_record([n.to_string(), e.lower.to_text(), e.upper.to_text()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Reads a table written by [`CorrelationSequence::to_csv`]. Rows must be
    /// contiguous in `n`. Norms are taken from the row `n = 0` when present.
    pub fn from_csv(text: &str, symmetric: bool, subject: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut start = None;
        let mut entries = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", row + 2)))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse(format!("row {}: missing column {i}", row + 2)));
            let n: i64 = field(0)?
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad n", row + 2)))?;
            let parse = |i: usize| -> Result<S> {
                let t = field(i)?;
                S::from_text(t).ok_or_else(|| Error::Parse(format!("row {}: bad value {t:?}", row + 2)))
            };
            let (lo, hi) = (parse(1)?, parse(2)?);
            if lo > hi {
                return Err(Error::Parse(format!("row {}: lower > upper", row + 2)));
            }
            let s = *start.get_or_insert(n);
            if n != s + entries.len() as i64 {
                return Err(Error::Parse(format!("row {}: n = {n} is not contiguous", row + 2)));
            }
            entries.push(Bounds::new(lo, hi));
        }
        let start = start.ok_or_else(|| Error::Parse("empty table".into()))?;
        let mut seq = Self {
            start,
            entries,
            norm_sq_f: S::zero(),
            norm_sq_g: S::zero(),
            symmetric,
            subject: subject.into(),
        };
        if let Some(e0) = seq.get(0).cloned() {
            seq.norm_sq_f = e0.upper.clone();
            seq.norm_sq_g = e0.upper;
        }
        Ok(seq)
    }

    pub fn to_document(&self) -> SequenceDocument {
        SequenceDocument {
            subject: self.subject.clone(),
            symmetric: self.symmetric,
            start: self.start,
            norm_sq_f: self.norm_sq_f.to_text(),
            norm_sq_g: self.norm_sq_g.to_text(),
            entries: self
                .iter()
                .map(|(n, e)| EntryDocument {
                    n,
                    lower: e.lower.to_text(),
                    upper: e.upper.to_text(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &SequenceDocument) -> Result<Self> {
        let parse = |t: &str| S::from_text(t).ok_or_else(|| Error::Parse(format!("bad scalar {t:?}")));
        let mut entries = Vec::with_capacity(doc.entries.len());
        for (i, e) in doc.entries.iter().enumerate() {
            if e.n != doc.start + i as i64 {
                return Err(Error::Parse(format!("entry n = {} is not contiguous", e.n)));
            }
            entries.push(Bounds::new(parse(&e.lower)?, parse(&e.upper)?));
        }
        Ok(Self {
            start: doc.start,
            entries,
            norm_sq_f: parse(&doc.norm_sq_f)?,
            norm_sq_g: parse(&doc.norm_sq_g)?,
            symmetric: doc.symmetric,
            subject: doc.subject.clone(),
        })
    }
}

/// Structured form of a [`CorrelationSequence`] with subject metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    pub subject: String,
    pub symmetric: bool,
    pub start: i64,
    pub norm_sq_f: String,
    pub norm_sq_g: String,
    pub entries: Vec<EntryDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryDocument {
    pub n: i64,
    pub lower: String,
    pub upper: String,
}

/// Re-expresses a level function of tower `k` as one of a deeper tower.
pub fn lift<S: Scalar>(spec: &RankOneSpec, f: &LevelFunction<S>, stage: usize) -> Result<LevelFunction<S>> {
    f.check(spec)?;
    if stage == f.stage {
        return Ok(f.clone());
    }
    let occ = crate::rank1::occurrence_set(spec, f.stage, stage)?;
    let mut levels = BTreeMap::new();
    for a in &occ.positions {
        for (l, c) in &f.levels {
            levels.insert(a + l, c.clone());
        }
    }
    LevelFunction::new(stage, levels)
}

/// Counts of occurrence pairs at each distance `0..=max_distance`.
pub fn pair_histogram(positions: &[u64], max_distance: u64) -> Vec<u64> {
    let mut hist = vec![0u64; max_distance as usize + 1];
    hist[0] = positions.len() as u64;
    for (i, &a) in positions.iter().enumerate() {
        for &b in &positions[i + 1..] {
            let d = b - a;
            if d > max_distance {
                break;
            }
            hist[d as usize] += 1;
        }
    }
    hist
}

/// Number of pairs `(a, b)` with `b - a = d`, by a sorted merge.
pub fn pair_count(positions: &[u64], d: u64) -> u64 {
    let mut count = 0;
    let mut j = 0;
    for &a in positions {
        let Some(t) = a.checked_add(d) else { break };
        while j < positions.len() && positions[j] < t {
            j += 1;
        }
        if j == positions.len() {
            break;
        }
        if positions[j] == t {
            count += 1;
        }
    }
    count
}

/// Both functions at a common stage with precomputed level pairings.
struct Pairing<S> {
    stage: usize,
    /// `l - l'` -> `sum c_l d_{l'}`.
    shifts: BTreeMap<i64, S>,
    f_abs: Vec<(u64, S)>,
    g_max: S,
    nonnegative: bool,
    same: bool,
    norm_sq_f: S,
    norm_sq_g: S,
}

impl<S: Scalar> Pairing<S> {
    fn new(spec: &RankOneSpec, f: &LevelFunction<S>, g: &LevelFunction<S>) -> Result<Self> {
        let stage = f.stage.max(g.stage);
        let same = f == g;
        let (f, g) = (lift(spec, f, stage)?, lift(spec, g, stage)?);
        let mut shifts = BTreeMap::new();
        for (l, c) in &f.levels {
            for (m, d) in &g.levels {
                let e = shifts.entry(*l as i64 - *m as i64).or_insert_with(S::zero);
                *e = e.clone() + c.clone() * d.clone();
            }
        }
        Ok(Self {
            stage,
            shifts,
            f_abs: f.levels.iter().map(|(l, c)| (*l, c.abs())).collect(),
            g_max: g.max_abs(),
            nonnegative: f.is_nonnegative() && g.is_nonnegative(),
            same,
            norm_sq_f: f.norm_sq(spec)?,
            norm_sq_g: g.norm_sq(spec)?,
        })
    }

    /// Number of support points (in units of one level) within `n` of the top,
    /// weighted by `|c_l|`.
    fn unresolved(&self, occ: &OccurrenceSet, n: u64) -> S {
        self.f_abs.iter().fold(S::zero(), |acc, (l, c)| {
            let cnt = match occ.height.checked_sub(l + n) {
                Some(th) => occ.count_at_or_above(th),
                None => occ.len(),
            };
            acc + c.clone() * S::from_count(cnt as u64)
        })
    }

    fn gap(&self, occ: &OccurrenceSet, n: u64) -> S {
        let e = self.unresolved(occ, n) * self.g_max.clone() * occ.width::<S>();
        if self.nonnegative {
            e
        } else {
            e.clone() + e
        }
    }

    fn bounds(&self, occ: &OccurrenceSet, n: u64, count: impl Fn(u64) -> u64) -> Bounds<S> {
        let w = occ.width::<S>();
        let mut resolved = S::zero();
        for (shift, c) in &self.shifts {
            let d = (n as i64 + shift).unsigned_abs();
            let k = count(d);
            if k > 0 {
                resolved = resolved + c.clone() * S::from_count(k);
            }
        }
        let resolved = resolved * w.clone();
        let e = self.unresolved(occ, n) * self.g_max.clone() * w;
        let (mut lo, mut hi) = if self.nonnegative {
            (resolved.clone(), resolved + e)
        } else {
            (resolved.clone() - e.clone(), resolved + e)
        };
        if self.same {
            let cs = self.norm_sq_f.clone();
            hi = min_of(hi, cs.clone());
            lo = max_of(lo, -cs);
        }
        Bounds::new(lo, hi)
    }
}

fn occurrences_until<S: Scalar>(
    spec: &RankOneSpec,
    pairing: &Pairing<S>,
    n: u64,
    tolerance: Option<&S>,
) -> Result<OccurrenceSet> {
    let mut occ = OccurrenceSet::base(spec, pairing.stage)?;
    loop {
        let gap = pairing.gap(&occ, n);
        let done = tolerance.is_some_and(|t| &gap <= t);
        if done || occ.depth == spec.max_depth() {
            if let Some(t) = tolerance {
                if &gap > t {
                    return Err(Error::ToleranceNotReached {
                        n,
                        achieved: gap.to_text(),
                    });
                }
            }
            return Ok(occ);
        }
        occ = occ.deepen(spec)?;
    }
}

/// `(f, T^n g)` bracketed at a fixed depth.
pub fn cross_correlation_at_depth<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    g: &LevelFunction<S>,
    n: u64,
    depth: usize,
) -> Result<Bounds<S>> {
    let pairing = Pairing::new(spec, f, g)?;
    let occ = crate::rank1::occurrence_set(spec, pairing.stage, depth)?;
    Ok(pairing.bounds(&occ, n, |d| pair_count(&occ.positions, d)))
}

pub fn autocorrelation_at_depth<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    n: u64,
    depth: usize,
) -> Result<Bounds<S>> {
    cross_correlation_at_depth(spec, f, f, n, depth)
}

/// `(f, T^n g)`, deepening until `upper - lower <= tolerance`.
pub fn cross_correlation<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    g: &LevelFunction<S>,
    n: i64,
    tolerance: &S,
) -> Result<Bounds<S>> {
    if n < 0 {
        return cross_correlation(spec, g, f, -n, tolerance);
    }
    let pairing = Pairing::new(spec, f, g)?;
    let n = n as u64;
    let occ = occurrences_until(spec, &pairing, n, Some(tolerance))?;
    Ok(pairing.bounds(&occ, n, |d| pair_count(&occ.positions, d)))
}

/// `(f, T^n f)`, deepening until `upper - lower <= tolerance`.
pub fn autocorrelation<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    n: i64,
    tolerance: &S,
) -> Result<Bounds<S>> {
    cross_correlation(spec, f, f, n.abs(), tolerance)
}

/// Tightest available bracket of `(f, T^n g)` (deepest tower).
pub fn cross_correlation_best<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    g: &LevelFunction<S>,
    n: i64,
) -> Result<Bounds<S>> {
    if n < 0 {
        return cross_correlation_best(spec, g, f, -n);
    }
    cross_correlation_at_depth(spec, f, g, n as u64, spec.max_depth())
}

/// `(f, T^n g)` for `n in 0..=max_n`. With a tolerance the shallowest
/// sufficient depth is used (error if none suffices); without one the deepest.
pub fn cross_correlation_sequence<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    g: &LevelFunction<S>,
    max_n: u64,
    tolerance: Option<&S>,
) -> Result<CorrelationSequence<S>> {
    let pairing = Pairing::new(spec, f, g)?;
    let occ = occurrences_until(spec, &pairing, max_n, tolerance)?;
    let max_shift = pairing
        .shifts
        .keys()
        .map(|s| s.unsigned_abs())
        .max()
        .unwrap_or(0);
    let hist = pair_histogram(&occ.positions, max_n + max_shift);
    let entries = (0..=max_n)
        .map(|n| pairing.bounds(&occ, n, |d| hist[d as usize]))
        .collect();
    let subject = if pairing.same {
        format!("autocorrelation of a stage-{} level function at depth {}", pairing.stage, occ.depth)
    } else {
        format!("cross-correlation of stage-{} level functions at depth {}", pairing.stage, occ.depth)
    };
    Ok(CorrelationSequence {
        start: 0,
        entries,
        norm_sq_f: pairing.norm_sq_f,
        norm_sq_g: pairing.norm_sq_g,
        symmetric: pairing.same,
        subject,
    })
}

pub fn autocorrelation_sequence<S: Scalar>(
    spec: &RankOneSpec,
    f: &LevelFunction<S>,
    max_n: u64,
    tolerance: Option<&S>,
) -> Result<CorrelationSequence<S>> {
    cross_correlation_sequence(spec, f, f, max_n, tolerance)
}

/// Brackets `sum_{n in [a, b]} |(R^n h, h)|`.
pub fn corr_functional<S: Scalar>(seq: &CorrelationSequence<S>, a: i64, b: i64) -> Result<Bounds<S>> {
    let mut acc = Bounds::zero();
    for n in a..=b {
        let e = seq.get(n).ok_or(Error::NotCovered { start: a, end: b })?;
        acc = acc.add(&e.abs());
    }
    Ok(acc)
}

/// One interval of a correlation budget.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetLine<S> {
    pub start: i64,
    pub end: i64,
    pub corr: Bounds<S>,
    pub budget: S,
    /// `corr.upper < budget`.
    pub within: bool,
}

/// Assigns `eps / 2^{k+1}` to the `k`-th interval (from `k = 1`), so the
/// budgets sum to less than `eps / 2`, and checks each `Corr` against it.
pub fn interval_budgets<S: Scalar>(
    seq: &CorrelationSequence<S>,
    intervals: &[(i64, i64)],
    eps: &S,
) -> Result<Vec<BudgetLine<S>>> {
    if !eps.is_positive() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let two = S::one() + S::one();
    let mut budget = eps.clone() / two.clone();
    intervals
        .iter()
        .map(|&(start, end)| {
            budget = budget.clone() / two.clone();
            let corr = corr_functional(seq, start, end)?;
            Ok(BudgetLine {
                start,
                end,
                within: corr.upper < budget,
                corr,
                budget: budget.clone(),
            })
        })
        .collect()
}

/// Entrywise product: the correlation sequence of `f (x) g` under `S x T`.
pub fn product_correlation<S: Scalar>(
    s: &CorrelationSequence<S>,
    t: &CorrelationSequence<S>,
) -> Result<CorrelationSequence<S>> {
    let start = s.start.max(t.start);
    let end = s.end().min(t.end());
    if start > end {
        return Err(Error::NotCovered {
            start: s.start,
            end: t.end(),
        });
    }
    let entries = (start..=end)
        .map(|n| {
            let (a, b) = (s.get(n).expect("in range"), t.get(n).expect("in range"));
            if a.is_exact_zero() || b.is_exact_zero() {
                Bounds::zero()
            } else {
                a.mul(b)
            }
        })
        .collect();
    Ok(CorrelationSequence {
        start,
        entries,
        norm_sq_f: s.norm_sq_f.clone() * t.norm_sq_f.clone(),
        norm_sq_g: s.norm_sq_g.clone() * t.norm_sq_g.clone(),
        symmetric: s.symmetric && t.symmetric,
        subject: format!("product of [{}] and [{}]", s.subject, t.subject),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank1::StageSpec;
    use crate::scalar::{rat, Rational};
    use num_traits::{One, Zero};

    fn two_stage() -> RankOneSpec {
        RankOneSpec::new(1, vec![StageSpec::new(vec![1, 0]), StageSpec::new(vec![4, 0])])
    }

    #[test]
    fn zero_lag_is_norm() {
        let spec = two_stage();
        let f = LevelFunction::<Rational>::base_indicator(1);
        let b = autocorrelation(&spec, &f, 0, &Rational::zero()).unwrap();
        assert_eq!(b, Bounds::exact(rat(1, 1)));
        let g = LevelFunction::new(2, BTreeMap::from([(0, rat(2, 1)), (2, rat(-1, 3))])).unwrap();
        let b = autocorrelation(&spec, &g, 0, &Rational::zero()).unwrap();
        assert_eq!(b, Bounds::exact(g.norm_sq(&spec).unwrap()));
    }

    #[test]
    fn pair_count_bracket_example() {
        let spec = two_stage();
        let f = LevelFunction::<Rational>::base_indicator(1);
        let b = autocorrelation_at_depth(&spec, &f, 2, 3).unwrap();
        assert_eq!(b.lower, rat(1, 2));
        assert_eq!(b.upper, rat(3, 4));
        assert!(matches!(
            autocorrelation(&spec, &f, 2, &rat(1, 8)),
            Err(Error::ToleranceNotReached { .. })
        ));
        assert_eq!(autocorrelation(&spec, &f, 2, &rat(1, 4)).unwrap(), b);
    }

    #[test]
    fn odometer_even_levels_never_meet_at_odd_lag() {
        let spec = RankOneSpec::odometer(2, 4);
        let f = LevelFunction::<Rational>::base_indicator(2);
        assert_eq!(f.norm_sq(&spec).unwrap(), rat(1, 2));
        let b = autocorrelation(&spec, &f, 1, &Rational::zero()).unwrap();
        assert!(b.is_exact_zero());
    }

    #[test]
    fn disjoint_levels_are_orthogonal() {
        let spec = two_stage();
        let f = LevelFunction::<Rational>::indicator(2, 0);
        let g = LevelFunction::<Rational>::indicator(2, 1);
        assert!(cross_correlation(&spec, &f, &g, 0, &Rational::zero())
            .unwrap()
            .is_exact_zero());
        // The spacer level is exactly one step above the base.
        assert_eq!(
            cross_correlation(&spec, &f, &g, 1, &Rational::zero()).unwrap(),
            Bounds::exact(rat(1, 2))
        );
        // (f, T^{-1} g) = (g, T f)
        assert!(cross_correlation(&spec, &f, &g, -1, &Rational::zero())
            .unwrap()
            .is_exact_zero());
    }

    #[test]
    fn cross_with_self_matches_auto() {
        let spec = two_stage();
        let f = LevelFunction::<Rational>::base_indicator(1);
        for n in 0..12 {
            assert_eq!(
                cross_correlation_best(&spec, &f, &f, n).unwrap(),
                autocorrelation_at_depth(&spec, &f, n as u64, 3).unwrap()
            );
        }
    }

    #[test]
    fn sequence_matches_pointwise() {
        let spec = RankOneSpec::new(
            1,
            vec![
                StageSpec::new(vec![0, 2, 1]),
                StageSpec::new(vec![3, 0]),
                StageSpec::new(vec![0, 0, 5]),
            ],
        );
        let f = LevelFunction::new(1, BTreeMap::from([(0, rat(1, 1))])).unwrap();
        let g = LevelFunction::new(2, BTreeMap::from([(1, rat(3, 2)), (4, rat(-1, 1))])).unwrap();
        let seq = cross_correlation_sequence(&spec, &f, &g, 40, None).unwrap();
        for (n, e) in seq.iter() {
            assert_eq!(e, &cross_correlation_best(&spec, &f, &g, n).unwrap(), "n={n}");
        }
        let auto = autocorrelation_sequence(&spec, &g, 40, None).unwrap();
        assert_eq!(auto.get(0).unwrap(), &Bounds::exact(g.norm_sq(&spec).unwrap()));
        assert_eq!(auto.get(-3), auto.get(3));
    }

    #[test]
    fn tolerance_picks_shallowest_depth() {
        let spec = RankOneSpec::new(1, vec![StageSpec::new(vec![5, 5]), StageSpec::new(vec![0, 0])]);
        let f = LevelFunction::<Rational>::base_indicator(1);
        let seq = autocorrelation_sequence(&spec, &f, 5, Some(&Rational::zero())).unwrap();
        assert!(seq.subject.contains("depth 2"));
        assert!(autocorrelation_sequence(&spec, &f, 30, Some(&Rational::zero())).is_err());
    }

    #[test]
    fn histogram_and_merge_agree() {
        let pos = [0u64, 2, 7, 9, 20, 22, 27, 29];
        let hist = pair_histogram(&pos, 30);
        for d in 0..=30 {
            assert_eq!(hist[d as usize], pair_count(&pos, d), "d={d}");
        }
    }

    #[test]
    fn corr_functional_examples() {
        let zero = CorrelationSequence::from_values(0, vec![Rational::zero(); 11], Rational::one(), "zero");
        assert_eq!(corr_functional(&zero, 1, 10).unwrap(), Bounds::zero());
        let geo: Vec<Rational> = (0..=10).map(|n| rat(1, 1 << n)).collect();
        let seq = CorrelationSequence::from_values(0, geo, Rational::one(), "geometric");
        assert_eq!(corr_functional(&seq, 1, 10).unwrap(), Bounds::exact(rat(1023, 1024)));
        assert_eq!(corr_functional(&seq, -10, -1).unwrap(), Bounds::exact(rat(1023, 1024)));
        assert!(corr_functional(&seq, 1, 11).is_err());
    }

    #[test]
    fn product_factorizes() {
        let s = CorrelationSequence {
            start: 0,
            entries: vec![Bounds::exact(rat(1, 2)), Bounds::zero(), Bounds::new(rat(-1, 4), rat(1, 4))],
            norm_sq_f: rat(1, 2),
            norm_sq_g: rat(1, 2),
            symmetric: true,
            subject: "s".into(),
        };
        let t = CorrelationSequence {
            start: 0,
            entries: vec![Bounds::exact(rat(2, 1)), Bounds::new(rat(0, 1), rat(1, 1)), Bounds::new(rat(1, 2), rat(1, 1))],
            norm_sq_f: rat(2, 1),
            norm_sq_g: rat(2, 1),
            symmetric: true,
            subject: "t".into(),
        };
        let p = product_correlation(&s, &t).unwrap();
        assert_eq!(p.entries[0], Bounds::exact(rat(1, 1)));
        assert!(p.entries[1].is_exact_zero());
        assert_eq!(p.entries[2], Bounds::new(rat(-1, 4), rat(1, 4)));
        assert_eq!(p.norm_sq_f, rat(1, 1));
    }

    #[test]
    fn interval_abs() {
        assert_eq!(Bounds::new(rat(-1, 2), rat(1, 3)).abs(), Bounds::new(rat(0, 1), rat(1, 2)));
        assert_eq!(Bounds::new(rat(-3, 1), rat(-1, 1)).abs(), Bounds::new(rat(1, 1), rat(3, 1)));
    }

    #[test]
    fn csv_and_document_round_trip() {
        let spec = two_stage();
        let f = LevelFunction::<Rational>::base_indicator(1);
        let seq = autocorrelation_sequence(&spec, &f, 12, None).unwrap();
        let back = CorrelationSequence::<Rational>::from_csv(&seq.to_csv(), true, seq.subject.clone()).unwrap();
        assert_eq!(back, seq);
        let doc = toml::to_string(&seq.to_document()).unwrap();
        let parsed: SequenceDocument = toml::from_str(&doc).unwrap();
        assert_eq!(CorrelationSequence::<Rational>::from_document(&parsed).unwrap(), seq);
        assert!(CorrelationSequence::<Rational>::from_csv("n,lower,upper\n0,1/1,1/1\n2,0/1,0/1\n", true, "").is_err());
    }

    #[test]
    fn float_instantiation_tracks_exact() {
        let spec = two_stage();
        let fe = LevelFunction::<Rational>::base_indicator(1);
        let ff = LevelFunction::<f64>::base_indicator(1);
        let e = autocorrelation_sequence(&spec, &fe, 15, None).unwrap();
        let f = autocorrelation_sequence(&spec, &ff, 15, None).unwrap();
        for ((_, a), (_, b)) in e.iter().zip(f.iter()) {
            assert!((a.lower.to_f64_lossy() - b.lower).abs() < 1e-12);
            assert!((a.upper.to_f64_lossy() - b.upper).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_and_budgets() {
        let seq = CorrelationSequence::from_values(0, vec![rat(4, 1), rat(2, 1), Rational::zero(), rat(-1, 1)], rat(4, 1), "s");
        let n = seq.normalized().unwrap();
        assert_eq!(n.get(0).unwrap(), &Bounds::exact(Rational::one()));
        assert_eq!(n.get(-3).unwrap(), &Bounds::exact(rat(-1, 4)));
        let lines = interval_budgets(&seq, &[(2, 2), (1, 3)], &rat(1, 1)).unwrap();
        assert_eq!(lines[0].budget, rat(1, 4));
        assert!(lines[0].within);
        assert_eq!(lines[1].budget, rat(1, 8));
        assert_eq!(lines[1].corr, Bounds::exact(rat(3, 1)));
        assert!(!lines[1].within);
        assert!(interval_budgets(&seq, &[], &Rational::zero()).is_err());
    }
}

//! Exact Walsh algebra over the two-sided fair-coin Bernoulli shift.
//!
//! `r_i` is the `±1` coordinate function at index `i`; for a finite set `F`,
//! `w_F = prod_{i in F} r_i`. The `w_F` are orthonormal, `w_∅ = 1`, and the
//! shift sends `w_F` to `w_{F+1}`. A polynomial is a finite table `F -> c_F`.
//!
//! Truncation keeps the largest coefficients until the normalized truncation
//! is within `delta` of `f/‖f‖`. The result is stored unnormalized together
//! with its squared norm: `f' = f_T / ‖f_T‖`, so every normalized inner
//! product `(U^m f', f') = (U^m f_T, f_T) / ‖f_T‖²` stays rational.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type IndexSet = Vec<i64>;

#[derive(Clone, Debug, PartialEq)]
pub struct WalshPolynomial<S> {
    terms: BTreeMap<IndexSet, S>,
}

impl<S> Default for WalshPolynomial<S> {
    fn default() -> Self {
        Self { terms: BTreeMap::new() }
    }
}

impl<S: Scalar> WalshPolynomial<S> {
    /// Index sets are sorted; repeated indices are rejected, zero
    /// coefficients dropped.
    pub fn new(terms: impl IntoIterator<Item = (IndexSet, S)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (mut set, c) in terms {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("index set {set:?} repeats an index")));
            }
            if c.is_zero() {
                continue;
            }
            if out.insert(set.clone(), c).is_some() {
                return Err(Error::InvalidArgument(format!("index set {set:?} listed twice")));
            }
        }
        Ok(Self { terms: out })
    }

    /// `c · r_i`.
    pub fn coordinate(i: i64, c: S) -> Self {
        Self::new([(vec![i], c)]).expect("single term")
    }

    pub fn terms(&self) -> &BTreeMap<IndexSet, S> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero_mean(&self) -> bool {
        !self.terms.contains_key(&Vec::new())
    }

    pub fn norm_sq(&self) -> S {
        self.terms.values().fold(S::zero(), |a, c| a + c.clone() * c.clone())
    }

    /// Smallest and largest index over all terms.
    pub fn index_range(&self) -> Option<(i64, i64)> {
        let lo = self.terms.keys().filter_map(|s| s.first()).min()?;
        let hi = self.terms.keys().filter_map(|s| s.last()).max()?;
        Some((*lo, *hi))
    }

    /// `(max index - min index) + 1`; correlations vanish at every lag `>= M`.
    pub fn diameter(&self) -> u64 {
        self.index_range().map_or(0, |(lo, hi)| (hi - lo) as u64 + 1)
    }

    /// `(U^m p, q)` without materializing the shift.
    pub fn shifted_inner_product(&self, m: i64, q: &Self) -> S {
        let mut key = Vec::new();
        self.terms.iter().fold(S::zero(), |acc, (set, c)| {
            key.clear();
            key.extend(set.iter().map(|i| i + m));
            match q.terms.get(&key) {
                Some(d) => acc + c.clone() * d.clone(),
                None => acc,
            }
        })
    }

    /// Lags `m` at which `(U^m p, p)` can be non-zero.
    pub fn candidate_lags(&self) -> BTreeSet<i64> {
        let mut out = BTreeSet::new();
        for a in self.terms.keys() {
            for b in self.terms.keys() {
                if a.len() == b.len() {
                    if let (Some(x), Some(y)) = (a.first(), b.first()) {
                        out.insert(y - x);
                    } else {
                        out.insert(0);
                    }
                }
            }
        }
        out
    }

    pub fn to_records(&self) -> Vec<WalshRecord> {
        self.terms
            .iter()
            .map(|(set, c)| {
                let text = c.to_text();
                let (num, den) = text.split_once('/').unwrap_or((&text, "1"));
                WalshRecord {
                    set: set.clone(),
                    num: num.to_string(),
                    den: den.to_string(),
                }
            })
            .collect()
    }

    pub fn from_records(records: &[WalshRecord]) -> Result<Self> {
        Self::new(
            records
                .iter()
                .map(|r| {
                    S::from_text(&format!("{}/{}", r.num, r.den))
                        .map(|c| (r.set.clone(), c))
                        .ok_or_else(|| Error::Parse(format!("bad coefficient {}/{}", r.num, r.den)))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&WalshDocument {
            terms: self.to_records(),
        })
        .expect("walsh polynomial serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: WalshDocument = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_records(&doc.terms)
    }
}

pub fn inner_product<S: Scalar>(p: &WalshPolynomial<S>, q: &WalshPolynomial<S>) -> S {
    p.shifted_inner_product(0, q)
}

pub fn shift_power<S: Scalar>(p: &WalshPolynomial<S>, m: i64) -> WalshPolynomial<S> {
    WalshPolynomial {
        terms: p
            .terms
            .iter()
            .map(|(set, c)| (set.iter().map(|i| i + m).collect(), c.clone()))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalshRecord {
    pub set: IndexSet,
    pub num: String,
    pub den: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalshDocument {
    pub terms: Vec<WalshRecord>,
}

/// Coefficients `c_0, c_1, ...` on index sets, with a certified tail.
pub trait CoefficientStream<S> {
    fn term(&self, k: usize) -> (IndexSet, S);
    /// Upper bound on `sum_{j >= k} c_j^2`.
    fn tail_sq(&self, k: usize) -> S;
}

/// `c_k = a q^k` on `r_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricStream<S> {
    pub a: S,
    pub q: S,
}

impl<S: Scalar> CoefficientStream<S> for GeometricStream<S> {
    fn term(&self, k: usize) -> (IndexSet, S) {
        let mut c = self.a.clone();
        for _ in 0..k {
            c = c * self.q.clone();
        }
        (vec![k as i64], c)
    }

    fn tail_sq(&self, k: usize) -> S {
        let (_, c) = self.term(k);
        let q2 = self.q.clone() * self.q.clone();
        c.clone() * c / (S::one() - q2)
    }
}

/// `f' = kept / ‖kept‖` together with the lag beyond which it is
/// self-orthogonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncation<S> {
    pub kept: WalshPolynomial<S>,
    pub kept_norm_sq: S,
    /// Lower bound on `‖kept‖² / ‖f‖²` (exact for finite `f`).
    pub kept_fraction: S,
    pub m: u64,
}

impl<S: Scalar> Truncation<S> {
    /// `(U^m f', f')`.
    pub fn correlation(&self, m: i64) -> S {
        self.kept.shifted_inner_product(m, &self.kept) / self.kept_norm_sq.clone()
    }

    /// `‖f'‖²`, identically one.
    pub fn normalized_norm_sq(&self) -> S {
        self.kept.norm_sq() / self.kept_norm_sq.clone()
    }

    /// Rational upper bound `2(1 - t²)` on `‖f/‖f‖ - f'‖² = 2(1 - t)`, where
    /// `t² = kept_fraction`.
    pub fn distance_sq_bound(&self) -> S {
        (S::one() + S::one()) * (S::one() - self.kept_fraction.clone())
    }

    /// `‖f/‖f‖ - f'‖ < delta`, decided exactly: `2(1 - t) < delta²` iff
    /// `t > 1 - delta²/2`, compared through `t²` when the right side is
    /// non-negative.
    pub fn within(&self, delta: &S) -> bool {
        fraction_within(&self.kept_fraction, delta)
    }
}

fn fraction_within<S: Scalar>(fraction: &S, delta: &S) -> bool {
    let half = delta.clone() * delta.clone() / (S::one() + S::one());
    let rhs = S::one() - half;
    rhs.is_negative() || *fraction > rhs.clone() * rhs
}

fn check_delta<S: Scalar>(delta: &S) -> Result<()> {
    if delta.is_positive() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta = {} must be positive", delta.to_text())))
    }
}

fn finish<S: Scalar>(kept: Vec<(IndexSet, S)>, kept_fraction: S) -> Result<Truncation<S>> {
    let kept = WalshPolynomial::new(kept)?;
    let kept_norm_sq = kept.norm_sq();
    let m = kept.diameter();
    Ok(Truncation {
        kept,
        kept_norm_sq,
        kept_fraction,
        m,
    })
}

/// Greedy truncation of a finite zero-mean polynomial, largest `|c|` first.
pub fn lemma3_truncate<S: Scalar>(f: &WalshPolynomial<S>, delta: &S) -> Result<Truncation<S>> {
    check_delta(delta)?;
    if !f.is_zero_mean() {
        return Err(Error::InvalidArgument("f has a constant term (not zero-mean)".into()));
    }
    if f.is_empty() {
        return Err(Error::InvalidArgument("f is zero and cannot be normalized".into()));
    }
    let total = f.norm_sq();
    let mut order: Vec<(&IndexSet, &S)> = f.terms.iter().collect();
    order.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).expect("ordered scalars").then(a.0.cmp(b.0)));
    let mut kept = Vec::new();
    let mut acc = S::zero();
    for (set, c) in order {
        acc = acc + c.clone() * c.clone();
        kept.push((set.clone(), c.clone()));
        if fraction_within(&(acc.clone() / total.clone()), delta) {
            break;
        }
    }
    finish(kept, acc / total)
}

/// Shortest prefix of a stream whose normalization is within `delta`,
/// certified through the stream's tail bound. Fails after `max_terms`.
pub fn lemma3_truncate_stream<S: Scalar>(
    f: &impl CoefficientStream<S>,
    delta: &S,
    max_terms: usize,
) -> Result<Truncation<S>> {
    check_delta(delta)?;
    let mut kept = Vec::new();
    let mut acc = S::zero();
    for k in 0..max_terms {
        let (set, c) = f.term(k);
        if set.is_empty() && !c.is_zero() {
            return Err(Error::InvalidArgument("stream has a constant term (not zero-mean)".into()));
        }
        acc = acc + c.clone() * c.clone();
        kept.push((set, c));
        if acc.is_zero() {
            continue;
        }
        let fraction = acc.clone() / (acc.clone() + f.tail_sq(k + 1));
        if fraction_within(&fraction, delta) {
            return finish(kept, fraction);
        }
    }
    Err(Error::ToleranceNotReached {
        n: max_terms as u64,
        achieved: format!("{} terms", max_terms),
    })
}

/// `sum_{m in (from, to]} |(U^m f', f')|`, evaluated only at candidate lags.
pub fn corr_sum<S: Scalar>(t: &Truncation<S>, from: u64, to: u64) -> S {
    t.kept
        .candidate_lags()
        .into_iter()
        .filter(|&m| m > from as i64 && m <= to as i64)
        .fold(S::zero(), |acc, m| acc + t.correlation(m).abs())
}

/// `Corr(U, f', (M, horizon])`, which vanishes for every truncation.
pub fn corr_tail_certificate<S: Scalar>(t: &Truncation<S>, m: u64, horizon: u64) -> S {
    corr_sum(t, m, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};
    use num_traits::{One, Zero};

    type W = WalshPolynomial<Rational>;

    fn half_sum() -> W {
        W::new((0..4).map(|i| (vec![i], rat(1, 2)))).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let r0 = W::coordinate(0, Rational::one());
        assert_eq!(inner_product(&r0, &r0), Rational::one());
        let r5 = W::coordinate(5, Rational::one());
        assert!(inner_product(&r0, &r5).is_zero());
        let p = W::new([(vec![0], Rational::one()), (vec![1], Rational::one())]).unwrap();
        assert_eq!(inner_product(&p, &shift_power(&p, 1)), Rational::one());
    }

    #[test]
    fn shift_is_a_group_action() {
        let p = W::new([(vec![0, 3], rat(1, 3)), (vec![-2], rat(-1, 2))]).unwrap();
        assert_eq!(shift_power(&p, 0), p);
        assert_eq!(shift_power(&shift_power(&p, 4), -7), shift_power(&p, -3));
        assert_eq!(shift_power(&W::coordinate(0, Rational::one()), 1), W::coordinate(1, Rational::one()));
        let q = W::new([(vec![1, 4], rat(2, 1))]).unwrap();
        assert_eq!(inner_product(&shift_power(&p, 1), &q), p.shifted_inner_product(1, &q));
    }

    #[test]
    fn single_coordinate_truncation() {
        let r0 = W::coordinate(0, Rational::one());
        let t = lemma3_truncate(&r0, &rat(1, 10)).unwrap();
        assert_eq!(t.kept, r0);
        assert_eq!(t.m, 1);
        assert!((1..=50).all(|m| t.correlation(m).is_zero()));
        assert!(corr_tail_certificate(&t, 1, 10_000).is_zero());
    }

    #[test]
    fn four_coordinates() {
        let f = half_sum();
        let t = lemma3_truncate(&f, &rat(1, 10)).unwrap();
        assert_eq!(t.kept, f);
        assert_eq!(t.m, 4);
        assert!(!t.correlation(1).is_zero());
        assert!((5..=100).all(|m| t.correlation(m).is_zero()));
        assert!(corr_tail_certificate(&t, 4, 10_000).is_zero());
        assert_eq!(corr_sum(&t, 0, 4), rat(3, 2));
        assert_eq!(t.normalized_norm_sq(), Rational::one());
    }

    #[test]
    fn geometric_stream() {
        let g = GeometricStream {
            a: Rational::one(),
            q: rat(1, 2),
        };
        let t = lemma3_truncate_stream(&g, &rat(1, 10), 64).unwrap();
        assert_eq!(t.kept.len(), 4);
        assert_eq!(t.m, 4);
        assert!(t.within(&rat(1, 10)));
        // Three terms are not enough.
        let short = Truncation {
            kept_fraction: rat(63, 64),
            ..t.clone()
        };
        assert!(!short.within(&rat(1, 10)));
        assert!(lemma3_truncate_stream(&g, &rat(1, 10_000_000), 3).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = W::new([(vec![], Rational::one()), (vec![1], Rational::one())]).unwrap();
        assert!(lemma3_truncate(&c, &rat(1, 2)).is_err());
        assert!(lemma3_truncate(&half_sum(), &Rational::zero()).is_err());
        assert!(W::new([(vec![1, 1], Rational::one())]).is_err());
    }

    #[test]
    fn greedy_keeps_large_terms() {
        let f = W::new([(vec![0], rat(10, 1)), (vec![7], rat(1, 100)), (vec![1, 2], rat(-3, 1))]).unwrap();
        let t = lemma3_truncate(&f, &rat(1, 5)).unwrap();
        assert_eq!(t.kept.len(), 2);
        assert_eq!(t.m, 3);
        assert!(t.within(&rat(1, 5)));
    }

    #[test]
    fn records_round_trip() {
        let p = W::new([(vec![0, 3], rat(1, 3)), (vec![-2], rat(-7, 2))]).unwrap();
        assert_eq!(W::from_toml(&p.to_toml()).unwrap(), p);
        let pf = WalshPolynomial::<f64>::new([(vec![1], 0.25)]).unwrap();
        assert_eq!(WalshPolynomial::<f64>::from_records(&pf.to_records()).unwrap(), pf);
    }
}

//! Spectral evidence from correlation sequences.
//!
//! Densities are taken with respect to normalized arc length `dθ / 2π`, so the
//! flat density `1` corresponds to `ρ = δ_0`. Exact entries are rounded to
//! `f64` once, on entry; nothing computed here feeds back into a certificate.

use std::f64::consts::TAU;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::correlation::{Bounds, CorrelationSequence};
use crate::error::{Error, Result};
use crate::scalar::{max_of, Scalar};

/// Samples of a spectral density on `θ_m = 2πm / G`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub values: Vec<f64>,
    /// Fejér order; for exact densities the largest `|n|` used.
    pub order: u64,
    /// The values are the trigonometric polynomial `sum ρ(n) e^{inθ}` itself.
    pub exact: bool,
}

impl DensityEstimate {
    pub fn grid(&self) -> usize {
        self.values.len()
    }

    pub fn theta(&self, m: usize) -> f64 {
        TAU * m as f64 / self.values.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `theta,value` table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["theta", "value"]).expect("in-memory write");
        for (m, v) in self.values.iter().enumerate() {
            w.write_record([format!("{:.12}", self.theta(m)), format!("{v:e}")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

/// `Re sum_n c_n e^{i n θ_m}` for all grid points, by one inverse FFT of the
/// coefficients folded modulo `grid`.
fn evaluate(coeffs: &[(i64, f64)], grid: usize) -> Vec<f64> {
    let mut buf = vec![Complex::new(0.0, 0.0); grid];
    for &(n, c) in coeffs {
        buf[n.rem_euclid(grid as i64) as usize].re += c;
    }
    FftPlanner::<f64>::new().plan_fft_inverse(grid).process(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

fn midpoints<S: Scalar>(seq: &CorrelationSequence<S>, order: u64) -> Result<Vec<(i64, f64)>> {
    let m = order as i64;
    (-m..=m)
        .map(|n| {
            seq.get(n)
                .map(|b| (n, b.midpoint_f64()))
                .ok_or(Error::NotCovered { start: -m, end: m })
        })
        .collect()
}

fn check_grid(order: u64, grid: usize) -> Result<()> {
    if grid == 0 || order >= grid as u64 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} must exceed the order {order} (otherwise frequencies alias)"
        )));
    }
    Ok(())
}

/// `sum_{|n| <= M} (1 - |n|/M) ρ(n) cos(nθ)` on a grid of `G` angles.
///
/// Requires `M < G` so that the grid mean recovers `ρ(0)`.
pub fn fejer_density<S: Scalar>(seq: &CorrelationSequence<S>, order: u64, grid: usize) -> Result<DensityEstimate> {
    check_grid(order, grid)?;
    let m = order.max(1) as f64;
    let coeffs: Vec<(i64, f64)> = midpoints(seq, order)?
        .into_iter()
        .map(|(n, c)| (n, (1.0 - n.unsigned_abs() as f64 / m) * c))
        .collect();
    Ok(DensityEstimate {
        values: evaluate(&coeffs, grid),
        order,
        exact: false,
    })
}

/// The trigonometric polynomial `sum_n ρ(n) e^{inθ}` of a sequence whose
/// entries are exact and vanish beyond its support.
pub fn exact_density<S: Scalar>(seq: &CorrelationSequence<S>, grid: usize) -> Result<DensityEstimate> {
    if !seq.is_exact() {
        return Err(Error::InvalidArgument("exact density needs exact entries".into()));
    }
    let support_end = seq
        .iter()
        .filter(|(_, b)| !b.is_exact_zero())
        .map(|(n, _)| n.unsigned_abs())
        .max()
        .unwrap_or(0);
    check_grid(support_end, grid)?;
    let coeffs = midpoints(seq, support_end)?;
    Ok(DensityEstimate {
        values: evaluate(&coeffs, grid),
        order: support_end,
        exact: true,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummabilityReport<S> {
    /// `sum |ρ(n)|` over `n in [1, horizon]`.
    pub l1: Bounds<S>,
    /// `sum ρ(n)^2` over `n in [1, horizon]`.
    pub l2: Bounds<S>,
    /// `n in [1, horizon]` whose entry is not exactly zero.
    pub support: Vec<i64>,
    pub horizon: u64,
}

pub fn summability_report<S: Scalar>(seq: &CorrelationSequence<S>, horizon: u64) -> Result<SummabilityReport<S>> {
    let mut l1 = Bounds::zero();
    let mut l2 = Bounds::zero();
    let mut support = Vec::new();
    for n in 1..=horizon as i64 {
        let e = seq.get(n).ok_or(Error::NotCovered {
            start: 1,
            end: horizon as i64,
        })?;
        if e.is_exact_zero() {
            continue;
        }
        support.push(n);
        let a = e.abs();
        l1 = l1.add(&a);
        l2 = l2.add(&a.mul(&a));
    }
    Ok(SummabilityReport { l1, l2, support, horizon })
}

/// Coefficients `sum_{k=1..K} ρ(n)^k / k!` of the truncated exponential of
/// the spectral measure, with per-entry truncation bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosCoefficients<S> {
    pub coefficients: CorrelationSequence<S>,
    /// Certified upper bound on `sum_{k > K} |ρ(n)|^k / k!` per entry.
    pub tail: Vec<S>,
    pub cap: u32,
}

fn truncated_exp<S: Scalar>(x: &S, cap: u32) -> S {
    let mut term = S::one();
    let mut acc = S::zero();
    for k in 1..=cap {
        term = term * x.clone() / S::from_count(k as u64);
        acc = acc + term.clone();
    }
    acc
}

/// `x^{K+1} / (K+1)! · 1 / (1 - x/(K+2))` for `0 <= x <= 1`: the geometric
/// majorant of the exponential tail.
pub fn exp_tail_bound<S: Scalar>(x: &S, cap: u32) -> S {
    let mut term = S::one();
    for k in 1..=cap as u64 + 1 {
        term = term * x.clone() / S::from_count(k);
    }
    term / (S::one() - x.clone() / S::from_count(cap as u64 + 2))
}

pub fn chaos_exp_coefficients<S: Scalar>(seq: &CorrelationSequence<S>, cap: u32) -> Result<ChaosCoefficients<S>> {
    match seq.get(0) {
        Some(b) if b.lower == S::one() && b.upper == S::one() => {}
        Some(b) => return Err(Error::Unnormalized(format!("[{}, {}]", b.lower.to_text(), b.upper.to_text()))),
        None => return Err(Error::Unnormalized("missing".into())),
    }
    let clamp = |x: &S| {
        if *x > S::one() {
            S::one()
        } else if *x < -S::one() {
            -S::one()
        } else {
            x.clone()
        }
    };
    let mut entries = Vec::with_capacity(seq.entries.len());
    let mut tail = Vec::with_capacity(seq.entries.len());
    for e in &seq.entries {
        // The truncated series is non-decreasing on [-1, 1].
        let (lo, hi) = (clamp(&e.lower), clamp(&e.upper));
        let r = max_of(lo.abs(), hi.abs());
        entries.push(Bounds::new(truncated_exp(&lo, cap), truncated_exp(&hi, cap)));
        tail.push(exp_tail_bound(&r, cap));
    }
    let norm = truncated_exp(&S::one(), cap);
    Ok(ChaosCoefficients {
        coefficients: CorrelationSequence {
            start: seq.start,
            entries,
            norm_sq_f: norm.clone(),
            norm_sq_g: norm,
            symmetric: seq.symmetric,
            subject: format!("exponential chaos coefficients (K = {cap}) of [{}]", seq.subject),
        },
        tail,
        cap,
    })
}

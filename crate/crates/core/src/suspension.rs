//! Monte-Carlo checks of the Gaussian and Poisson extensions.
//!
//! Randomness is ChaCha8 seeded from [`SimulationConfig::seed`]. Work is cut
//! into fixed chunks of [`CHUNK`] samples and chunk `c` of statistic kind `k`
//! draws from stream `(k << 48) | c`, so results do not depend on the number
//! of threads or on scheduling order. Chunk results are reduced in order.
//!
//! The Poisson process lives on the region of a finite tower. Covariances of
//! linear statistics only involve points of `supp f`, so restricting the
//! process to a region containing `supp f` does not change them; points whose
//! orbit leaves the constructed region are counted as escapes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::Arc;

use crate::correlation::CorrelationSequence;
use crate::error::{Error, Result};
use crate::rank1::{LevelFunction, Point, RankOneSpec, TowerIndex};
use crate::scalar::Scalar;

/// Samples per RNG stream.
pub const CHUNK: usize = 1024;

const STREAM_GAUSSIAN: u64 = 1;
const STREAM_POISSON: u64 = 2;

/// Relative tolerance for negative eigenvalues that are projected to zero.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub lag_max: usize,
    pub intensity: f64,
    pub confidence: f64,
    /// Largest tolerated fraction of escaping points.
    pub escape_cap: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sample_count: 100_000,
            seed: 0,
            lag_max: 20,
            intensity: 1.0,
            confidence: 0.95,
            escape_cap: 0.01,
        }
    }
}

impl SimulationConfig {
    pub fn check(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::InvalidArgument(format!("intensity {} must be positive", self.intensity)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence {} not in (0, 1)", self.confidence)));
        }
        if !(0.0..=1.0).contains(&self.escape_cap) {
            return Err(Error::InvalidArgument(format!("escape cap {} not in [0, 1]", self.escape_cap)));
        }
        Ok(())
    }

    fn rng(&self, kind: u64, chunk: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((kind << 48) | chunk as u64);
        rng
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        (0..self.sample_count.div_ceil(CHUNK))
            .map(|c| (c, CHUNK.min(self.sample_count - c * CHUNK)))
            .collect()
    }

    fn z_score(&self) -> f64 {
        Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(0.5 + self.confidence / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingMethod {
    /// Circulant embedding of the given size.
    Circulant(usize),
    /// Eigen-decomposition of the Toeplitz matrix.
    Dense,
}

enum Factor {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Dense(DMatrix<f64>),
}

/// Reusable square root of a stationary covariance on `length` points.
pub struct GaussianSampler {
    pub length: usize,
    pub method: EmbeddingMethod,
    factor: Factor,
}

fn toeplitz_min_eigen(c: &[f64], k: usize) -> f64 {
    let m = DMatrix::from_fn(k, k, |i, j| c[i.abs_diff(j)]);
    m.symmetric_eigenvalues().min()
}

impl GaussianSampler {
    /// Uses the covariance entries `ρ(0), ρ(1), ...` (interval midpoints).
    /// Tries circulant embeddings of growing size, then falls back to a dense
    /// eigen-decomposition with negative eigenvalues above `-PSD_TOLERANCE·ρ(0)`
    /// projected to zero.
    pub fn new<S: Scalar>(cov: &CorrelationSequence<S>, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidArgument("length must be at least 1".into()));
        }
        let lag = |k: usize| cov.get(k as i64).map(|b| b.midpoint_f64());
        let c: Vec<f64> = (0..length)
            .map(|k| lag(k).ok_or(Error::NotCovered { start: 0, end: length as i64 - 1 }))
            .collect::<Result<_>>()?;
        let tol = PSD_TOLERANCE * c[0].abs().max(1.0);

        let mut size = (2 * (length - 1)).max(1).next_power_of_two();
        for _ in 0..4 {
            let row: Vec<Complex<f64>> = (0..size)
                .map(|j| {
                    let k = j.min(size - j);
                    let v = if k < length { c[k] } else { lag(k).unwrap_or(0.0) };
                    Complex::new(v, 0.0)
                })
                .collect();
            let mut eig = row;
            let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
            fft.process(&mut eig);
            let min = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min >= -tol {
                let scale = 1.0 / size as f64;
                return Ok(Self {
                    length,
                    method: EmbeddingMethod::Circulant(size),
                    factor: Factor::Circulant {
                        sqrt_eig: eig.iter().map(|z| (z.re.max(0.0) * scale).sqrt()).collect(),
                        fft,
                    },
                });
            }
            size *= 2;
        }

        let m = DMatrix::from_fn(length, length, |i, j| c[i.abs_diff(j)]);
        let SymmetricEigen {
            eigenvectors,
            eigenvalues,
        } = m.symmetric_eigen();
        let min = eigenvalues.min();
        if min < -tol {
            // Interlacing: the smallest eigenvalue of leading minors is
            // non-increasing in their size, so bisect for the first bad one.
            let (mut lo, mut hi) = (1, length);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if toeplitz_min_eigen(&c, mid) < -tol {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            return Err(Error::NotPositiveSemidefinite {
                minor: lo,
                eigenvalue: toeplitz_min_eigen(&c, lo),
            });
        }
        let roots = DVector::from_iterator(length, eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
        Ok(Self {
            length,
            method: EmbeddingMethod::Dense,
            factor: Factor::Dense(eigenvectors * DMatrix::from_diagonal(&roots)),
        })
    }

    /// One or two independent paths per call, appended to `out`.
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut Vec<Vec<f64>>) {
        match &self.factor {
            Factor::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|s| {
                        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut buf);
                out.push(buf[..self.length].iter().map(|z| z.re).collect());
                out.push(buf[..self.length].iter().map(|z| z.im).collect());
            }
            Factor::Dense(a) => {
                let z = DVector::from_fn(self.length, |_, _| rng.sample::<f64, _>(StandardNormal));
                out.push((a * z).iter().copied().collect());
            }
        }
    }

    fn chunk(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(count + 1);
        while out.len() < count {
            self.draw(rng, &mut out);
        }
        out.truncate(count);
        out
    }
}

/// `config.sample_count` stationary zero-mean paths of length `length`.
pub fn gaussian_sample<S: Scalar>(
    cov: &CorrelationSequence<S>,
    length: usize,
    config: &SimulationConfig,
) -> Result<Vec<Vec<f64>>> {
    config.check()?;
    let sampler = GaussianSampler::new(cov, length)?;
    let parts: Vec<Vec<Vec<f64>>> = config
        .chunks()
        .into_par_iter()
        .map(|(c, n)| sampler.chunk(&mut config.rng(STREAM_GAUSSIAN, c), n))
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub lag: usize,
    /// Average of `x_t x_{t+lag}` over paths and positions.
    pub estimate: f64,
    /// Standard error from the spread of per-path averages.
    pub std_error: f64,
    /// Midpoint of the target covariance entry.
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianReport {
    pub method: EmbeddingMethod,
    pub length: usize,
    pub samples: usize,
    pub seed: u64,
    pub lags: Vec<LagEstimate>,
}

impl GaussianReport {
    pub fn max_abs_error(&self) -> f64 {
        self.lags
            .iter()
            .map(|l| (l.estimate - l.target).abs())
            .fold(0.0, f64::max)
    }
}

/// Streams paths and estimates the covariance at each lag in `lags`.
pub fn gaussian_covariance<S: Scalar>(
    cov: &CorrelationSequence<S>,
    lags: &[usize],
    config: &SimulationConfig,
) -> Result<GaussianReport> {
    config.check()?;
    let length = lags.iter().max().map_or(1, |m| m + 1);
    let sampler = GaussianSampler::new(cov, length)?;
    let partial: Vec<Vec<(f64, f64)>> = config
        .chunks()
        .into_par_iter()
        .map(|(c, n)| {
            let paths = sampler.chunk(&mut config.rng(STREAM_GAUSSIAN, c), n);
            lags.iter()
                .map(|&k| {
                    paths.iter().fold((0.0, 0.0), |(s, s2), x| {
                        let p = (0..length - k).map(|t| x[t] * x[t + k]).sum::<f64>() / (length - k) as f64;
                        (s + p, s2 + p * p)
                    })
                })
                .collect()
        })
        .collect();
    let n = config.sample_count as f64;
    let lags = lags
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), p| (a + p[i].0, b + p[i].1));
            let mean = s / n;
            let var = if n > 1.0 { (s2 - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
            LagEstimate {
                lag: k,
                estimate: mean,
                std_error: (var / n).sqrt(),
                target: cov.get(k as i64).map(|b| b.midpoint_f64()).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(GaussianReport {
        method: sampler.method,
        length,
        samples: config.sample_count,
        seed: config.seed,
        lags,
    })
}

/// A sampled point and its image after `steps` (or `None` on escape).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedPoint {
    pub point: Point,
    pub image: Option<Point>,
}

#[derive(Clone, Debug)]
pub struct PoissonSample {
    pub configurations: Vec<Vec<PairedPoint>>,
    pub index: TowerIndex,
    pub depth: usize,
    pub steps: u64,
    pub intensity: f64,
    /// `h_depth · w_depth`.
    pub region_measure: f64,
    pub points: usize,
    pub escaped: usize,
}

impl PoissonSample {
    pub fn escape_fraction(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            self.escaped as f64 / self.points as f64
        }
    }
}

struct Region {
    index: TowerIndex,
    depth: usize,
    height: u64,
    mean_count: f64,
    measure: f64,
}

impl Region {
    fn new(spec: &RankOneSpec, depth: usize, intensity: f64) -> Result<Self> {
        let index = TowerIndex::new(spec)?;
        if depth == 0 || depth > index.max_depth() {
            return Err(Error::IndexOutOfRange {
                what: "depth",
                index: depth,
                max: index.max_depth(),
            });
        }
        let measure: f64 = spec.measure::<f64>(depth)?;
        Ok(Self {
            height: index.heights[depth - 1],
            index,
            depth,
            mean_count: intensity * measure,
            measure,
        })
    }

    fn configuration(&self, rng: &mut ChaCha8Rng, steps: u64) -> Vec<PairedPoint> {
        let count = if self.mean_count > 0.0 {
            Poisson::new(self.mean_count).expect("positive mean").sample(rng) as usize
        } else {
            0
        };
        (0..count)
            .map(|_| {
                let point = Point {
                    depth: self.depth,
                    position: rng.random_range(0..self.height),
                    frac: rng.random::<f64>(),
                };
                PairedPoint {
                    point,
                    image: self.index.push(point, steps),
                }
            })
            .collect()
    }
}

/// Samples Poisson configurations on tower `depth` and pushes every point
/// `steps` levels up through the spec.
pub fn poisson_sample_and_push(
    spec: &RankOneSpec,
    depth: usize,
    steps: u64,
    config: &SimulationConfig,
) -> Result<PoissonSample> {
    config.check()?;
    let region = Region::new(spec, depth, config.intensity)?;
    let parts: Vec<Vec<Vec<PairedPoint>>> = config
        .chunks()
        .into_par_iter()
        .map(|(c, n)| {
            let mut rng = config.rng(STREAM_POISSON, c);
            (0..n).map(|_| region.configuration(&mut rng, steps)).collect()
        })
        .collect();
    let configurations: Vec<Vec<PairedPoint>> = parts.into_iter().flatten().collect();
    let points = configurations.iter().map(Vec::len).sum();
    let escaped = configurations.iter().flatten().filter(|p| p.image.is_none()).count();
    let sample = PoissonSample {
        configurations,
        index: region.index,
        depth,
        steps,
        intensity: config.intensity,
        region_measure: region.measure,
        points,
        escaped,
    };
    let fraction = sample.escape_fraction();
    if fraction > config.escape_cap {
        return Err(Error::EscapeCapExceeded {
            fraction,
            cap: config.escape_cap,
        });
    }
    Ok(sample)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// `Cov(N(f), N(f)∘T_*^n) / λ`, comparable to `(f, T^n f)`.
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub samples: usize,
    pub seed: u64,
    pub escape_fraction: f64,
}

impl CovarianceEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

fn evaluator<'a, S: Scalar>(index: &'a TowerIndex, f: &LevelFunction<S>) -> impl Fn(&Point) -> f64 + 'a {
    let levels: Vec<(u64, f64)> = f.levels.iter().map(|(l, c)| (*l, c.to_f64_lossy())).collect();
    let stage = f.stage;
    move |p: &Point| {
        index
            .locate(p.depth, p.position, stage)
            .and_then(|l| levels.iter().find(|(lv, _)| *lv == l).map(|(_, c)| *c))
            .unwrap_or(0.0)
    }
}

/// Running sums for the sample covariance of `(X, Y)`.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    x: f64,
    y: f64,
    xy: f64,
    xxyy: f64,
    xxy: f64,
    xyy: f64,
    xx: f64,
    yy: f64,
}

impl Moments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.x += x;
        self.y += y;
        self.xy += x * y;
        self.xx += x * x;
        self.yy += y * y;
        self.xxy += x * x * y;
        self.xyy += x * y * y;
        self.xxyy += x * x * y * y;
    }

    fn merge(mut self, o: Moments) -> Self {
        self.n += o.n;
        self.x += o.x;
        self.y += o.y;
        self.xy += o.xy;
        self.xx += o.xx;
        self.yy += o.yy;
        self.xxy += o.xxy;
        self.xyy += o.xyy;
        self.xxyy += o.xxyy;
        self
    }

    /// Sample covariance and the standard error of `(X - x̄)(Y - ȳ)`.
    fn covariance(&self) -> (f64, f64) {
        let n = self.n;
        let (mx, my) = (self.x / n, self.y / n);
        let cov = (self.xy - n * mx * my) / (n - 1.0);
        // E[((X-mx)(Y-my))^2] expanded in raw moments.
        let second = (self.xxyy - 2.0 * my * self.xxy - 2.0 * mx * self.xyy
            + my * my * self.xx
            + mx * mx * self.yy
            + 4.0 * mx * my * self.xy
            - 3.0 * n * mx * mx * my * my)
            / n;
        let var = (second - cov * cov).max(0.0);
        (cov, (var / n).sqrt())
    }
}

fn estimate_from(m: Moments, lambda: f64, config: &SimulationConfig, escape_fraction: f64) -> Result<CovarianceEstimate> {
    if m.n < 2.0 {
        return Err(Error::DegenerateSample(format!("{} configurations", m.n)));
    }
    let (cov, se) = m.covariance();
    let half = config.z_score() * se;
    Ok(CovarianceEstimate {
        estimate: cov / lambda,
        ci_low: (cov - half) / lambda,
        ci_high: (cov + half) / lambda,
        confidence: config.confidence,
        samples: m.n as usize,
        seed: config.seed,
        escape_fraction,
    })
}

/// `Cov(N(f), N(f)∘T_*^n) / λ` with a normal-approximation interval.
/// Escaped points contribute zero to the pushed statistic.
pub fn linear_statistic_covariance<S: Scalar>(
    pairs: &PoissonSample,
    f: &LevelFunction<S>,
    n: u64,
    config: &SimulationConfig,
) -> Result<CovarianceEstimate> {
    if n != pairs.steps {
        return Err(Error::InvalidArgument(format!(
            "configurations were pushed {} steps, not {n}",
            pairs.steps
        )));
    }
    if f.stage > pairs.depth {
        return Err(Error::InvalidArgument("f lives on a tower deeper than the sampled region".into()));
    }
    let value = evaluator(&pairs.index, f);
    let mut m = Moments::default();
    for conf in &pairs.configurations {
        let x: f64 = conf.iter().map(|p| value(&p.point)).sum();
        let y: f64 = conf.iter().filter_map(|p| p.image.as_ref()).map(&value).sum();
        m.push(x, y);
    }
    estimate_from(m, pairs.intensity, config, pairs.escape_fraction())
}

/// Same estimate as [`poisson_sample_and_push`] followed by
/// [`linear_statistic_covariance`], without storing configurations.
pub fn poisson_linear_covariance<S: Scalar>(
    spec: &RankOneSpec,
    depth: usize,
    f: &LevelFunction<S>,
    n: u64,
    config: &SimulationConfig,
) -> Result<CovarianceEstimate> {
    config.check()?;
    let region = Region::new(spec, depth, config.intensity)?;
    if f.stage > depth {
        return Err(Error::InvalidArgument("f lives on a tower deeper than the sampled region".into()));
    }
    let value = evaluator(&region.index, f);
    let parts: Vec<(Moments, usize, usize)> = config
        .chunks()
        .into_par_iter()
        .map(|(c, count)| {
            let mut rng = config.rng(STREAM_POISSON, c);
            let mut m = Moments::default();
            let (mut pts, mut esc) = (0, 0);
            for _ in 0..count {
                let conf = region.configuration(&mut rng, n);
                pts += conf.len();
                esc += conf.iter().filter(|p| p.image.is_none()).count();
                let x: f64 = conf.iter().map(|p| value(&p.point)).sum();
                let y: f64 = conf.iter().filter_map(|p| p.image.as_ref()).map(&value).sum();
                m.push(x, y);
            }
            (m, pts, esc)
        })
        .collect();
    let (m, pts, esc) = parts
        .into_iter()
        .fold((Moments::default(), 0, 0), |(a, p, e), (b, q, f)| (a.merge(b), p + q, e + f));
    let fraction = if pts == 0 { 0.0 } else { esc as f64 / pts as f64 };
    if fraction > config.escape_cap {
        return Err(Error::EscapeCapExceeded {
            fraction,
            cap: config.escape_cap,
        });
    }
    estimate_from(m, config.intensity, config, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};
    use num_traits::{One, Zero};

    fn small(n: usize) -> SimulationConfig {
        SimulationConfig {
            sample_count: n,
            seed: 7,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn length_one_has_variance_rho0() {
        let cov = CorrelationSequence::from_values(0, vec![rat(2, 1)], rat(2, 1), "c");
        let r = gaussian_covariance(&cov, &[0], &small(20_000)).unwrap();
        assert!((r.lags[0].estimate - 2.0).abs() < 5.0 * r.lags[0].std_error + 1e-3);
    }

    #[test]
    fn white_noise_lag_one() {
        let mut v = vec![Rational::zero(); 4];
        v[0] = Rational::one();
        let cov = CorrelationSequence::from_values(0, v, Rational::one(), "δ");
        let r = gaussian_covariance(&cov, &[0, 1], &small(20_000)).unwrap();
        assert!(r.lags[1].estimate.abs() < 3.0 * r.lags[1].std_error + 1e-12);
    }

    #[test]
    fn non_psd_is_reported_with_its_minor() {
        let cov = CorrelationSequence::from_values(0, vec![rat(1, 1), rat(9, 10), rat(-9, 10)], rat(1, 1), "bad");
        match GaussianSampler::new(&cov, 3) {
            Err(Error::NotPositiveSemidefinite { minor, .. }) => assert_eq!(minor, 3),
            Err(e) => panic!("{e}"),
            Ok(s) => panic!("accepted with {:?}", s.method),
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let cov = CorrelationSequence::from_values(0, vec![rat(1, 1), rat(1, 2), rat(0, 1)], rat(1, 1), "c");
        let a = gaussian_sample(&cov, 3, &small(3000)).unwrap();
        let b = gaussian_sample(&cov, 3, &small(3000)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3000);
    }

    #[test]
    fn identity_push_pairs_points_with_themselves() {
        let spec = RankOneSpec::odometer(2, 4);
        let s = poisson_sample_and_push(&spec, 3, 0, &small(200)).unwrap();
        for c in &s.configurations {
            for p in c {
                assert_eq!(p.image, Some(p.point));
            }
        }
    }

    #[test]
    fn escape_cap_is_enforced() {
        let spec = RankOneSpec::odometer(2, 2);
        let cfg = SimulationConfig {
            escape_cap: 0.0,
            intensity: 20.0,
            ..small(50)
        };
        assert!(matches!(
            poisson_sample_and_push(&spec, 3, 1, &cfg),
            Err(Error::EscapeCapExceeded { .. })
        ));
    }

    #[test]
    fn stored_and_streamed_estimates_agree() {
        let spec = RankOneSpec::odometer(2, 6);
        let f = LevelFunction::<Rational>::base_indicator(2);
        let cfg = SimulationConfig {
            intensity: 3.0,
            escape_cap: 0.2,
            ..small(3000)
        };
        let s = poisson_sample_and_push(&spec, 3, 2, &cfg).unwrap();
        let a = linear_statistic_covariance(&s, &f, 2, &cfg).unwrap();
        let b = poisson_linear_covariance(&spec, 3, &f, 2, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(linear_statistic_covariance(&s, &f, 3, &cfg).is_err());
        assert!(matches!(
            poisson_linear_covariance(&spec, 3, &f, 0, &small(1)),
            Err(Error::DegenerateSample(_))
        ));
    }
}

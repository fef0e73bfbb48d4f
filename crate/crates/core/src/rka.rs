//! The randomized Kaczmarz iteration and a Monte Carlo harness around it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problems::{LinearSystem, NoiseSpec};

/// Row-selection probabilities with their inclusive prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDistribution {
    p: DVector<f64>,
    cum: Vec<f64>,
}

impl RowDistribution {
    /// Normalized copy of strictly positive, finite weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty weight vector".into()));
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidWeight { index, value });
        }
        let total: f64 = weights.iter().sum();
        let p = DVector::from_iterator(weights.len(), weights.iter().map(|w| w / total));
        let mut acc = 0.0;
        let mut cum: Vec<f64> = p
            .iter()
            .map(|pi| {
                acc += pi;
                acc
            })
            .collect();
        *cum.last_mut().expect("non-empty") = 1.0;
        Ok(Self { p, cum })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; m])
    }

    /// `p_i = ||a_i||^2 / ||A||_F^2`.
    pub fn row_norm(sys: &LinearSystem) -> Result<Self> {
        let w: Vec<f64> = sys.row_norms().iter().map(|r| r * r).collect();
        Self::from_weights(&w)
    }

    pub fn probabilities(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Smallest `i` with `cum[i] > u`, for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

pub fn row_norm_distribution(sys: &LinearSystem) -> Result<RowDistribution> {
    RowDistribution::row_norm(sys)
}

pub fn make_distribution(weights: &[f64]) -> Result<RowDistribution> {
    RowDistribution::from_weights(weights)
}

pub fn sample_row(dist: &RowDistribution, u: f64) -> usize {
    dist.sample(u)
}

/// One Kaczmarz projection of `x` onto `{v : a_i . v = y_i}`.
pub fn rka_step(x: &mut [f64], row: &[f64], norm: f64, y_i: f64) {
    let dot: f64 = row.iter().zip(x.iter()).map(|(a, v)| a * v).sum();
    let coef = (y_i - dot) / (norm * norm);
    for (v, a) in x.iter_mut().zip(row) {
        *v += coef * a;
    }
}

/// Per-iteration sample mean and standard error of `||x^(k) - x||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    pub mse_mean: Vec<f64>,
    pub mse_stderr: Vec<f64>,
    pub trials: usize,
}

/// Seed of the independent stream used by trial `index`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Row-major copy of the matrix for fast row access in the inner loop.
struct Rows {
    data: Vec<f64>,
    n: usize,
}

impl Rows {
    fn new(a: &DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut data = Vec::with_capacity(m * n);
        for row in a.row_iter() {
            data.extend(row.iter());
        }
        Self { data, n }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

fn check_dims(sys: &LinearSystem, y: &DVector<f64>, dist: &RowDistribution, x0: &DVector<f64>) -> Result<()> {
    let (m, n) = sys.a().shape();
    for (what, expected, found) in [
        ("measurement vector", m, y.len()),
        ("row distribution", m, dist.len()),
        ("initial iterate", n, x0.len()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            });
        }
    }
    Ok(())
}

fn squared_error(x: &[f64], x_true: &DVector<f64>) -> f64 {
    x.iter().zip(x_true.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn trajectory<R: Rng>(
    rows: &Rows,
    norms: &DVector<f64>,
    y: &DVector<f64>,
    dist: &RowDistribution,
    x0: &DVector<f64>,
    x_true: &DVector<f64>,
    k_max: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(squared_error(&x, x_true));
    for _ in 0..k_max {
        let i = dist.sample(rng.random::<f64>());
        rka_step(&mut x, rows.row(i), norms[i], y[i]);
        out.push(squared_error(&x, x_true));
    }
    out
}

/// Squared errors `||x^(k) - x_true||^2` for `k = 0..=k_max` of one run.
pub fn run_trial(
    sys: &LinearSystem,
    y: &DVector<f64>,
    dist: &RowDistribution,
    x0: &DVector<f64>,
    k_max: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_dims(sys, y, dist, x0)?;
    let rows = Rows::new(sys.a());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(trajectory(
        &rows,
        sys.row_norms(),
        y,
        dist,
        x0,
        sys.x_true(),
        k_max,
        &mut rng,
    ))
}

/// Mean squared error over `trials` independent runs.
///
/// Trial `t` draws from the stream `stream_seed(seed, t)`. With
/// `resample_noise` each trial first draws its own noise vector from that
/// stream; otherwise a single realization, taken from a stream reserved for
/// the purpose, is shared by every trial. Trials run on the current rayon
/// pool; the reduction is in trial order so results do not depend on the
/// thread count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mse(
    sys: &LinearSystem,
    noise: &NoiseSpec,
    dist: &RowDistribution,
    x0: &DVector<f64>,
    k_max: usize,
    trials: usize,
    seed: u64,
    resample_noise: bool,
) -> Result<EmpiricalCurve> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let m = sys.rows();
    noise.validate(m)?;
    let clean = sys.clean_measurements();
    check_dims(sys, &clean, dist, x0)?;
    let rows = Rows::new(sys.a());

    let shared_y = if resample_noise {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, u64::MAX));
        Some(&clean + noise.realize(m, &mut rng)?)
    };

    let runs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, t as u64));
            let y = match &shared_y {
                Some(y) => y.clone(),
                None => &clean + noise.realize(m, &mut rng).expect("validated noise"),
            };
            trajectory(&rows, sys.row_norms(), &y, dist, x0, sys.x_true(), k_max, &mut rng)
        })
        .collect();

    Ok(summarize(&runs, k_max))
}

fn summarize(runs: &[Vec<f64>], k_max: usize) -> EmpiricalCurve {
    let trials = runs.len();
    let tf = trials as f64;
    let mut mean = vec![0.0; k_max + 1];
    let mut stderr = vec![0.0; k_max + 1];
    for k in 0..=k_max {
        let first = runs[0][k];
        if runs.iter().all(|r| r[k] == first) {
            mean[k] = first;
            continue;
        }
        let mu = runs.iter().map(|r| r[k]).sum::<f64>() / tf;
        mean[k] = mu;
        if trials > 1 {
            let var = runs.iter().map(|r| (r[k] - mu).powi(2)).sum::<f64>() / (tf - 1.0);
            stderr[k] = (var / tf).sqrt();
        }
    }
    EmpiricalCurve {
        mse_mean: mean,
        mse_stderr: stderr,
        trials,
    }
}

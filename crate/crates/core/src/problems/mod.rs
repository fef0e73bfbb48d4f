//! Test systems `y = A x + eta` and their noise.

mod io;
mod tomography;

pub use io::{fmt_f64, load_system, load_vector, read_system, save_system, save_vector, write_system};
pub use tomography::{gen_tomography, tomography_matrix};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest admissible `lambda_min(A^T A) / lambda_max(A^T A)`.
pub const RANK_TOLERANCE: f64 = 1e-12;

const GAUSSIAN_RETRIES: usize = 3;

/// Measurement matrix together with the signal it measures.
///
/// Construction verifies `m >= n`, strictly positive row norms and full
/// column rank, so every downstream operation may assume them.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    x_true: DVector<f64>,
    row_norms: DVector<f64>,
    sigma_min: f64,
    sigma_max: f64,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, x_true: DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if n == 0 {
            return Err(Error::InvalidParameter("matrix has no columns".into()));
        }
        if m < n {
            return Err(Error::InvalidParameter(format!(
                "m must be ≥ n (got m = {m}, n = {n})"
            )));
        }
        if x_true.len() != n {
            return Err(Error::DimensionMismatch {
                what: "x_true",
                expected: n,
                found: x_true.len(),
            });
        }
        if a.iter().chain(x_true.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry".into()));
        }
        let row_norms = DVector::from_iterator(m, a.row_iter().map(|r| r.norm()));
        if let Some(i) = row_norms.iter().position(|&r| r <= 0.0) {
            return Err(Error::ZeroRow(i));
        }
        let (sigma_min, sigma_max) = linalg::extreme_singular_values(&a);
        if !(sigma_max > 0.0) || sigma_min * sigma_min <= RANK_TOLERANCE * sigma_max * sigma_max {
            return Err(Error::RankDeficient {
                sigma_min,
                sigma_max,
            });
        }
        Ok(Self {
            a,
            x_true,
            row_norms,
            sigma_min,
            sigma_max,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn x_true(&self) -> &DVector<f64> {
        &self.x_true
    }

    pub fn row_norms(&self) -> &DVector<f64> {
        &self.row_norms
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// Smallest singular value, from the eigenvalues of `A^T A`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.a.norm()
    }

    /// Same matrix, different signal.
    pub fn with_x_true(&self, x_true: DVector<f64>) -> Result<Self> {
        if x_true.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                what: "x_true",
                expected: self.cols(),
                found: x_true.len(),
            });
        }
        Ok(Self {
            x_true,
            ..self.clone()
        })
    }

    /// Noiseless measurements `A x_true`.
    pub fn clean_measurements(&self) -> DVector<f64> {
        &self.a * &self.x_true
    }
}

/// How the additive measurement noise is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// A deterministic noise vector, one entry per measurement.
    Fixed(DVector<f64>),
    /// Independent zero-mean normal entries with variance `sigma2`.
    IidZeroMean { sigma2: f64 },
}

impl NoiseSpec {
    pub fn none(m: usize) -> Self {
        NoiseSpec::Fixed(DVector::zeros(m))
    }

    /// A fixed noise vector with a random direction and squared norm `norm2`.
    pub fn fixed_with_norm2(m: usize, norm2: f64, seed: u64) -> Result<Self> {
        if !(norm2.is_finite() && norm2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise squared norm must be finite and >= 0, got {norm2}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let scale = norm2.sqrt() / dir.norm();
        Ok(NoiseSpec::Fixed(dir * scale))
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            NoiseSpec::Fixed(eta) => {
                if eta.len() != m {
                    return Err(Error::DimensionMismatch {
                        what: "noise vector",
                        expected: m,
                        found: eta.len(),
                    });
                }
                if eta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite noise entry".into()));
                }
            }
            NoiseSpec::IidZeroMean { sigma2 } => {
                if !(sigma2.is_finite() && *sigma2 >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "noise variance must be finite and >= 0, got {sigma2}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draw one realization of the noise using `rng`.
    pub fn realize<R: rand::Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<DVector<f64>> {
        self.validate(m)?;
        match self {
            NoiseSpec::Fixed(eta) => Ok(eta.clone()),
            NoiseSpec::IidZeroMean { sigma2 } => {
                let normal = Normal::new(0.0, sigma2.sqrt())
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(DVector::from_fn(m, |_, _| normal.sample(rng)))
            }
        }
    }
}

/// `m x n` matrix with i.i.d. standard normal entries and a normal signal
/// scaled by `x_scale`.
pub fn gen_gaussian(m: usize, n: usize, x_scale: f64, seed: u64) -> Result<LinearSystem> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if m < n {
        return Err(Error::InvalidParameter(format!(
            "m must be ≥ n (got m = {m}, n = {n})"
        )));
    }
    if !x_scale.is_finite() {
        return Err(Error::InvalidParameter("x_scale must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..=GAUSSIAN_RETRIES {
        let a = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let x = DVector::from_fn(n, |_, _| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * x_scale
        });
        match LinearSystem::new(a, x) {
            Ok(sys) => return Ok(sys),
            Err(e @ (Error::RankDeficient { .. } | Error::ZeroRow(_))) => {
                log::debug!("gaussian draw rejected: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one draw"))
}

/// `n x n` identity with `x_true = 0`.
pub fn gen_identity(n: usize) -> Result<LinearSystem> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    LinearSystem::new(DMatrix::identity(n, n), DVector::zeros(n))
}

/// Noisy measurements `y = A x_true + eta` and the noise realization used.
pub fn make_measurements(
    sys: &LinearSystem,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = noise.realize(sys.rows(), &mut rng)?;
    let y = sys.clean_measurements() + &eta;
    Ok((y, eta))
}

//! Experiment configuration: one JSON document per experiment.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::problems::{self, LinearSystem, NoiseSpec};
use crate::rka::RowDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSource {
    Gaussian {
        m: usize,
        n: usize,
        seed: u64,
        #[serde(default = "one")]
        x_scale: f64,
    },
    Tomography {
        grid: usize,
        angles: usize,
        rays: usize,
    },
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    None,
    Fixed { eta: Vec<f64> },
    FixedNorm { norm2: f64, seed: u64 },
    Iid { sigma2: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    RowNorm,
    Uniform,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StartConfig {
    Zero,
    Given(Vec<f64>),
    Random {
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Empirical,
    Exact,
    ExactAvg,
    BoundSv,
    BoundZf,
    BoundZfGeneral,
    BoundZfAvg,
    Floor,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Empirical => "empirical",
            CurveKind::Exact => "exact",
            CurveKind::ExactAvg => "exact_avg",
            CurveKind::BoundSv => "bound_sv",
            CurveKind::BoundZf => "bound_zf",
            CurveKind::BoundZfGeneral => "bound_zf_general",
            CurveKind::BoundZfAvg => "bound_zf_avg",
            CurveKind::Floor => "floor",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: MatrixSource,
    #[serde(default = "default_noise")]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub resample_noise: bool,
    #[serde(default = "default_distribution")]
    pub distribution: DistributionConfig,
    #[serde(default = "default_start")]
    pub x0: StartConfig,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Vec<CurveKind>,
}

fn default_noise() -> NoiseConfig {
    NoiseConfig::None
}

fn default_distribution() -> DistributionConfig {
    DistributionConfig::RowNorm
}

fn default_start() -> StartConfig {
    StartConfig::Zero
}

fn default_trials() -> usize {
    1
}

/// A parsed config together with the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub raw: String,
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(raw, base_dir)
    }

    pub fn from_str(raw: String, base_dir: PathBuf) -> Result<Self, CliError> {
        let config = serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        Ok(Self { raw, config, base_dir })
    }
}

/// Where a realized noise vector comes from, if there is one.
#[derive(Debug, Clone)]
pub struct ResolvedNoise {
    /// What the Monte Carlo harness samples from.
    pub spec: NoiseSpec,
    /// The single noise vector shared by every trial.
    pub realized: Option<DVector<f64>>,
    /// Variance of i.i.d. noise, when the descriptor is i.i.d.
    pub sigma2: Option<f64>,
}

fn config_err(e: crate::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl MatrixSource {
    pub fn build(&self, base_dir: &Path) -> Result<LinearSystem, CliError> {
        match self {
            MatrixSource::Gaussian { m, n, seed, x_scale } => {
                problems::gen_gaussian(*m, *n, *x_scale, *seed).map_err(config_err)
            }
            MatrixSource::Tomography { grid, angles, rays } => {
                problems::gen_tomography(*grid, *angles, *rays).map_err(config_err)
            }
            MatrixSource::File { path } => {
                let full = base_dir.join(path);
                problems::load_system(&full).map_err(|e| match e {
                    crate::Error::Io(_) => CliError::Runtime(e),
                    other => CliError::Config(format!("{}: {other}", full.display())),
                })
            }
        }
    }
}

impl NoiseConfig {
    pub fn resolve(&self, m: usize, resample: bool) -> Result<ResolvedNoise, CliError> {
        let fixed = |eta: DVector<f64>| -> Result<ResolvedNoise, CliError> {
            let spec = NoiseSpec::Fixed(eta.clone());
            spec.validate(m).map_err(config_err)?;
            Ok(ResolvedNoise {
                spec,
                realized: Some(eta),
                sigma2: None,
            })
        };
        match self {
            NoiseConfig::None => fixed(DVector::zeros(m)),
            NoiseConfig::Fixed { eta } => fixed(DVector::from_column_slice(eta)),
            NoiseConfig::FixedNorm { norm2, seed } => match NoiseSpec::fixed_with_norm2(m, *norm2, *seed) {
                Ok(NoiseSpec::Fixed(eta)) => fixed(eta),
                Ok(_) => unreachable!("fixed_with_norm2 returns a fixed vector"),
                Err(e) => Err(config_err(e)),
            },
            NoiseConfig::Iid { sigma2, seed } => {
                let spec = NoiseSpec::IidZeroMean { sigma2: *sigma2 };
                spec.validate(m).map_err(config_err)?;
                if resample {
                    Ok(ResolvedNoise {
                        spec,
                        realized: None,
                        sigma2: Some(*sigma2),
                    })
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    let eta = spec.realize(m, &mut rng).map_err(config_err)?;
                    Ok(ResolvedNoise {
                        spec: NoiseSpec::Fixed(eta.clone()),
                        realized: Some(eta),
                        sigma2: Some(*sigma2),
                    })
                }
            }
        }
    }
}

impl DistributionConfig {
    pub fn build(&self, sys: &LinearSystem) -> Result<RowDistribution, CliError> {
        match self {
            DistributionConfig::RowNorm => RowDistribution::row_norm(sys),
            DistributionConfig::Uniform => RowDistribution::uniform(sys.rows()),
            DistributionConfig::Custom(w) => {
                if w.len() != sys.rows() {
                    return Err(CliError::Config(format!(
                        "custom distribution has {} weights but the matrix has {} rows",
                        w.len(),
                        sys.rows()
                    )));
                }
                RowDistribution::from_weights(w)
            }
        }
        .map_err(config_err)
    }
}

impl StartConfig {
    pub fn build(&self, n: usize) -> Result<DVector<f64>, CliError> {
        match self {
            StartConfig::Zero => Ok(DVector::zeros(n)),
            StartConfig::Given(v) => {
                if v.len() != n {
                    return Err(CliError::Config(format!("x0 has length {} but n = {n}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CliError::Config("x0 has a non-finite entry".into()));
                }
                Ok(DVector::from_column_slice(v))
            }
            StartConfig::Random { seed, scale } => {
                if !scale.is_finite() {
                    return Err(CliError::Config("x0 scale must be finite".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(DVector::from_fn(n, |_, _| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v * scale
                }))
            }
        }
    }
}

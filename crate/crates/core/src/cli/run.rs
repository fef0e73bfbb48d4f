use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use serde::Serialize;

use super::config::{CurveKind, DistributionConfig, LoadedConfig, ResolvedNoise};
use super::{CliError, VERSION};
use crate::bounds;
use crate::lifted::LiftedModel;
use crate::noise_avg::NoiseAveragedModel;
use crate::rka::monte_carlo_mse;

/// `λ_max(Q)` is only estimated up to this dimension.
const LAMBDA_Q_MAX_N: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Scalars {
    pub m: usize,
    pub n: usize,
    pub k_max: usize,
    pub trials: usize,
    pub sigma_min: f64,
    pub frobenius: f64,
    pub kappa: f64,
    pub lambda_max_p: f64,
    pub lambda_max_q: Option<f64>,
    pub z0_norm2: f64,
    pub noise_norm2: Option<f64>,
    pub sigma2: Option<f64>,
    pub limiting_mse: Option<f64>,
    pub avg_limiting_mse: Option<f64>,
    pub zf_floor: Option<f64>,
    pub zf_general_floor: Option<f64>,
    pub zf_avg_floor: Option<f64>,
    /// `zf_avg_floor / avg_limiting_mse`
    pub zf_avg_ratio: Option<f64>,
}

/// Every requested curve, in output order, plus scalars and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBundle {
    pub version: String,
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub curves: Vec<(CurveKind, Vec<f64>)>,
    pub empirical_stderr: Option<Vec<f64>>,
    pub scalars: Scalars,
    pub warnings: Vec<String>,
}

impl CurveBundle {
    pub fn curve(&self, kind: CurveKind) -> Option<&[f64]> {
        self.curves.iter().find(|(k, _)| *k == kind).map(|(_, v)| v.as_slice())
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Check that each requested curve is computable and apply substitutions.
/// Returns the curves to compute, in order, and any warnings.
pub fn plan_curves(
    requested: &[CurveKind],
    noise: &ResolvedNoise,
    row_norm: bool,
) -> Result<(Vec<CurveKind>, Vec<String>), CliError> {
    if requested.is_empty() {
        return Err(CliError::Config("outputs must list at least one curve".into()));
    }
    let mut plan: Vec<CurveKind> = Vec::new();
    let mut warnings = Vec::new();
    for &kind in requested {
        if plan.contains(&kind) {
            return Err(CliError::Config(format!("curve {kind} requested twice")));
        }
        let realized = noise.realized.is_some();
        let iid = noise.sigma2.is_some();
        let conflict = match kind {
            CurveKind::Exact | CurveKind::BoundZf | CurveKind::BoundZfGeneral if !realized => {
                Some("a single realized noise vector, but noise is resampled in every trial")
            }
            CurveKind::ExactAvg | CurveKind::BoundZfAvg if !iid => Some("i.i.d. noise, but the noise descriptor is not iid"),
            _ => None,
        };
        if let Some(why) = conflict {
            return Err(CliError::Config(format!("curve {kind} requires {why}")));
        }
        if matches!(kind, CurveKind::BoundSv | CurveKind::BoundZf) && !row_norm {
            let substitute = if realized {
                CurveKind::BoundZfGeneral
            } else {
                CurveKind::BoundZfAvg
            };
            warnings.push(format!(
                "{kind} assumes norm-proportional row probabilities; emitting {substitute} instead"
            ));
            if !requested.contains(&substitute) && !plan.contains(&substitute) {
                plan.push(substitute);
            }
            continue;
        }
        plan.push(kind);
    }
    Ok((plan, warnings))
}

/// Compute every requested curve for one experiment.
pub fn cmd_run(loaded: &LoadedConfig) -> Result<CurveBundle, CliError> {
    let started = now();
    let cfg = &loaded.config;
    let k_max = cfg
        .k_max
        .ok_or_else(|| CliError::Config("k_max is required for run".into()))?;
    if cfg.trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }

    let sys = cfg.matrix.build(&loaded.base_dir)?;
    let (m, n) = (sys.rows(), sys.cols());
    let noise = cfg.noise.resolve(m, cfg.resample_noise)?;
    let dist = cfg.distribution.build(&sys)?;
    let x0 = cfg.x0.build(n)?;
    let row_norm = cfg.distribution == DistributionConfig::RowNorm;
    let (plan, warnings) = plan_curves(&cfg.outputs, &noise, row_norm)?;
    log::info!("system {m} x {n}, curves: {plan:?}");

    let z0: DVector<f64> = &x0 - sys.x_true();
    let base = LiftedModel::new(&sys, &dist, None)?;
    let lambda_max_p = base.lambda_max_p()?;
    let fixed = match &noise.realized {
        Some(eta) => Some(base.with_noise(eta)?),
        None => None,
    };
    let avg = match noise.sigma2 {
        Some(s2) => Some(NoiseAveragedModel::new(&base, s2)?),
        None => None,
    };

    let mut scalars = Scalars {
        m,
        n,
        k_max,
        trials: cfg.trials,
        sigma_min: sys.sigma_min(),
        frobenius: sys.frobenius_norm(),
        kappa: sys.frobenius_norm() / sys.sigma_min(),
        lambda_max_p,
        lambda_max_q: if n <= LAMBDA_Q_MAX_N { Some(base.lambda_max_q()?) } else { None },
        z0_norm2: crate::linalg::sum_squares(&z0),
        noise_norm2: noise.realized.as_ref().map(|e| e.norm_squared()),
        sigma2: noise.sigma2,
        ..Scalars::default()
    };
    if let (Some(model), Some(eta)) = (&fixed, &noise.realized) {
        scalars.limiting_mse = Some(model.limiting_mse()?);
        scalars.zf_general_floor = Some(bounds::zf_general_floor(model)?);
        if row_norm {
            scalars.zf_floor = Some(bounds::zf_floor(&sys, eta));
        }
    }
    if let Some(avg) = &avg {
        let limit = avg.avg_limiting_mse()?;
        let floor = bounds::zf_avg_floor(avg)?;
        scalars.avg_limiting_mse = Some(limit);
        scalars.zf_avg_floor = Some(floor);
        scalars.zf_avg_ratio = (limit > 0.0).then(|| floor / limit);
    }

    let mut curves = Vec::with_capacity(plan.len());
    let mut empirical_stderr = None;
    for &kind in &plan {
        log::debug!("computing {kind}");
        let values = match kind {
            CurveKind::Empirical => {
                let emp = monte_carlo_mse(
                    &sys,
                    &noise.spec,
                    &dist,
                    &x0,
                    k_max,
                    cfg.trials,
                    cfg.seed,
                    cfg.resample_noise,
                )?;
                empirical_stderr = Some(emp.mse_stderr);
                emp.mse_mean
            }
            CurveKind::Exact => fixed.as_ref().expect("planned").exact_mse_curve(&z0, k_max)?.values,
            CurveKind::ExactAvg => avg.as_ref().expect("planned").avg_mse_curve(&z0, k_max)?.values,
            CurveKind::BoundSv => bounds::sv_bound_curve(&sys, &z0, k_max),
            CurveKind::BoundZf => {
                bounds::zf_bound_curve(&sys, &z0, noise.realized.as_ref().expect("planned"), k_max)
            }
            CurveKind::BoundZfGeneral => bounds::zf_general_bound_curve(fixed.as_ref().expect("planned"), &z0, k_max)?,
            CurveKind::BoundZfAvg => bounds::zf_avg_bound_curve(avg.as_ref().expect("planned"), &z0, k_max)?,
            CurveKind::Floor => {
                let floor = if cfg.resample_noise && scalars.avg_limiting_mse.is_some() {
                    scalars.avg_limiting_mse
                } else {
                    scalars.limiting_mse.or(scalars.avg_limiting_mse)
                };
                vec![floor.expect("a floor is always available"); k_max + 1]
            }
        };
        curves.push((kind, values));
    }

    Ok(CurveBundle {
        version: format!("kaczlab {VERSION}"),
        config: loaded.raw.clone(),
        started_unix: started,
        finished_unix: now(),
        curves,
        empirical_stderr,
        scalars,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::NoiseSpec;

    fn realized() -> ResolvedNoise {
        ResolvedNoise {
            spec: NoiseSpec::none(3),
            realized: Some(DVector::zeros(3)),
            sigma2: None,
        }
    }

    fn resampled() -> ResolvedNoise {
        ResolvedNoise {
            spec: NoiseSpec::IidZeroMean { sigma2: 0.1 },
            realized: None,
            sigma2: Some(0.1),
        }
    }

    #[test]
    fn incompatible_requests() {
        assert!(plan_curves(&[CurveKind::ExactAvg], &realized(), true).is_err());
        assert!(plan_curves(&[CurveKind::Exact], &resampled(), true).is_err());
        assert!(plan_curves(&[CurveKind::BoundZf], &resampled(), true).is_err());
        assert!(plan_curves(&[], &realized(), true).is_err());
        assert!(plan_curves(&[CurveKind::Exact, CurveKind::Exact], &realized(), true).is_err());
        match plan_curves(&[CurveKind::ExactAvg], &realized(), true) {
            Err(CliError::Config(msg)) => assert!(msg.contains("exact_avg"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_row_norm_bounds_are_substituted() {
        let (plan, warnings) =
            plan_curves(&[CurveKind::Exact, CurveKind::BoundSv, CurveKind::BoundZf], &realized(), false).unwrap();
        assert_eq!(plan, vec![CurveKind::Exact, CurveKind::BoundZfGeneral]);
        assert_eq!(warnings.len(), 2);

        let (plan, _) = plan_curves(&[CurveKind::BoundSv, CurveKind::ExactAvg], &resampled(), false).unwrap();
        assert_eq!(plan, vec![CurveKind::BoundZfAvg, CurveKind::ExactAvg]);

        let (plan, warnings) = plan_curves(&[CurveKind::BoundSv], &realized(), true).unwrap();
        assert_eq!(plan, vec![CurveKind::BoundSv]);
        assert!(warnings.is_empty());
    }
}

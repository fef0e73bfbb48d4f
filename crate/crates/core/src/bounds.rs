//! Classical upper bounds on the MSE, for comparison with the exact curves.
//!
//! `sv_bound_curve` and `zf_bound_curve` assume norm-proportional row
//! probabilities; the `zf_general` forms hold for any distribution.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lifted::LiftedModel;
use crate::linalg;
use crate::noise_avg::NoiseAveragedModel;
use crate::problems::LinearSystem;
use crate::rka::RowDistribution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionNumbers {
    /// `||A||_F ||A⁻¹||_2`
    pub kappa: f64,
    pub sigma_min: f64,
    pub frobenius: f64,
    pub lambda_max_p: f64,
}

pub fn condition_numbers(sys: &LinearSystem, dist: &RowDistribution) -> Result<ConditionNumbers> {
    let sigma_min = sys.sigma_min();
    if !(sigma_min > 0.0) {
        return Err(Error::RankDeficient {
            sigma_min,
            sigma_max: sys.sigma_max(),
        });
    }
    let frobenius = sys.frobenius_norm();
    let model = LiftedModel::new(sys, dist, None)?;
    Ok(ConditionNumbers {
        kappa: frobenius / sigma_min,
        sigma_min,
        frobenius,
        lambda_max_p: model.lambda_max_p()?,
    })
}

fn geometric(rate: f64, start: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max).map(|k| rate.powi(k as i32) * start).collect()
}

/// `(1 - κ⁻²)^k ||z0||²`
pub fn sv_bound_curve(sys: &LinearSystem, z0: &DVector<f64>, k_max: usize) -> Vec<f64> {
    let kappa = sys.frobenius_norm() / sys.sigma_min();
    geometric(1.0 - 1.0 / (kappa * kappa), linalg::sum_squares(z0), k_max)
}

/// `(1 - κ⁻²)^k ||z0||² + ||η||² / σ_min²`
pub fn zf_bound_curve(sys: &LinearSystem, z0: &DVector<f64>, eta: &DVector<f64>, k_max: usize) -> Vec<f64> {
    let offset = zf_floor(sys, eta);
    let mut curve = sv_bound_curve(sys, z0, k_max);
    for v in &mut curve {
        *v += offset;
    }
    curve
}

/// `||η||² / σ_min²`
pub fn zf_floor(sys: &LinearSystem, eta: &DVector<f64>) -> f64 {
    eta.norm_squared() / (sys.sigma_min() * sys.sigma_min())
}

fn general(lambda: f64, z0: &DVector<f64>, floor: f64, k_max: usize) -> Vec<f64> {
    geometric(lambda, linalg::sum_squares(z0), k_max)
        .into_iter()
        .map(|v| v + floor)
        .collect()
}

/// `Σ p_i η̃_i² / (1 - λ_max(P))`
pub fn zf_general_floor(model: &LiftedModel) -> Result<f64> {
    let trace_e = model.vec_e()?.trace();
    Ok(trace_e / (1.0 - model.lambda_max_p()?))
}

/// `λ_max(P)^k ||z0||² + Σ p_i η̃_i² / (1 - λ_max(P))`
pub fn zf_general_bound_curve(model: &LiftedModel, z0: &DVector<f64>, k_max: usize) -> Result<Vec<f64>> {
    let floor = zf_general_floor(model)?;
    Ok(general(model.lambda_max_p()?, z0, floor, k_max))
}

/// `σ² Σ (p_i / ||a_i||²) / (1 - λ_max(P))`
pub fn zf_avg_floor(model: &NoiseAveragedModel) -> Result<f64> {
    let base = model.base();
    let weight: f64 = base
        .probabilities()
        .iter()
        .zip(base.row_norms().iter())
        .map(|(p, r)| p / (r * r))
        .sum();
    Ok(model.sigma2() * weight / (1.0 - base.lambda_max_p()?))
}

/// Noise average of the general bound:
/// `λ_max(P)^k ||z0||² + σ² Σ (p_i / ||a_i||²) / (1 - λ_max(P))`.
pub fn zf_avg_bound_curve(model: &NoiseAveragedModel, z0: &DVector<f64>, k_max: usize) -> Result<Vec<f64>> {
    let floor = zf_avg_floor(model)?;
    Ok(general(model.base().lambda_max_p()?, z0, floor, k_max))
}

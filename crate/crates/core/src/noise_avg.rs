//! MSE averaged over i.i.d. zero-mean noise of variance `σ²`.
//!
//! Every noise-dependent term of the fixed-noise formula is quadratic in
//! the noise, so its average needs only `σ²`. The averaged curve is
//!
//! ```text
//! E_η MSE(k) = tr Q^k (z0 z0ᵀ - E_η v₁) - tr E_η f_k(D) v₂ + tr E_η v₁
//! E_η v₁           = σ² (I - Q)⁻¹ [Σ p_i ã_i ã_iᵀ / ||a_i||² + g((I - P)⁻¹)]
//! E_η f_k(D) v₂    = σ² Σ_{ℓ<k} Q^ℓ g(P^{k-1-ℓ} (I - P)⁻¹)
//! ```
//!
//! Internally everything is computed for unit variance and scaled by `σ²`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lifted::{LiftedModel, MseCurve};
use crate::linalg;

/// A noise-free lifted model paired with a noise variance.
#[derive(Debug, Clone)]
pub struct NoiseAveragedModel {
    base: LiftedModel,
    sigma2: f64,
    // Σ (p_i² / ||a_i||²) ã_i ã_iᵀ, used by g
    g_gram: DMatrix<f64>,
    v_unit: OnceLock<DMatrix<f64>>,
}

impl NoiseAveragedModel {
    /// Any noise carried by `base` is dropped; only `sigma2` matters here.
    pub fn new(base: &LiftedModel, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be finite and >= 0, got {sigma2}"
            )));
        }
        let base = base.noise_free();
        let g_gram = linalg::weighted_gram(base.a_tilde(), &g_weights(&base));
        Ok(Self {
            base,
            sigma2,
            g_gram,
            v_unit: OnceLock::new(),
        })
    }

    pub fn base(&self) -> &LiftedModel {
        &self.base
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    fn g(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        g_with(&self.base, &self.g_gram, m)
    }

    /// `E_η v₁` for unit variance.
    fn expected_v1_unit(&self) -> Result<DMatrix<f64>> {
        if let Some(v) = self.v_unit.get() {
            return Ok(v.clone());
        }
        let v = self.solve_expected_v1_unit()?;
        Ok(self.v_unit.get_or_init(|| v).clone())
    }

    fn solve_expected_v1_unit(&self) -> Result<DMatrix<f64>> {
        let base = &self.base;
        let w = DVector::from_iterator(
            base.rows(),
            base.probabilities()
                .iter()
                .zip(base.row_norms().iter())
                .map(|(p, r)| p / (r * r)),
        );
        let mut rhs = linalg::weighted_gram(base.a_tilde(), &w);
        rhs += self.g(&base.inverse_i_minus_p()?);
        linalg::symmetrize(&mut rhs);
        base.solve_i_minus_q(&rhs, "expected v1 solve")
    }

    /// `mat(E_η v₁)`.
    pub fn expected_v1(&self) -> Result<DMatrix<f64>> {
        let n = self.base.dim();
        if self.sigma2 == 0.0 {
            return Ok(DMatrix::zeros(n, n));
        }
        Ok(self.expected_v1_unit()? * self.sigma2)
    }

    /// Noise-averaged limiting MSE, `tr mat(E_η v₁)`.
    pub fn avg_limiting_mse(&self) -> Result<f64> {
        Ok(self.expected_v1()?.trace().max(0.0))
    }

    /// Noise-averaged MSE for `k = 0..=k_max`.
    ///
    /// The `f_k` term follows `u_k = Q u_{k-1} + g(M_{k-1})` with
    /// `M_j = P M_{j-1}`, `M_0 = (I - P)⁻¹`, `u_0 = 0`; it is folded into the
    /// decaying term as `w_k = Q^k(-E_η v₁) - u_k`, so
    /// `MSE(k) = tr Q^k(z0 z0ᵀ) + σ² (tr w_k + tr E_η v₁)` at unit variance.
    pub fn avg_mse_curve(&self, z0: &DVector<f64>, k_max: usize) -> Result<MseCurve> {
        let base = &self.base;
        let n = base.dim();
        if z0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial error",
                expected: n,
                found: z0.len(),
            });
        }
        let noisy = self.sigma2 > 0.0;
        let (v_unit, p_dense, mut m_j) = if noisy {
            (
                self.expected_v1_unit()?,
                base.p_matrix(),
                base.inverse_i_minus_p()?,
            )
        } else {
            (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n))
        };
        let floor_unit = v_unit.trace();

        let mut clean = z0 * z0.transpose();
        let mut w = -v_unit;
        let mut values = Vec::with_capacity(k_max + 1);
        let noise_part = |w: &DMatrix<f64>| {
            if noisy {
                self.sigma2 * (w.trace() + floor_unit)
            } else {
                0.0
            }
        };
        values.push(linalg::sum_squares(z0));
        for _ in 0..k_max {
            clean = base.apply_q(&clean);
            linalg::symmetrize(&mut clean);
            if noisy {
                w = base.apply_q(&w) - self.g(&m_j);
                linalg::symmetrize(&mut w);
                m_j = &p_dense * &m_j;
            }
            values.push(clean.trace() + noise_part(&w));
        }
        Ok(MseCurve {
            values,
            floor: self.sigma2 * floor_unit.max(0.0),
        })
    }
}

fn g_weights(base: &LiftedModel) -> DVector<f64> {
    DVector::from_iterator(
        base.rows(),
        base.probabilities()
            .iter()
            .zip(base.row_norms().iter())
            .map(|(p, r)| p * p / (r * r)),
    )
}

/// `mat(g(M))` where `g(M) = Σ_i (p_i² / ||a_i||²) (ã_i ⊗ P_i + P_i ⊗ ã_i) M ã_i`.
///
/// With `w_i = M ã_i` each term is `P_i w_i ã_iᵀ + ã_i w_iᵀ P_i`, and the sum
/// of the first halves is `M G - Σ r_i (ã_iᵀ M ã_i) ã_i ã_iᵀ` for
/// `G = Σ r_i ã_i ã_iᵀ`.
pub fn g_apply(base: &LiftedModel, m: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = linalg::weighted_gram(base.a_tilde(), &g_weights(base));
    g_with(base, &gram, m)
}

fn g_with(base: &LiftedModel, gram: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if base.dim() == 1 {
        return DMatrix::zeros(1, 1);
    }
    let a = base.a_tilde();
    let r = g_weights(base);
    let am = a * m;
    let c = DVector::from_iterator(
        base.rows(),
        am.row_iter()
            .zip(a.row_iter())
            .zip(r.iter())
            .map(|((u, ar), ri)| ri * u.dot(&ar)),
    );
    let half = m * gram - linalg::weighted_gram(a, &c);
    let mut out = half.transpose();
    out += &half;
    out
}

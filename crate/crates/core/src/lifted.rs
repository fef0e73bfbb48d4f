//! Exact MSE of randomized Kaczmarz for a fixed noise vector.
//!
//! With normalized rows `ã_i = a_i / ||a_i||`, normalized noise
//! `η̃_i = η_i / ||a_i||` and projectors `P_i = I - ã_i ã_iᵀ`, the error
//! `z = x - x_true` evolves as `z ← P_i z + η̃_i ã_i`. Its mean and second
//! moment obey the coupled linear recursion
//!
//! ```text
//! S_k = Q S_{k-1} + D m_{k-1} + e        Q S = Σ p_i P_i S P_i
//! m_k = P m_{k-1} + f                    P   = Σ p_i P_i
//! ```
//!
//! with `D m = Σ p_i η̃_i (P_i m ã_iᵀ + ã_i mᵀ P_i)`, `e = Σ p_i η̃_i² ã_i ã_iᵀ`
//! and `f = Σ p_i η̃_i ã_i`, and `MSE(k) = tr S_k`. Every operator here is
//! applied implicitly in `O(m n²)` time; nothing of size `n² x n²` is
//! ever formed. For `n = 1` every `P_i` is zero and `P`, `Q`, `D` return
//! exact zeros.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, InnerSpace};
use crate::problems::LinearSystem;
use crate::rka::RowDistribution;

/// Relative residual the `(I - Q)` solver aims for.
pub const V1_TARGET_RESIDUAL: f64 = 1e-14;
/// Relative residual above which the `(I - Q)` solve is reported as failed.
pub const V1_ACCEPT_RESIDUAL: f64 = 1e-11;
/// Relative residual tolerance of the eigenvalue iterations.
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
pub const LANCZOS_MAX_ITER: usize = 2_000;

/// Normalized rows, noise and probabilities of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedModel {
    a_tilde: DMatrix<f64>,
    eta_tilde: Option<DVector<f64>>,
    p: DVector<f64>,
    row_norms: DVector<f64>,
    psum: f64,
    // Σ p_i ã_i ã_iᵀ, so that P = psum·I - gram
    gram: DMatrix<f64>,
    lambda_p: OnceLock<f64>,
    fixed: OnceLock<FixedPoint>,
}

/// Fixed points of the mean and second-moment recursions.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// `mat(v₁)`, the limiting second-moment matrix.
    pub v1: DMatrix<f64>,
    /// `v₂ = (I - P)⁻¹ f`, the limiting mean error.
    pub v2: DVector<f64>,
}

/// Predicted MSE per iteration together with its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub values: Vec<f64>,
    pub floor: f64,
}

pub fn build_model(sys: &LinearSystem, dist: &RowDistribution, eta: Option<&DVector<f64>>) -> Result<LiftedModel> {
    LiftedModel::new(sys, dist, eta)
}

impl LiftedModel {
    pub fn new(sys: &LinearSystem, dist: &RowDistribution, eta: Option<&DVector<f64>>) -> Result<Self> {
        let m = sys.rows();
        if dist.len() != m {
            return Err(Error::DimensionMismatch {
                what: "row distribution",
                expected: m,
                found: dist.len(),
            });
        }
        let row_norms = sys.row_norms().clone();
        if let Some(i) = row_norms.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::ZeroRow(i));
        }
        let mut a_tilde = sys.a().clone();
        for (i, mut row) in a_tilde.row_iter_mut().enumerate() {
            row /= row_norms[i];
        }
        let eta_tilde = match eta {
            None => None,
            Some(eta) if eta.len() != m => {
                return Err(Error::DimensionMismatch {
                    what: "noise vector",
                    expected: m,
                    found: eta.len(),
                })
            }
            Some(eta) => Some(eta.component_div(&row_norms)),
        };
        let p = dist.probabilities().clone();
        let gram = linalg::weighted_gram(&a_tilde, &p);
        Ok(Self {
            psum: p.sum(),
            a_tilde,
            eta_tilde,
            p,
            row_norms,
            gram,
            lambda_p: OnceLock::new(),
            fixed: OnceLock::new(),
        })
    }

    /// The same rows and probabilities with a different noise vector.
    pub fn with_noise(&self, eta: &DVector<f64>) -> Result<Self> {
        if eta.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                what: "noise vector",
                expected: self.rows(),
                found: eta.len(),
            });
        }
        Ok(Self {
            eta_tilde: Some(eta.component_div(&self.row_norms)),
            fixed: OnceLock::new(),
            ..self.clone()
        })
    }

    /// The same model without noise.
    pub fn noise_free(&self) -> Self {
        Self {
            eta_tilde: None,
            fixed: OnceLock::new(),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.a_tilde.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// Normalized rows `ã_i`, one per matrix row.
    pub fn a_tilde(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    pub fn eta_tilde(&self) -> Option<&DVector<f64>> {
        self.eta_tilde.as_ref()
    }

    pub fn probabilities(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn row_norms(&self) -> &DVector<f64> {
        &self.row_norms
    }

    pub fn has_noise(&self) -> bool {
        self.eta_tilde.is_some()
    }

    fn noise(&self) -> Result<&DVector<f64>> {
        self.eta_tilde.as_ref().ok_or(Error::NoNoise)
    }

    /// `P v = Σ p_i (v - ã_i ã_iᵀ v)`.
    pub fn apply_p(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 1 {
            return DVector::zeros(1);
        }
        let t = (&self.a_tilde * v).component_mul(&self.p);
        v * self.psum - self.a_tilde.tr_mul(&t)
    }

    /// `P` assembled as a dense `n x n` matrix.
    pub fn p_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        if n == 1 {
            return DMatrix::zeros(1, 1);
        }
        DMatrix::identity(n, n) * self.psum - &self.gram
    }

    /// `mat(Q vec(S)) = Σ p_i P_i S P_i`.
    ///
    /// Expanding `P_i S P_i` gives
    /// `S - ã_i ã_iᵀ S - S ã_i ã_iᵀ + (ã_iᵀ S ã_i) ã_i ã_iᵀ`, and the first
    /// three terms sum in closed form through `Σ p_i ã_i ã_iᵀ`.
    pub fn apply_q(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim() == 1 {
            return DMatrix::zeros(1, 1);
        }
        let u = &self.a_tilde * s;
        let c = DVector::from_iterator(
            self.rows(),
            u.row_iter()
                .zip(self.a_tilde.row_iter())
                .zip(self.p.iter())
                .map(|((ur, ar), pi)| pi * ur.dot(&ar)),
        );
        let mut out = s * self.psum - &self.gram * s - s * &self.gram;
        out += linalg::weighted_gram(&self.a_tilde, &c);
        out
    }

    /// `mat(D v) = Σ p_i η̃_i (P_i v ã_iᵀ + ã_i vᵀ P_i)`.
    pub fn apply_d(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let eta = self.noise()?;
        Ok(self.apply_d_with(eta, v))
    }

    fn apply_d_with(&self, eta: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        if self.dim() == 1 {
            return DMatrix::zeros(1, 1);
        }
        let q = self.p.component_mul(eta);
        let f = self.a_tilde.tr_mul(&q);
        let t = (&self.a_tilde * v).component_mul(&q);
        let mut out = linalg::weighted_gram(&self.a_tilde, &t) * -2.0;
        out.ger(1.0, v, &f, 1.0);
        out.ger(1.0, &f, v, 1.0);
        out
    }

    /// `mat(e) = Σ p_i η̃_i² ã_i ã_iᵀ`.
    pub fn vec_e(&self) -> Result<DMatrix<f64>> {
        let eta = self.noise()?;
        let w = self.p.component_mul(&eta.component_mul(eta));
        Ok(linalg::weighted_gram(&self.a_tilde, &w))
    }

    /// `f = Σ p_i η̃_i ã_i`.
    pub fn vec_f(&self) -> Result<DVector<f64>> {
        let eta = self.noise()?;
        Ok(self.a_tilde.tr_mul(&self.p.component_mul(eta)))
    }

    /// `(I - P)⁻¹` by dense Cholesky, or the singularity error.
    pub fn inverse_i_minus_p(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let i_minus_p = DMatrix::identity(n, n) - self.p_matrix();
        match i_minus_p.cholesky() {
            Some(ch) => Ok(ch.inverse()),
            None => Err(Error::SingularSystem {
                lambda_max: self.lambda_max_p().unwrap_or(f64::NAN),
            }),
        }
    }

    /// Solve `(I - P) v₂ = f` densely.
    pub fn solve_v2(&self) -> Result<DVector<f64>> {
        let n = self.dim();
        let f = match &self.eta_tilde {
            Some(_) => self.vec_f()?,
            None => return Ok(DVector::zeros(n)),
        };
        let i_minus_p = DMatrix::identity(n, n) - self.p_matrix();
        let chol = i_minus_p.clone().cholesky().ok_or_else(|| Error::SingularSystem {
            lambda_max: self.lambda_max_p().unwrap_or(f64::NAN),
        })?;
        let v2 = chol.solve(&f);
        let residual = (&i_minus_p * &v2 - &f).norm();
        if residual > 1e-10 * f.norm() {
            return Err(Error::NotConverged {
                what: "v2 solve",
                iterations: 1,
                residual: residual / f.norm(),
            });
        }
        Ok(v2)
    }

    /// Solve `(I - Q) v₁ = e + D v₂` by conjugate gradients on `n x n`
    /// matrices; `I - Q` is symmetric positive definite when `A` has full
    /// column rank.
    pub fn solve_v1(&self) -> Result<DMatrix<f64>> {
        Ok(self.fixed_point()?.v1)
    }

    /// Both fixed points; solved once per model.
    pub fn fixed_point(&self) -> Result<FixedPoint> {
        if let Some(fp) = self.fixed.get() {
            return Ok(fp.clone());
        }
        let fp = self.solve_fixed_point()?;
        Ok(self.fixed.get_or_init(|| fp).clone())
    }

    fn solve_fixed_point(&self) -> Result<FixedPoint> {
        let n = self.dim();
        let Some(eta) = &self.eta_tilde else {
            return Ok(FixedPoint {
                v1: DMatrix::zeros(n, n),
                v2: DVector::zeros(n),
            });
        };
        let v2 = self.solve_v2()?;
        let rhs = self.vec_e()? + self.apply_d_with(eta, &v2);
        let v1 = self.solve_i_minus_q(&rhs, "v1 solve")?;
        Ok(FixedPoint { v1, v2 })
    }

    /// `(I - Q)⁻¹ rhs` for symmetric `rhs`.
    pub fn solve_i_minus_q(&self, rhs: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let max_iter = (10 * n * n).max(50);
        let sol = linalg::conjugate_gradient(
            |s: &DMatrix<f64>| {
                let mut out = s - self.apply_q(s);
                linalg::symmetrize(&mut out);
                out
            },
            rhs,
            V1_TARGET_RESIDUAL,
            V1_ACCEPT_RESIDUAL,
            max_iter,
            what,
        )?;
        log::debug!(
            "{what}: {} CG iterations, relative residual {:e}",
            sol.iterations,
            sol.relative_residual
        );
        let mut x = sol.x;
        linalg::symmetrize(&mut x);
        Ok(x)
    }

    /// The homogeneous map `H: (S, m) ↦ (Q S + D m, P m)`.
    fn step(&self, s: &DMatrix<f64>, mean: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut s_next = self.apply_q(s);
        if let Some(eta) = &self.eta_tilde {
            s_next += self.apply_d_with(eta, mean);
        }
        linalg::symmetrize(&mut s_next);
        (s_next, self.apply_p(mean))
    }

    /// Exact MSE for `k = 0..=k_max` from initial error `z0`, by iterating
    /// the second-moment recursion forward.
    pub fn exact_mse_curve(&self, z0: &DVector<f64>, k_max: usize) -> Result<MseCurve> {
        self.check_z0(z0)?;
        let floor = self.limiting_mse()?;
        let (e, f) = match &self.eta_tilde {
            Some(_) => (Some(self.vec_e()?), Some(self.vec_f()?)),
            None => (None, None),
        };
        let mut s = z0 * z0.transpose();
        let mut mean = z0.clone();
        let mut values = Vec::with_capacity(k_max + 1);
        values.push(linalg::sum_squares(z0));
        for _ in 0..k_max {
            let (mut s_next, mut m_next) = self.step(&s, &mean);
            if let (Some(e), Some(f)) = (&e, &f) {
                s_next += e;
                m_next += f;
            }
            s = s_next;
            mean = m_next;
            values.push(s.trace());
        }
        Ok(MseCurve { values, floor })
    }

    /// Exact MSE at iteration `k` in closed form:
    /// `tr[H^k (z0 z0ᵀ - v₁, z0 - v₂) + (v₁, v₂)]`.
    pub fn exact_mse_at(&self, z0: &DVector<f64>, k: usize) -> Result<f64> {
        if k == 0 {
            self.check_z0(z0)?;
            return Ok(linalg::sum_squares(z0));
        }
        let fp = self.fixed_point()?;
        self.exact_mse_at_with(&fp, z0, k)
    }

    /// As [`exact_mse_at`](Self::exact_mse_at) with a precomputed fixed point.
    pub fn exact_mse_at_with(&self, fp: &FixedPoint, z0: &DVector<f64>, k: usize) -> Result<f64> {
        self.check_z0(z0)?;
        if k == 0 {
            return Ok(linalg::sum_squares(z0));
        }
        let mut s = z0 * z0.transpose() - &fp.v1;
        let mut mean = z0 - &fp.v2;
        for _ in 0..k {
            (s, mean) = self.step(&s, &mean);
        }
        Ok(s.trace() + fp.v1.trace())
    }

    /// Limiting MSE, `tr mat(v₁)`.
    pub fn limiting_mse(&self) -> Result<f64> {
        Ok(self.solve_v1()?.trace().max(0.0))
    }

    /// Largest eigenvalue of `P` by power iteration on the implicit operator.
    /// Computed once per model.
    pub fn lambda_max_p(&self) -> Result<f64> {
        if let Some(&v) = self.lambda_p.get() {
            return Ok(v);
        }
        let v = self.compute_lambda_max_p()?;
        Ok(*self.lambda_p.get_or_init(|| v))
    }

    fn compute_lambda_max_p(&self) -> Result<f64> {
        let n = self.dim();
        let start = DVector::from_element(n, 1.0);
        match linalg::power_iteration(|v: &DVector<f64>| self.apply_p(v), start, POWER_TOLERANCE, POWER_MAX_ITER, "power iteration on P") {
            Ok(ev) => {
                log::debug!("lambda_max(P): {} power iterations", ev.iterations);
                Ok(ev.value)
            }
            Err(e) => {
                log::warn!("{e}; falling back to a dense eigensolve");
                Ok(*linalg::sym_eigenvalues(&self.p_matrix()).last().expect("n >= 1"))
            }
        }
    }

    /// Largest eigenvalue of `Q` over symmetric matrices, by Lanczos on the
    /// implicit operator. Iterates are re-symmetrized after each product.
    pub fn lambda_max_q(&self) -> Result<f64> {
        let n = self.dim();
        let start = DMatrix::from_element(n, n, 1.0);
        let op = |s: &DMatrix<f64>| {
            let mut out = self.apply_q(s);
            linalg::symmetrize(&mut out);
            out
        };
        let budget = (n * (n + 1) / 2).min(LANCZOS_MAX_ITER);
        match linalg::lanczos_largest(op, start, POWER_TOLERANCE, budget, "Lanczos on Q") {
            Ok(v) => Ok(v),
            Err(e) if n * n <= 4096 => {
                log::warn!("{e}; falling back to a dense eigensolve");
                let dense = crate::oracle::dense_q(self);
                Ok(*linalg::sym_eigenvalues(&dense).last().expect("n >= 1"))
            }
            Err(e) => Err(e),
        }
    }

    fn check_z0(&self, z0: &DVector<f64>) -> Result<()> {
        if z0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "initial error",
                expected: self.dim(),
                found: z0.len(),
            });
        }
        Ok(())
    }
}

/// `||(mat a, b)||` over the lifted product space.
pub fn lifted_norm(s: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (s.inner(s) + v.inner(v)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, dense_lift_oracle, exhaustive_mse_curve};
    use crate::problems::{gen_gaussian, gen_identity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn random_model(m: usize, n: usize, seed: u64) -> (LinearSystem, RowDistribution, DVector<f64>, LiftedModel) {
        let sys = gen_gaussian(m, n, 1.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let dist = RowDistribution::from_weights(&w).unwrap();
        let eta = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
        let model = LiftedModel::new(&sys, &dist, Some(&eta)).unwrap();
        (sys, dist, eta, model)
    }

    #[test]
    fn build_model_normalizes() {
        let sys = gen_identity(3).unwrap();
        let d = RowDistribution::uniform(3).unwrap();
        let eta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let model = LiftedModel::new(&sys, &d, Some(&eta)).unwrap();
        assert_eq!(model.a_tilde(), &DMatrix::identity(3, 3));
        assert_eq!(model.eta_tilde().unwrap(), &eta);

        let a = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        let sys = LinearSystem::new(a, DVector::zeros(2)).unwrap();
        let d = RowDistribution::uniform(2).unwrap();
        let model = LiftedModel::new(&sys, &d, Some(&DVector::from_vec(vec![5.0, 0.0]))).unwrap();
        assert!((model.a_tilde()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((model.a_tilde()[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((model.eta_tilde().unwrap()[0] - 1.0).abs() < 1e-15);

        assert!(LiftedModel::new(&sys, &d, Some(&DVector::zeros(3))).is_err());
    }

    #[test]
    fn normalized_rows_recover_noise() {
        let (_, _, eta, model) = random_model(9, 4, 12);
        for (i, row) in model.a_tilde().row_iter().enumerate() {
            assert!((row.norm() - 1.0).abs() < 1e-14);
            let back = model.eta_tilde().unwrap()[i] * model.row_norms()[i];
            assert!((back - eta[i]).abs() <= 1e-14 * eta[i].abs().max(1.0));
        }
    }

    #[test]
    fn scalar_model_has_zero_projectors() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let sys = LinearSystem::new(a, DVector::zeros(1)).unwrap();
        let d = RowDistribution::from_weights(&[1.0, 2.0, 3.0]).unwrap();
        let eta = DVector::from_vec(vec![0.3, -0.1, 0.2]);
        let model = LiftedModel::new(&sys, &d, Some(&eta)).unwrap();
        let v = DVector::from_element(1, 2.5);
        assert!(model.apply_p(&v)[0].abs() < 1e-16);
        assert!(model.apply_q(&DMatrix::from_element(1, 1, 4.0))[(0, 0)].abs() < 1e-16);
        assert!(model.apply_d(&v).unwrap()[(0, 0)].abs() < 1e-16);

        let et = model.eta_tilde().unwrap();
        let p = d.probabilities();
        let expect_e: f64 = (0..3).map(|i| p[i] * et[i] * et[i]).sum();
        let expect_f: f64 = (0..3).map(|i| p[i] * model.a_tilde()[(i, 0)] * et[i]).sum();
        assert!(rel(model.vec_e().unwrap().trace(), expect_e) < 1e-14);
        assert!(rel(model.vec_f().unwrap()[0], expect_f) < 1e-14);

        assert!(rel(model.limiting_mse().unwrap(), expect_e) < 1e-12);
        let curve = model.exact_mse_curve(&DVector::from_element(1, 7.0), 5).unwrap();
        assert_eq!(curve.values[0], 49.0);
        for v in &curve.values[1..] {
            assert!(rel(*v, expect_e) < 1e-14);
        }
        assert_eq!(model.lambda_max_p().unwrap(), 0.0);
        assert_eq!(model.lambda_max_q().unwrap(), 0.0);
    }

    #[test]
    fn identity_operators() {
        let sys = gen_identity(3).unwrap();
        let d = RowDistribution::uniform(3).unwrap();
        let eta = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        let model = LiftedModel::new(&sys, &d, Some(&eta)).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((model.apply_p(&v) - &v * (2.0 / 3.0)).norm() < 1e-15);
        assert!((model.solve_v2().unwrap() - &eta).norm() < 1e-14);
        assert!(rel(model.lambda_max_p().unwrap(), 2.0 / 3.0) < 1e-12);
    }

    #[test]
    fn zero_noise_and_zero_inputs() {
        let (sys, dist, _, _) = random_model(5, 3, 4);
        let model = LiftedModel::new(&sys, &dist, Some(&DVector::zeros(5))).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        assert_eq!(model.apply_d(&v).unwrap().norm(), 0.0);
        assert_eq!(model.vec_e().unwrap().norm(), 0.0);
        assert_eq!(model.vec_f().unwrap().norm(), 0.0);
        assert_eq!(model.solve_v2().unwrap().norm(), 0.0);
        assert_eq!(model.solve_v1().unwrap().norm(), 0.0);
        assert_eq!(model.limiting_mse().unwrap(), 0.0);
        let zero = model.exact_mse_curve(&DVector::zeros(3), 20).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));

        let (_, _, _, noisy) = random_model(5, 3, 4);
        assert_eq!(noisy.apply_d(&DVector::zeros(3)).unwrap().norm(), 0.0);
        assert_eq!(noisy.apply_q(&DMatrix::zeros(3, 3)).norm(), 0.0);

        let free = model.noise_free();
        assert!(matches!(free.apply_d(&v), Err(Error::NoNoise)));
        assert!(matches!(free.vec_e(), Err(Error::NoNoise)));
        assert!(matches!(free.vec_f(), Err(Error::NoNoise)));
    }

    #[test]
    fn implicit_operators_match_dense_kronecker() {
        for seed in 0..5 {
            let (_, _, _, model) = random_model(4, 3, seed);
            let dense = dense_lift_oracle(&model).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let s = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));

            let p_v = &dense.p * &v;
            assert!((model.apply_p(&v) - &p_v).norm() <= 1e-13 * p_v.norm().max(1.0));

            let q_s = &dense.q * oracle::vec(&s);
            let got = oracle::vec(&model.apply_q(&s));
            assert!((got - &q_s).norm() <= 1e-12 * q_s.norm());

            let d_v = &dense.d * &v;
            let got = oracle::vec(&model.apply_d(&v).unwrap());
            assert!((got - &d_v).norm() <= 1e-12 * d_v.norm());

            assert!((oracle::vec(&model.vec_e().unwrap()) - &dense.e).norm() <= 1e-13 * dense.e.norm());
            assert!((model.vec_f().unwrap() - &dense.f).norm() <= 1e-13 * dense.f.norm());

            let v2 = dense.v2().unwrap();
            assert!((model.solve_v2().unwrap() - &v2).norm() <= 1e-10 * v2.norm());
            let v1 = dense.v1().unwrap();
            assert!((oracle::vec(&model.solve_v1().unwrap()) - &v1).norm() <= 1e-9 * v1.norm());
        }
    }

    #[test]
    fn q_preserves_symmetry_and_psd() {
        let (_, _, _, model) = random_model(6, 4, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let s = &b * b.transpose();
        let q = model.apply_q(&s);
        assert!((&q - q.transpose()).norm() < 1e-14 * q.norm());
        assert!(linalg::sym_eigenvalues(&q)[0] >= -1e-12);
    }

    #[test]
    fn curve_matches_exhaustive_enumeration() {
        for seed in 0..4 {
            let (sys, dist, eta, model) = random_model(3, 2, seed);
            let y = sys.clean_measurements() + &eta;
            let x0 = DVector::from_vec(vec![0.5, -1.5]);
            let z0 = &x0 - sys.x_true();
            let brute = exhaustive_mse_curve(sys.a(), &y, sys.x_true(), dist.probabilities().as_slice(), &x0, 4).unwrap();
            let curve = model.exact_mse_curve(&z0, 4).unwrap();
            for k in 0..=4 {
                assert!(rel(curve.values[k], brute[k]) < 1e-10, "k = {k}");
            }
        }
    }

    #[test]
    fn closed_form_matches_enumeration_and_recursion() {
        let (sys, dist, eta, model) = random_model(2, 2, 31);
        let y = sys.clean_measurements() + &eta;
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let z0 = &x0 - sys.x_true();
        let brute = exhaustive_mse_curve(sys.a(), &y, sys.x_true(), dist.probabilities().as_slice(), &x0, 3).unwrap();
        assert!(rel(model.exact_mse_at(&z0, 3).unwrap(), brute[3]) < 1e-10);
        assert_eq!(model.exact_mse_at(&z0, 0).unwrap(), z0.norm_squared());

        let (_, _, _, model) = random_model(12, 4, 8);
        let z0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let curve = model.exact_mse_curve(&z0, 50).unwrap();
        let fp = model.fixed_point().unwrap();
        for k in [1, 7, 50] {
            let closed = model.exact_mse_at_with(&fp, &z0, k).unwrap();
            assert!(rel(closed, curve.values[k]) < 1e-12, "k = {k}: {closed} vs {}", curve.values[k]);
        }
    }

    #[test]
    fn curve_converges_to_floor_within_envelope() {
        let (_, _, _, model) = random_model(20, 5, 2);
        let z0 = DVector::from_element(5, 1.0);
        let k_max = 400;
        let curve = model.exact_mse_curve(&z0, k_max).unwrap();
        let fp = model.fixed_point().unwrap();
        let lambda = model.lambda_max_p().unwrap();
        let c = lifted_norm(&(&z0 * z0.transpose() - &fp.v1), &(&z0 - &fp.v2)) * 5.0;
        assert!(curve.values.iter().all(|&v| v >= 0.0));
        assert!((curve.values[k_max] - curve.floor).abs() <= lambda.powi(k_max as i32) * c);
    }

    #[test]
    fn v1_is_symmetric_psd() {
        let (_, _, _, model) = random_model(10, 4, 17);
        let v1 = model.solve_v1().unwrap();
        assert!((&v1 - v1.transpose()).norm() == 0.0);
        assert!(linalg::sym_eigenvalues(&v1)[0] >= -1e-12);
    }

    #[test]
    fn spectral_radii_match_dense() {
        for seed in 0..5 {
            let (_, _, _, model) = random_model(6, 3, seed + 40);
            let dense = dense_lift_oracle(&model).unwrap();
            let lp = *linalg::sym_eigenvalues(&dense.p).last().unwrap();
            let lq = *linalg::sym_eigenvalues(&dense.q).last().unwrap();
            assert!(rel(model.lambda_max_p().unwrap(), lp) < 1e-9);
            assert!(rel(model.lambda_max_q().unwrap(), lq) < 1e-9);
            assert!(0.0 < lq && lq <= lp + 1e-9 && lp < 1.0);
        }
    }

    #[test]
    fn identity_spectral_radius() {
        for n in [2, 4, 9] {
            let sys = gen_identity(n).unwrap();
            let d = RowDistribution::row_norm(&sys).unwrap();
            let model = LiftedModel::new(&sys, &d, None).unwrap();
            let expect = 1.0 - 1.0 / n as f64;
            assert!(rel(model.lambda_max_p().unwrap(), expect) < 1e-10);
        }
    }

    #[test]
    fn dimension_errors() {
        let (_, _, _, model) = random_model(5, 3, 1);
        assert!(model.exact_mse_curve(&DVector::zeros(2), 3).is_err());
        assert!(model.exact_mse_at(&DVector::zeros(4), 3).is_err());
    }
}

//! Brute-force references for the lifted analysis.
//!
//! Everything here is built the slow, explicit way: projectors are formed
//! as dense matrices, lifted operators by Kronecker products, and
//! expectations over the algorithm by enumerating every row sequence.
//! These are the ground truth for tests and for `kaczlab validate`.

use nalgebra::{DMatrix, DVector};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lifted::LiftedModel;
use crate::problems::{gen_gaussian, LinearSystem};
use crate::rka::{stream_seed, RowDistribution};

/// Largest `n` for which the dense lift (size `n² + n`) is assembled.
pub const DENSE_MAX_N: usize = 12;
/// Largest number of row sequences the enumeration oracle will visit.
pub const ENUMERATION_LIMIT: usize = 100_000;

/// Explicit Kronecker-form operators of a lifted model.
#[derive(Debug, Clone)]
pub struct DenseLift {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
    pub f: DVector<f64>,
    /// `[[Q, D], [0, P]]`
    pub h: DMatrix<f64>,
}

/// Column-stacking `vec`.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for an `n x n` matrix.
pub fn mat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn unit_row(model: &LiftedModel, i: usize) -> DVector<f64> {
    model.a_tilde().row(i).transpose()
}

fn projector(a: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::identity(n, n) - a * a.transpose()
}

/// `ã ⊗ P + P ⊗ ã`, an `n² x n` block.
fn d_block(a: &DVector<f64>) -> DMatrix<f64> {
    let p = projector(a);
    a.kronecker(&p) + p.kronecker(a)
}

/// `Σ p_i P_i ⊗ P_i` without a size guard.
pub(crate) fn dense_q(model: &LiftedModel) -> DMatrix<f64> {
    let n = model.dim();
    let mut q = DMatrix::zeros(n * n, n * n);
    for i in 0..model.rows() {
        let p = projector(&unit_row(model, i));
        q += p.kronecker(&p) * model.probabilities()[i];
    }
    q
}

pub fn dense_lift_oracle(model: &LiftedModel) -> Result<DenseLift> {
    let n = model.dim();
    if n > DENSE_MAX_N {
        return Err(Error::SizeGuard {
            n,
            max: DENSE_MAX_N,
        });
    }
    let nn = n * n;
    let zero_eta = DVector::zeros(model.rows());
    let eta = model.eta_tilde().unwrap_or(&zero_eta);
    let mut p = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(nn, n);
    let mut e = DVector::zeros(nn);
    let mut f = DVector::zeros(n);
    for i in 0..model.rows() {
        let pi = model.probabilities()[i];
        let a = unit_row(model, i);
        p += projector(&a) * pi;
        d += d_block(&a) * (pi * eta[i]);
        e += a.kronecker(&a) * (pi * eta[i] * eta[i]);
        f += &a * (pi * eta[i]);
    }
    let q = dense_q(model);
    let mut h = DMatrix::zeros(nn + n, nn + n);
    h.view_mut((0, 0), (nn, nn)).copy_from(&q);
    h.view_mut((0, nn), (nn, n)).copy_from(&d);
    h.view_mut((nn, nn), (n, n)).copy_from(&p);
    Ok(DenseLift { p, q, d, e, f, h })
}

impl DenseLift {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `v₂ = (I - P)⁻¹ f` by dense inverse.
    pub fn v2(&self) -> Option<DVector<f64>> {
        let n = self.n();
        let inv = (DMatrix::identity(n, n) - &self.p).try_inverse()?;
        Some(inv * &self.f)
    }

    /// `v₁ = (I - Q)⁻¹ (e + D v₂)` by dense LU.
    pub fn v1(&self) -> Option<DVector<f64>> {
        let nn = self.q.nrows();
        let rhs = &self.e + &self.d * self.v2()?;
        (DMatrix::identity(nn, nn) - &self.q).lu().solve(&rhs)
    }

    /// Eigenvalues of `H`, real parts ascending (they are real: `H` is block
    /// triangular with symmetric diagonal blocks).
    pub fn h_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.h.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// `H^k` by repeated squaring.
    pub fn h_power(&self, k: u32) -> DMatrix<f64> {
        let dim = self.h.nrows();
        let mut result = DMatrix::identity(dim, dim);
        let mut base = self.h.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        result
    }
}

/// `vec(g(M)) = Σ_i (p_i² / ||a_i||²) (ã_i ⊗ P_i + P_i ⊗ ã_i) M ã_i`.
pub fn dense_g(model: &LiftedModel, m: &DMatrix<f64>) -> DVector<f64> {
    let n = model.dim();
    let mut out = DVector::zeros(n * n);
    for i in 0..model.rows() {
        let a = unit_row(model, i);
        let r = model.probabilities()[i].powi(2) / model.row_norms()[i].powi(2);
        out += d_block(&a) * (m * &a) * r;
    }
    out
}

/// Unit-variance `E_η v₁` from dense operators:
/// `(I - Q)⁻¹ [Σ p_i ã_i⊗ã_i / ||a_i||² + g((I - P)⁻¹)]`.
pub fn dense_expected_v1_unit(model: &LiftedModel) -> Result<DVector<f64>> {
    let lift = dense_lift_oracle(&model.noise_free())?;
    let n = lift.n();
    let nn = n * n;
    let inv_i_minus_p = (DMatrix::identity(n, n) - &lift.p)
        .try_inverse()
        .ok_or(Error::SingularSystem { lambda_max: f64::NAN })?;
    let mut rhs = dense_g(model, &inv_i_minus_p);
    for i in 0..model.rows() {
        let a = unit_row(model, i);
        rhs += a.kronecker(&a) * (model.probabilities()[i] / model.row_norms()[i].powi(2));
    }
    (DMatrix::identity(nn, nn) - &lift.q)
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularSystem { lambda_max: f64::NAN })
}

/// `Σ p_i P_i S P_i` with each projector formed explicitly.
pub fn explicit_q(model: &LiftedModel, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = model.dim();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..model.rows() {
        let p = projector(&unit_row(model, i));
        out += &p * s * &p * model.probabilities()[i];
    }
    out
}

/// A seeded small test problem: Gaussian system, random positive row
/// weights, a fixed noise vector and a starting point.
#[derive(Debug, Clone)]
pub struct Instance {
    pub sys: LinearSystem,
    pub dist: RowDistribution,
    pub eta: DVector<f64>,
    pub x0: DVector<f64>,
}

impl Instance {
    pub fn random(m: usize, n: usize, seed: u64) -> Result<Self> {
        let sys = gen_gaussian(m, n, 1.0, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1));
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let dist = RowDistribution::from_weights(&weights)?;
        let eta = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        Ok(Self { sys, dist, eta, x0 })
    }

    pub fn y(&self) -> DVector<f64> {
        self.sys.clean_measurements() + &self.eta
    }

    pub fn z0(&self) -> DVector<f64> {
        &self.x0 - self.sys.x_true()
    }

    pub fn model(&self) -> Result<LiftedModel> {
        LiftedModel::new(&self.sys, &self.dist, Some(&self.eta))
    }

    /// The enumeration oracle applied to this instance.
    pub fn exhaustive(&self, k_max: usize) -> Result<Vec<f64>> {
        exhaustive_mse_curve(
            self.sys.a(),
            &self.y(),
            self.sys.x_true(),
            self.dist.probabilities().as_slice(),
            &self.x0,
            k_max,
        )
    }
}

/// `E ||x^(k) - x_true||²` for `k = 0..=k_max`, by enumerating every row
/// sequence with its probability and running plain Kaczmarz projections on
/// the raw system.
pub fn exhaustive_mse_curve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    x_true: &DVector<f64>,
    p: &[f64],
    x0: &DVector<f64>,
    k_max: usize,
) -> Result<Vec<f64>> {
    let m = a.nrows();
    let visits = (1..=k_max).try_fold(1usize, |acc, _| acc.checked_mul(m));
    if visits.is_none_or(|v| v > ENUMERATION_LIMIT) {
        return Err(Error::InvalidParameter(format!(
            "{m}^{k_max} row sequences exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    }
    let rows: Vec<DVector<f64>> = (0..m).map(|i| a.row(i).transpose()).collect();
    let mut out = vec![0.0; k_max + 1];
    fn descend(
        depth: usize,
        prob: f64,
        x: &DVector<f64>,
        rows: &[DVector<f64>],
        y: &DVector<f64>,
        x_true: &DVector<f64>,
        p: &[f64],
        out: &mut [f64],
    ) {
        out[depth] += prob * (x - x_true).norm_squared();
        if depth + 1 == out.len() {
            return;
        }
        for (i, row) in rows.iter().enumerate() {
            let coef = (y[i] - row.dot(x)) / row.norm_squared();
            let next = x + row * coef;
            descend(depth + 1, prob * p[i], &next, rows, y, x_true, p, out);
        }
    }
    descend(0, 1.0, x0, &rows, y, x_true, p, &mut out);
    Ok(out)
}

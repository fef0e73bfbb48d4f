//! Small numerical kernels shared by the analysis modules: conjugate
//! gradients, power iteration and Lanczos over an abstract inner-product space,
//! plus a few dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimal inner-product space interface used by the iterative solvers.
///
/// Implemented for vectors and for square matrices under the Frobenius
/// inner product, which is how lifted `n^2`-vectors are stored.
pub trait InnerSpace: Clone {
    fn inner(&self, other: &Self) -> f64;
    /// `self += alpha * x`
    fn add_scaled(&mut self, alpha: f64, x: &Self);
    fn scale(&mut self, alpha: f64);
    fn zeros_like(&self) -> Self;

    fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

impl InnerSpace for DVector<f64> {
    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }
    fn add_scaled(&mut self, alpha: f64, x: &Self) {
        self.zip_apply(x, |a, b| *a += alpha * b);
    }
    fn scale(&mut self, alpha: f64) {
        *self *= alpha;
    }
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }
}

impl InnerSpace for DMatrix<f64> {
    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }
    fn add_scaled(&mut self, alpha: f64, x: &Self) {
        self.zip_apply(x, |a, b| *a += alpha * b);
    }
    fn scale(&mut self, alpha: f64) {
        *self *= alpha;
    }
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
}

#[derive(Debug, Clone)]
pub struct Solution<V> {
    pub x: V,
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from scratch at the end.
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Runs restarted CG on the true residual until it drops below `target`
/// relative to `||b||` or stops improving. Fails when the final relative
/// residual exceeds `accept` or the iteration budget runs out first.
pub fn conjugate_gradient<V, F>(
    op: F,
    b: &V,
    target: f64,
    accept: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<Solution<V>>
where
    V: InnerSpace,
    F: Fn(&V) -> V,
{
    let b_norm = b.norm();
    let mut x = b.zeros_like();
    if b_norm == 0.0 {
        return Ok(Solution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut rel;
    loop {
        let mut r = b.clone();
        r.add_scaled(-1.0, &op(&x));
        rel = r.norm() / b_norm;
        if rel <= target || iterations >= max_iter || rel >= 0.5 * best {
            break;
        }
        best = rel;

        // inner CG on the correction
        let mut dx = r.zeros_like();
        let mut p = r.clone();
        let mut rs = r.inner(&r);
        let inner_target = (0.1 * target * b_norm).powi(2);
        while iterations < max_iter {
            iterations += 1;
            let ap = op(&p);
            let pap = p.inner(&ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rs / pap;
            dx.add_scaled(alpha, &p);
            r.add_scaled(-alpha, &ap);
            let rs_new = r.inner(&r);
            if rs_new <= inner_target {
                break;
            }
            let beta = rs_new / rs;
            p.scale(beta);
            p.add_scaled(1.0, &r);
            rs = rs_new;
        }
        x.add_scaled(1.0, &dx);
    }
    if rel <= accept {
        Ok(Solution {
            x,
            iterations,
            relative_residual: rel,
        })
    } else {
        Err(Error::NotConverged {
            what,
            iterations,
            residual: rel,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair<V> {
    pub value: f64,
    pub vector: V,
    pub iterations: usize,
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
///
/// Stops once `||A v - lambda v|| <= tol * lambda` for the Rayleigh quotient
/// `lambda`. An operator that annihilates the start vector reports 0.
pub fn power_iteration<V, F>(op: F, start: V, tol: f64, max_iter: usize, what: &'static str) -> Result<Eigenpair<V>>
where
    V: InnerSpace,
    F: Fn(&V) -> V,
{
    let mut v = start;
    let n0 = v.norm();
    v.scale(1.0 / n0);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut w = op(&v);
        let lambda = v.inner(&w);
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return Ok(Eigenpair {
                value: 0.0,
                vector: v,
                iterations: it,
            });
        }
        let mut r = w.clone();
        r.add_scaled(-lambda, &v);
        residual = r.norm();
        w.scale(1.0 / w_norm);
        if residual <= tol * lambda.abs() {
            return Ok(Eigenpair {
                value: lambda,
                vector: w,
                iterations: it,
            });
        }
        v = w;
    }
    Err(Error::NotConverged {
        what,
        iterations: max_iter,
        residual,
    })
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization.
///
/// Uses the same stopping rule as [`power_iteration`]: the Ritz residual
/// `||A v - theta v||` must fall below `tol * theta`.
pub fn lanczos_largest<V, F>(op: F, start: V, tol: f64, max_iter: usize, what: &'static str) -> Result<f64>
where
    V: InnerSpace,
    F: Fn(&V) -> V,
{
    let mut v = start;
    let n0 = v.norm();
    v.scale(1.0 / n0);
    let mut basis: Vec<V> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut residual = f64::INFINITY;
    let mut next_check = 1;
    for it in 1..=max_iter {
        let mut w = op(&v);
        let a = v.inner(&w);
        w.add_scaled(-a, &v);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            w.add_scaled(-b, prev);
        }
        basis.push(v);
        for _ in 0..2 {
            for q in &basis {
                let c = q.inner(&w);
                w.add_scaled(-c, q);
            }
        }
        alpha.push(a);
        let b = w.norm();

        let exhausted = b <= 1e-14 * alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if it >= next_check || exhausted || it == max_iter {
            next_check = it + (it / 10).max(1);
            let k = alpha.len();
            let mut t = DMatrix::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alpha[i];
                if i + 1 < k {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = t.symmetric_eigen();
            let (idx, theta) = eig
                .eigenvalues
                .iter()
                .copied()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("k >= 1");
            residual = b * eig.eigenvectors[(k - 1, idx)].abs();
            if exhausted || residual <= tol * theta.abs() {
                return Ok(if theta.abs() <= 1e-14 { 0.0 } else { theta });
            }
        }
        beta.push(b);
        w.scale(1.0 / b);
        v = w;
    }
    Err(Error::NotConverged {
        what,
        iterations: max_iter,
        residual,
    })
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `(sigma_min, sigma_max)` from the eigenvalues of `A^T A`.
pub fn extreme_singular_values(a: &DMatrix<f64>) -> (f64, f64) {
    let gram = a.tr_mul(a);
    let ev = sym_eigenvalues(&gram);
    let lo = ev.first().copied().unwrap_or(0.0).max(0.0);
    let hi = ev.last().copied().unwrap_or(0.0).max(0.0);
    (lo.sqrt(), hi.sqrt())
}

/// `A^T diag(w) A` for an `m x n` matrix `A`.
pub fn weighted_gram(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= w[i];
    }
    a.tr_mul(&scaled)
}

/// `Σ v_i²`, summed in index order.
pub fn sum_squares(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `(M + M^T) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

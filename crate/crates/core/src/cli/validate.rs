use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CliError, VERSION};
use crate::lifted::LiftedModel;
use crate::linalg::sym_eigenvalues;
use crate::noise_avg::{g_apply, NoiseAveragedModel};
use crate::oracle::{self, dense_lift_oracle, Instance};
use crate::problems::LinearSystem;
use crate::rka::RowDistribution;

const EXHAUSTIVE_TOL: f64 = 1e-10;
const DENSE_TOL: f64 = 1e-9;
const LAMBDA_TOL: f64 = 1e-9;
const SPECTRUM_TOL: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-12;
const SCALAR_TOL: f64 = 1e-12;
const K_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateOptions {
    #[serde(default)]
    pub seed: u64,
    #[serde(skip)]
    pub corrupt_lambda_tolerance: bool,
}

impl ValidateOptions {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("invalid validate config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instance: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Recorder<'a> {
    instance: String,
    checks: &'a mut Vec<CheckResult>,
}

impl Recorder<'_> {
    fn record(&mut self, name: &str, deviation: f64, tolerance: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            instance: self.instance.clone(),
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        });
    }
}

fn rel_vec(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(f64::MIN_POSITIVE)
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn max_rel(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(g, w)| rel(*g, *w)).fold(0.0, f64::max)
}

fn check_instance(inst: &Instance, lambda_tol: f64, rec: &mut Recorder<'_>) -> crate::Result<()> {
    let model = inst.model()?;
    let n = model.dim();
    let z0 = inst.z0();
    let brute = inst.exhaustive(K_MAX)?;

    let curve = model.exact_mse_curve(&z0, K_MAX)?;
    rec.record("exhaustive_curve", max_rel(&curve.values, &brute), EXHAUSTIVE_TOL);
    let fp = model.fixed_point()?;
    let closed = (0..=K_MAX)
        .map(|k| model.exact_mse_at_with(&fp, &z0, k))
        .collect::<crate::Result<Vec<_>>>()?;
    rec.record("exhaustive_closed_form", max_rel(&closed, &brute), EXHAUSTIVE_TOL);

    let dense = dense_lift_oracle(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    rec.record("dense_p", rel_vec(&model.apply_p(&v), &(&dense.p * &v)), DENSE_TOL);
    rec.record(
        "dense_q",
        rel_vec(&oracle::vec(&model.apply_q(&s)), &(&dense.q * oracle::vec(&s))),
        DENSE_TOL,
    );
    rec.record(
        "dense_d",
        rel_vec(&oracle::vec(&model.apply_d(&v)?), &(&dense.d * &v)),
        DENSE_TOL,
    );
    rec.record("dense_e", rel_vec(&oracle::vec(&model.vec_e()?), &dense.e), DENSE_TOL);
    rec.record("dense_f", rel_vec(&model.vec_f()?, &dense.f), DENSE_TOL);
    rec.record(
        "dense_g",
        rel_vec(&oracle::vec(&g_apply(&model, &s)), &oracle::dense_g(&model, &s)),
        DENSE_TOL,
    );
    let missing = || crate::Error::SingularSystem { lambda_max: f64::NAN };
    rec.record("dense_v2", rel_vec(&fp.v2, &dense.v2().ok_or_else(missing)?), DENSE_TOL);
    rec.record("dense_v1", rel_vec(&oracle::vec(&fp.v1), &dense.v1().ok_or_else(missing)?), DENSE_TOL);

    let lp = model.lambda_max_p()?;
    let lq = model.lambda_max_q()?;
    let violation = [-lq, lq - lp, lp - 1.0].into_iter().fold(0.0, f64::max);
    rec.record("lambda_order", violation, lambda_tol);
    let lp_dense = *sym_eigenvalues(&dense.p).last().expect("n >= 1");
    let lq_dense = *sym_eigenvalues(&dense.q).last().expect("n >= 1");
    rec.record("lambda_p_dense", rel(lp, lp_dense), lambda_tol);
    rec.record("lambda_q_dense", rel(lq, lq_dense), lambda_tol);

    let mut union: Vec<f64> = sym_eigenvalues(&dense.p);
    union.extend(sym_eigenvalues(&dense.q));
    union.sort_by(|a, b| a.total_cmp(b));
    let h = dense.h_eigenvalues();
    let spread = h.iter().zip(&union).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rec.record("h_spectrum", spread, SPECTRUM_TOL);

    let sym = &s + s.transpose();
    let explicit = oracle::explicit_q(&model, &sym).trace();
    rec.record("trace_q", rel(model.apply_q(&sym).trace(), explicit), TRACE_TOL);
    rec.record("trace_d", model.apply_d(&v)?.trace().abs(), TRACE_TOL);
    Ok(())
}

fn check_scalar(seed: u64, lambda_tol: f64, rec: &mut Recorder<'_>) -> crate::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 4;
    let a = DMatrix::from_fn(m, 1, |_, _| rng.random_range(0.5..2.0) * if rng.random() { 1.0 } else { -1.0 });
    let sys = LinearSystem::new(a, DVector::from_element(1, 0.7))?;
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let dist = RowDistribution::from_weights(&weights)?;
    let eta = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
    let model = LiftedModel::new(&sys, &dist, Some(&eta))?;
    let p = dist.probabilities();
    let norms = sys.row_norms();

    let floor: f64 = (0..m).map(|i| p[i] * (eta[i] / norms[i]).powi(2)).sum();
    rec.record("scalar_floor", rel(model.limiting_mse()?, floor), SCALAR_TOL);
    let curve = model.exact_mse_curve(&DVector::from_element(1, 3.0), K_MAX)?;
    rec.record("scalar_curve", max_rel(&curve.values[1..], &[floor; K_MAX]), SCALAR_TOL);
    rec.record("scalar_lambda_p", model.lambda_max_p()?.abs(), lambda_tol);
    rec.record("scalar_lambda_q", model.lambda_max_q()?.abs(), lambda_tol);

    let sigma2 = 0.01;
    let avg = NoiseAveragedModel::new(&model, sigma2)?;
    let avg_floor: f64 = sigma2 * (0..m).map(|i| p[i] / norms[i].powi(2)).sum::<f64>();
    rec.record("scalar_avg_floor", rel(avg.avg_limiting_mse()?, avg_floor), SCALAR_TOL);
    Ok(())
}

/// Run the oracle suite on seeded `3 x 2`, `4 x 3` and scalar instances.
pub fn cmd_validate(opts: &ValidateOptions) -> Result<ValidationReport, CliError> {
    let lambda_tol = if opts.corrupt_lambda_tolerance { -1.0 } else { LAMBDA_TOL };
    let mut checks = Vec::new();
    for (m, n, offset) in [(3, 2, 0), (4, 3, 1)] {
        let seed = opts.seed.wrapping_add(offset);
        let inst = Instance::random(m, n, seed)?;
        let mut rec = Recorder {
            instance: format!("gaussian {m}x{n} seed {seed}"),
            checks: &mut checks,
        };
        check_instance(&inst, lambda_tol, &mut rec)?;
    }
    let mut rec = Recorder {
        instance: format!("scalar 4x1 seed {}", opts.seed),
        checks: &mut checks,
    };
    check_scalar(opts.seed, lambda_tol, &mut rec)?;
    Ok(ValidationReport {
        version: format!("kaczlab {VERSION}"),
        seed: opts.seed,
        checks,
    })
}

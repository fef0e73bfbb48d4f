use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LoadedConfig, MatrixSource};
use super::output::write_json;
use super::{CliError, VERSION};
use crate::problems::save_system;

pub const MATRIX_FILE: &str = "matrix.txt";
pub const MANIFEST_FILE: &str = "matrix.json";

/// Sidecar describing a generated matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub matrix_file: String,
    pub m: usize,
    pub n: usize,
    /// Smallest singular value from an SVD of `A`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub frobenius: f64,
    pub generator: MatrixSource,
}

/// Build the configured matrix and write it with its manifest into `out`.
pub fn cmd_generate(loaded: &LoadedConfig, out: &Path) -> Result<Manifest, CliError> {
    let source = &loaded.config.matrix;
    let sys = source.build(&loaded.base_dir)?;
    let svd = sys.a().clone().svd(false, false);
    let sigma_min = svd.singular_values.min();
    let sigma_max = svd.singular_values.max();

    save_system(&sys, out.join(MATRIX_FILE))?;
    let manifest = Manifest {
        version: format!("kaczlab {VERSION}"),
        matrix_file: MATRIX_FILE.into(),
        m: sys.rows(),
        n: sys.cols(),
        sigma_min,
        sigma_max,
        frobenius: sys.a().norm(),
        generator: source.clone(),
    };
    write_json(&manifest, &out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

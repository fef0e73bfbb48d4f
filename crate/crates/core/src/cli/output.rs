use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::run::{CurveBundle, Scalars};
use super::CliError;
use crate::problems::fmt_f64;

#[derive(Serialize)]
struct ResultJson<'a> {
    version: &'a str,
    config: &'a str,
    started_unix: f64,
    finished_unix: f64,
    columns: Vec<&'a str>,
    scalars: &'a Scalars,
    warnings: &'a [String],
}

/// Column names and values in CSV order, `k` excluded.
pub fn columns(bundle: &CurveBundle) -> Vec<(&str, &[f64])> {
    let mut cols = Vec::new();
    for (kind, values) in &bundle.curves {
        cols.push((kind.name(), values.as_slice()));
        if kind.name() == "empirical" {
            if let Some(se) = &bundle.empirical_stderr {
                cols.push(("empirical_stderr", se.as_slice()));
            }
        }
    }
    cols
}

pub fn curves_csv(bundle: &CurveBundle) -> String {
    let cols = columns(bundle);
    let rows = cols.first().map_or(0, |(_, v)| v.len());
    let mut out = String::from("k");
    for (name, _) in &cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..rows {
        write!(out, "{k}").expect("writing to a String");
        for (_, values) in &cols {
            out.push(',');
            out.push_str(&fmt_f64(values[k]));
        }
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(crate::Error::Io(e.into())))?;
    fs::write(path, text + "\n").map_err(crate::Error::from)?;
    Ok(())
}

pub fn write_bundle(bundle: &CurveBundle, dir: &Path) -> Result<(), CliError> {
    fs::write(dir.join("curves.csv"), curves_csv(bundle)).map_err(crate::Error::from)?;
    let json = ResultJson {
        version: &bundle.version,
        config: &bundle.config,
        started_unix: bundle.started_unix,
        finished_unix: bundle.finished_unix,
        columns: columns(bundle).into_iter().map(|(name, _)| name).collect(),
        scalars: &bundle.scalars,
        warnings: &bundle.warnings,
    };
    write_json(&json, &dir.join("result.json"))
}

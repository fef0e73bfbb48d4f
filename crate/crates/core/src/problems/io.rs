//! Plain-text storage for systems and vectors.
//!
//! System file: `m n` on line 1, one matrix row per line, then a line
//! `x_true` followed by one line holding the `n` signal entries. Vector
//! file: the length on line 1, then one value per line. Numbers use 17
//! significant digits so a save/load round trip is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::LinearSystem;
use crate::error::{Error, Result};

const X_TRUE_MARKER: &str = "x_true";

/// Scientific notation with 17 significant digits; round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_system<W: Write>(sys: &LinearSystem, mut w: W) -> Result<()> {
    let (m, n) = sys.a().shape();
    writeln!(w, "{m} {n}")?;
    for row in sys.a().row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    writeln!(w, "{X_TRUE_MARKER}")?;
    let line: Vec<String> = sys.x_true().iter().map(|&v| fmt_f64(v)).collect();
    writeln!(w, "{}", line.join(" "))?;
    w.flush()?;
    Ok(())
}

pub fn save_system(sys: &LinearSystem, path: impl AsRef<Path>) -> Result<()> {
    write_system(sys, BufWriter::new(File::create(path)?))
}

fn parse_numbers(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>> {
    let vals = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric token '{tok}'"),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected {expected} values, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn read_system<R: BufRead>(r: R) -> Result<LinearSystem> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut last = 0;
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((no, line)) => {
                last = no;
                Ok((no, line?))
            }
            None => Err(Error::Parse {
                line: last,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    let (no, header) = next("header")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: no,
            msg: format!("malformed header '{header}', expected 'm n'"),
        })?;
    let [m, n] = dims[..] else {
        return Err(Error::Parse {
            line: no,
            msg: format!("malformed header '{header}', expected 'm n'"),
        });
    };

    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        let (no, line) = next(&format!("matrix row {} of {m}", i + 1))?;
        if line.trim() == X_TRUE_MARKER {
            return Err(Error::Parse {
                line: no,
                msg: format!("found '{X_TRUE_MARKER}' after {i} of {m} matrix rows"),
            });
        }
        data.extend(parse_numbers(&line, no, n)?);
    }
    let (no, marker) = next("'x_true' marker")?;
    if marker.trim() != X_TRUE_MARKER {
        return Err(Error::Parse {
            line: no,
            msg: format!("expected '{X_TRUE_MARKER}', found '{}'", marker.trim()),
        });
    }
    let (no, line) = next("x_true values")?;
    let x = parse_numbers(&line, no, n)?;

    let a = DMatrix::from_row_slice(m, n, &data);
    LinearSystem::new(a, DVector::from_vec(x))
}

pub fn load_system(path: impl AsRef<Path>) -> Result<LinearSystem> {
    read_system(BufReader::new(File::open(path)?))
}

pub fn save_vector(v: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", v.len())?;
    for &x in v.iter() {
        writeln!(w, "{}", fmt_f64(x))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty vector file".into(),
    })??;
    let len: usize = header.trim().parse().map_err(|_| Error::Parse {
        line: 1,
        msg: format!("malformed length '{}'", header.trim()),
    })?;
    let mut out = Vec::with_capacity(len);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.extend(parse_numbers(&line, i + 2, 1)?);
    }
    if out.len() != len {
        return Err(Error::Parse {
            line: out.len() + 1,
            msg: format!("expected {len} values, found {}", out.len()),
        });
    }
    Ok(DVector::from_vec(out))
}

//! Randomized Kaczmarz on noisy overdetermined systems.
//!
//! The crate runs the randomized Kaczmarz algorithm (RKA), predicts its
//! exact mean-squared-error trajectory by lifting the error recursion to
//! the space of second moments, computes the limiting error floor for a
//! fixed noise vector and averaged over i.i.d. noise, evaluates the
//! classical upper bounds, and checks all of it against Monte Carlo runs.
//!
//! Lifted quantities living in `R^{n^2}` are always stored as `n x n`
//! matrices; `vec` is column stacking, which matches nalgebra's
//! column-major storage.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod lifted;
pub mod linalg;
pub mod noise_avg;
pub mod oracle;
pub mod problems;
pub mod rka;

pub use error::{Error, Result};
pub use lifted::{LiftedModel, MseCurve};
pub use noise_avg::NoiseAveragedModel;
pub use problems::{LinearSystem, NoiseSpec};
pub use rka::{EmpiricalCurve, RowDistribution};

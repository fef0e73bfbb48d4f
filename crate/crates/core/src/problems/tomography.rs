//! Minimal parallel-beam tomography: each row holds the intersection
//! lengths of one straight ray with the pixels of a `grid x grid` image.
//!
//! The image occupies `[-grid/2, grid/2]^2` with unit pixels, pixel
//! `(ix, iy)` stored at column `iy * grid + ix`. Angles are equally spaced
//! in `[0, pi)` at half-step offsets `(k + 1/2) pi / num_angles`; for each
//! angle the ray offsets are centred in `rays_per_angle` equal bins across
//! the grid width.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::LinearSystem;
use crate::error::{Error, Result};

/// Raw ray-by-pixel matrix, zero rows already removed.
pub fn tomography_matrix(grid: usize, num_angles: usize, rays_per_angle: usize) -> Result<DMatrix<f64>> {
    if grid == 0 || num_angles == 0 || rays_per_angle == 0 {
        return Err(Error::InvalidParameter(
            "grid, angles and rays must all be positive".into(),
        ));
    }
    let n = grid * grid;
    let half = grid as f64 / 2.0;
    let width = grid as f64;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(num_angles * rays_per_angle);
    for k in 0..num_angles {
        let theta = (k as f64 + 0.5) * PI / num_angles as f64;
        let (sin, cos) = theta.sin_cos();
        // ray: p(t) = s * normal + t * dir
        let normal = (cos, sin);
        let dir = (-sin, cos);
        for j in 0..rays_per_angle {
            let s = -half + (j as f64 + 0.5) * width / rays_per_angle as f64;
            let origin = (s * normal.0, s * normal.1);
            let mut row = vec![0.0; n];
            for iy in 0..grid {
                for ix in 0..grid {
                    let x0 = ix as f64 - half;
                    let y0 = iy as f64 - half;
                    row[iy * grid + ix] =
                        chord_length(origin, dir, (x0, x0 + 1.0), (y0, y0 + 1.0));
                }
            }
            if row.iter().any(|&v| v > 0.0) {
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no ray intersects the grid".into()));
    }
    let m = rows.len();
    Ok(DMatrix::from_fn(m, n, |i, c| rows[i][c]))
}

/// Length of the segment of the line `origin + t * dir` inside the box.
fn chord_length(origin: (f64, f64), dir: (f64, f64), xs: (f64, f64), ys: (f64, f64)) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, u, (a, b)) in [(origin.0, dir.0, xs), (origin.1, dir.1, ys)] {
        if u.abs() < 1e-15 {
            // parallel to this slab; half-open so an edge ray lands in one pixel
            if !(a <= p && p < b) {
                return 0.0;
            }
        } else {
            let t1 = (a - p) / u;
            let t2 = (b - p) / u;
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    (hi - lo).max(0.0)
}

/// Smooth phantom: two Gaussian bumps, rescaled to peak 1.
fn phantom(grid: usize) -> DVector<f64> {
    let g = grid as f64;
    let bumps = [
        (-0.2 * g, 0.1 * g, 0.2 * g, 1.0),
        (0.25 * g, -0.2 * g, 0.15 * g, 0.7),
    ];
    let mut x = DVector::from_fn(grid * grid, |idx, _| {
        let cx = (idx % grid) as f64 + 0.5 - g / 2.0;
        let cy = (idx / grid) as f64 + 0.5 - g / 2.0;
        bumps
            .iter()
            .map(|&(bx, by, w, amp)| {
                amp * (-((cx - bx).powi(2) + (cy - by).powi(2)) / (2.0 * w * w)).exp()
            })
            .sum::<f64>()
    });
    let peak = x.max();
    x /= peak;
    x
}

/// Parallel-beam tomography system over a `grid x grid` image.
pub fn gen_tomography(grid: usize, num_angles: usize, rays_per_angle: usize) -> Result<LinearSystem> {
    let n = grid * grid;
    if num_angles * rays_per_angle < n {
        return Err(Error::InvalidParameter(format!(
            "m must be ≥ n: {num_angles} angles x {rays_per_angle} rays < {n} pixels"
        )));
    }
    let a = tomography_matrix(grid, num_angles, rays_per_angle)?;
    if a.nrows() < n {
        return Err(Error::InvalidParameter(format!(
            "only {} rays hit the grid, fewer than the {n} pixels",
            a.nrows()
        )));
    }
    LinearSystem::new(a, phantom(grid))
}

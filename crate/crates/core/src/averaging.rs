//! Disc averages and test-function pairings of lattice fields.

use crate::error::{KpzError, Result};
use crate::grid::{min_image, GridSpec, Point};
use crate::mollifier::MollifierProfile;
use crate::spectral::Spectral2d;
use serde::{Deserialize, Serialize};

/// Nodes whose positions lie within `radius` (torus metric, `<=`) of a center.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscStencil {
    pub center: Point,
    pub radius: f64,
    pub indices: Vec<usize>,
}

impl DiscStencil {
    pub fn new(grid: &GridSpec, center: Point, radius: f64) -> Result<Self> {
        let n = grid.n;
        let dx = grid.dx();
        let l = grid.side_len;
        let reach = (radius / dx).ceil() as isize + 1;
        let (cx, cy) = grid.nearest_node(center);
        let mut indices = Vec::new();
        let span = (2 * reach + 1).min(n as isize);
        for dy in -reach..-reach + span {
            for dx_i in -reach..-reach + span {
                let ix = (cx as isize + dx_i).rem_euclid(n as isize) as usize;
                let iy = (cy as isize + dy).rem_euclid(n as isize) as usize;
                let p = grid.node(ix, iy);
                let d = min_image(p[0] - center[0], l).hypot(min_image(p[1] - center[1], l));
                if d <= radius {
                    indices.push(iy * n + ix);
                }
            }
        }
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(KpzError::EmptyDisc { center, radius });
        }
        Ok(DiscStencil { center, radius, indices })
    }

    pub fn mean(&self, field: &[f64]) -> f64 {
        self.indices.iter().map(|&i| field[i]).sum::<f64>() / self.indices.len() as f64
    }
}

/// Arithmetic mean of `h` over nodes within `radius` of `center`.
pub fn local_average(h: &[f64], center: Point, radius: f64, grid: &GridSpec) -> Result<f64> {
    Ok(DiscStencil::new(grid, center, radius)?.mean(h))
}

/// Smooth compactly supported test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// The unit-mass mollifier rescaled to `radius`.
    Bump { center: Point, radius: f64 },
    /// `d/dx` of the bump; integrates to zero.
    Dipole { center: Point, radius: f64 },
}

impl TestFunction {
    pub fn support_radius(&self) -> f64 {
        match self {
            TestFunction::Bump { radius, .. } | TestFunction::Dipole { radius, .. } => *radius,
        }
    }

    pub fn eval(&self, profile: &MollifierProfile, x: Point, l: f64) -> f64 {
        match self {
            TestFunction::Bump { center, radius } => {
                let d = [min_image(x[0] - center[0], l), min_image(x[1] - center[1], l)];
                profile.phi_eps(d, *radius)
            }
            TestFunction::Dipole { center, radius } => {
                let d = [min_image(x[0] - center[0], l), min_image(x[1] - center[1], l)];
                let r2 = (d[0] * d[0] + d[1] * d[1]) / (radius * radius);
                if r2 >= 1.0 {
                    return 0.0;
                }
                // d/dx of c exp(-1/(1 - r^2)) / R^2
                let base = profile.phi_eps(d, *radius);
                -base * 2.0 * d[0] / (radius * radius) / (1.0 - r2).powi(2)
            }
        }
    }

    /// `g` at every node.
    pub fn sample(&self, profile: &MollifierProfile, grid: &GridSpec) -> Vec<f64> {
        let n = grid.n;
        let mut out = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                out.push(self.eval(profile, grid.node(ix, iy), grid.side_len));
            }
        }
        out
    }
}

/// Weights `W` such that `sum_y h(y) W(y)` equals the Riemann sum
/// `sum_x hbar_r(x) g(x) dx^2`, where `hbar_r` is the disc-averaged field.
pub fn pairing_weights(g: &[f64], grid: &GridSpec, radius: f64) -> Result<Vec<f64>> {
    let n = grid.n;
    let origin = DiscStencil::new(grid, [0.0, 0.0], radius)?;
    let mut disc = vec![0.0; n * n];
    let w = 1.0 / origin.indices.len() as f64;
    for &i in &origin.indices {
        disc[i] = w;
    }
    let sp = Spectral2d::<f64>::new(n);
    let mut work = sp.work();
    let mut a = sp.spectrum();
    let mut b = sp.spectrum();
    sp.forward(&disc, &mut a, &mut work);
    sp.forward(g, &mut b, &mut work);
    // the disc is symmetric, so correlation and convolution agree
    for (x, y) in b.iter_mut().zip(&a) {
        *x *= *y;
    }
    let mut out = vec![0.0; n * n];
    sp.inverse(&mut b, &mut out, &mut work);
    let dx2 = grid.dx() * grid.dx();
    out.iter_mut().for_each(|v| *v *= dx2);
    Ok(out)
}

/// `sum_x hbar_r(x) g(x) dx^2` computed directly, for small grids and tests.
pub fn pairing_direct(h: &[f64], g: &[f64], grid: &GridSpec, radius: f64) -> Result<f64> {
    let n = grid.n;
    let dx2 = grid.dx() * grid.dx();
    let mut acc = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let gv = g[iy * n + ix];
            if gv != 0.0 {
                acc += local_average(h, grid.node(ix, iy), radius, grid)? * gv * dx2;
            }
        }
    }
    Ok(acc)
}

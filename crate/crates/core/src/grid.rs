//! Torus lattice geometry and time stepping.

use crate::error::{KpzError, Result};
use crate::theory::ScaleSet;
use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub side_len: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        self.side_len / self.n as f64
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Grid with the smallest step count `>= steps_per_eps_sq * horizon / eps^2`.
    pub fn for_scale(side_len: f64, n: usize, horizon: f64, eps: f64) -> GridSpec {
        let steps = (8.0 * horizon / (eps * eps)).ceil().max(1.0);
        GridSpec { side_len, n, dt: horizon / steps, horizon }
    }

    pub fn with_steps(side_len: f64, n: usize, horizon: f64, steps: usize) -> GridSpec {
        GridSpec { side_len, n, dt: horizon / steps as f64, horizon }
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self, scale: &ScaleSet) -> Vec<String> {
        let mut out = Vec::new();
        let eps = scale.eps;
        if !self.n.is_power_of_two() || self.n < 4 {
            out.push(format!("grid.n = {} must be a power of two >= 4", self.n));
        }
        if !(self.side_len > 0.0 && self.side_len.is_finite()) {
            out.push(format!("grid.side_len = {} must be positive", self.side_len));
        } else if self.n > 0 && self.dx() > eps / 4.0 * (1.0 + 1e-12) {
            out.push(format!("dx = {} exceeds eps/4 = {}", self.dx(), eps / 4.0));
        }
        if scale.r_eps + 2.0 * eps > self.side_len / 4.0 {
            out.push(format!(
                "averaging radius {} plus mollifier guard {} exceeds side_len/4 = {}",
                scale.r_eps,
                2.0 * eps,
                self.side_len / 4.0
            ));
        }
        if !(self.dt > 0.0) || self.dt > eps * eps / 8.0 * (1.0 + 1e-12) {
            out.push(format!("dt = {} exceeds eps^2/8 = {}", self.dt, eps * eps / 8.0));
        }
        if !(self.horizon >= 0.0) {
            out.push(format!("horizon = {} must be non-negative", self.horizon));
        } else if self.dt > 0.0 && (self.steps() as f64 * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            out.push(format!("horizon {} is not a whole number of steps of {}", self.horizon, self.dt));
        }
        out
    }

    pub fn validate(&self, scale: &ScaleSet) -> Result<()> {
        let v = self.violations(scale);
        if v.is_empty() {
            Ok(())
        } else {
            Err(KpzError::Config(v))
        }
    }

    /// Lattice coordinate of node `(ix, iy)`.
    pub fn node(&self, ix: usize, iy: usize) -> Point {
        let dx = self.dx();
        [ix as f64 * dx, iy as f64 * dx]
    }

    /// Nearest node to `p` (after wrapping onto the torus).
    pub fn nearest_node(&self, p: Point) -> (usize, usize) {
        let dx = self.dx();
        let ix = (wrap(p[0], self.side_len) / dx).round() as usize % self.n;
        let iy = (wrap(p[1], self.side_len) / dx).round() as usize % self.n;
        (ix, iy)
    }

    pub fn center(&self) -> Point {
        [self.side_len / 2.0, self.side_len / 2.0]
    }
}

/// Wrap `x` into `[0, l)`.
pub fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Signed minimal-image displacement on a circle of length `l`.
pub fn min_image(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

pub fn torus_dist(a: Point, b: Point, l: f64) -> f64 {
    min_image(a[0] - b[0], l).hypot(min_image(a[1] - b[1], l))
}

/// Step counts for several mollification scales sharing one noise history.
///
/// Every count is a whole multiple of the next coarser one, so the noise
/// of a coarse step is an exact sum of finer increments, and each satisfies
/// `dt <= eps^2 / 8`. Among such ladders the one with the fewest total
/// steps is returned, in the order of `eps`.
pub fn coupled_step_counts(eps: &[f64], horizon: f64) -> Vec<usize> {
    if eps.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let need = |e: f64| (8.0 * horizon / (e * e) - 1e-9).ceil().max(1.0) as usize;
    let first = need(eps[order[0]]);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for start in first..=4 * first {
        let mut counts = vec![0; eps.len()];
        let mut prev = start;
        counts[order[0]] = start;
        for &k in &order[1..] {
            let mult = need(eps[k]).div_ceil(prev).max(1);
            prev *= mult;
            counts[k] = prev;
        }
        let total: usize = counts.iter().sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, counts));
        }
    }
    best.map(|(_, c)| c).unwrap_or_default()
}

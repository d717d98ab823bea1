//! Deterministic KPZ through Hopf-Cole: `hbar(t, x) = log (rho_t * e^h0)(x)`.

use crate::error::{KpzError, Result};
use crate::grid::{min_image, Point};
use crate::initial::{InitialCondition, TabulatedField};
use crate::quadrature::gauss_legendre_on;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Target absolute accuracy of `hbar`.
pub const HBAR_TOL: f64 = 1e-6;
/// Target absolute accuracy of disc averages.
pub const BALL_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterministicSolution {
    pub h0: InitialCondition,
    pub t: f64,
    /// Torus side when the solution lives on the torus; `None` for the plane.
    pub period: Option<f64>,
}

impl DeterministicSolution {
    pub fn new(h0: InitialCondition, t: f64) -> Self {
        DeterministicSolution { h0, t, period: None }
    }

    pub fn on_torus(h0: InitialCondition, t: f64, side_len: f64) -> Self {
        DeterministicSolution { h0, t, period: Some(side_len) }
    }

    pub fn eval(&self, x: Point) -> Result<f64> {
        match self.period {
            None => solve_hbar(&self.h0, self.t, x),
            Some(l) => solve_hbar_torus(&self.h0, self.t, x, l),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(KpzError::domain(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// `hbar(t, x)` on the plane.
pub fn solve_hbar(h0: &InitialCondition, t: f64, x: Point) -> Result<f64> {
    check_t(t)?;
    match h0 {
        InitialCondition::Zero => Ok(0.0),
        InitialCondition::Constant { c } => Ok(*c),
        _ if t == 0.0 => Ok(h0.h0(x)),
        InitialCondition::GaussianBump { amplitude, s0, center } => {
            let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
            Ok(bump_heat(*amplitude, *s0, t, d2).ln_1p())
        }
        InitialCondition::Tabulated(tab) => tabulated_heat(tab, t, x).map(f64::ln),
    }
}

/// `hbar(t, x)` for the periodic extension of `h0` with period `l`.
pub fn solve_hbar_torus(h0: &InitialCondition, t: f64, x: Point, l: f64) -> Result<f64> {
    check_t(t)?;
    match h0 {
        InitialCondition::GaussianBump { amplitude, s0, center } => {
            if t == 0.0 {
                return Ok(h0.h0_torus(x, l));
            }
            // images beyond 12 standard deviations are negligible
            let reach = (12.0 * (s0 + t).sqrt() / l).ceil() as i64 + 1;
            let dx0 = min_image(x[0] - center[0], l);
            let dy0 = min_image(x[1] - center[1], l);
            let mut acc = 0.0;
            for i in -reach..=reach {
                for j in -reach..=reach {
                    let d2 = (dx0 + i as f64 * l).powi(2) + (dy0 + j as f64 * l).powi(2);
                    acc += bump_heat(*amplitude, *s0, t, d2);
                }
            }
            Ok(acc.ln_1p())
        }
        _ => solve_hbar(h0, t, x),
    }
}

/// `rho_t * (a exp(-|.|^2 / 2 s0))` at squared distance `d2`.
fn bump_heat(a: f64, s0: f64, t: f64, d2: f64) -> f64 {
    a * s0 / (s0 + t) * (-d2 / (2.0 * (s0 + t))).exp()
}

/// `(rho_t * e^h0)(x)` for a tabulated `h0`: Gauss-Legendre per sub-cell of
/// the table (where `h0` is bilinear), at two orders.
fn tabulated_heat(tab: &TabulatedField, t: f64, x: Point) -> Result<f64> {
    let lo = tabulated_heat_order(tab, t, x, 4);
    let hi = tabulated_heat_order(tab, t, x, 6);
    // error in log of the result
    let err = ((hi - lo) / hi).abs();
    if err > HBAR_TOL {
        return Err(KpzError::Quadrature { achieved: err, tol: HBAR_TOL });
    }
    Ok(hi)
}

fn tabulated_heat_order(tab: &TabulatedField, t: f64, x: Point, order: usize) -> f64 {
    let dx = tab.dx();
    let sub = (dx / (t.sqrt() / 2.0)).ceil().max(1.0) as usize;
    let h = dx / sub as f64;
    let radius = 8.0 * t.sqrt();
    let (unit_x, unit_w) = gauss_legendre_on(order, 0.0, 1.0);
    let inv = 1.0 / (2.0 * PI * t);
    let i0 = ((x[0] - radius) / dx).floor() as i64;
    let i1 = ((x[0] + radius) / dx).ceil() as i64;
    let j0 = ((x[1] - radius) / dx).floor() as i64;
    let j1 = ((x[1] + radius) / dx).ceil() as i64;
    let mut total = 0.0;
    for j in j0..j1 {
        for i in i0..i1 {
            let (cx, cy) = (i as f64 * dx, j as f64 * dx);
            // skip cells entirely outside the truncation disc
            let nx = x[0].clamp(cx, cx + dx) - x[0];
            let ny = x[1].clamp(cy, cy + dx) - x[1];
            if nx * nx + ny * ny > radius * radius {
                continue;
            }
            let n = tab.n as i64;
            let v00 = tab.at_node(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize);
            let v10 = tab.at_node((i + 1).rem_euclid(n) as usize, j.rem_euclid(n) as usize);
            let v01 = tab.at_node(i.rem_euclid(n) as usize, (j + 1).rem_euclid(n) as usize);
            let v11 = tab.at_node((i + 1).rem_euclid(n) as usize, (j + 1).rem_euclid(n) as usize);
            for sj in 0..sub {
                for si in 0..sub {
                    for (qy, wy) in unit_x.iter().zip(&unit_w) {
                        let fy = (sj as f64 + qy) / sub as f64;
                        let y = cy + fy * dx;
                        for (qx, wx) in unit_x.iter().zip(&unit_w) {
                            let fx = (si as f64 + qx) / sub as f64;
                            let z = cx + fx * dx;
                            let h0 = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
                            let d2 = (x[0] - z).powi(2) + (x[1] - y).powi(2);
                            total += wx * wy * h * h * h0.exp() * inv * (-d2 / (2.0 * t)).exp();
                        }
                    }
                }
            }
        }
    }
    total
}

/// Average of `hbar(t, .)` over the disc `B(center, radius)`.
pub fn ball_average_hbar(h0: &InitialCondition, t: f64, center: Point, radius: f64) -> Result<f64> {
    ball_average_of(|p| solve_hbar(h0, t, p), center, radius)
}

/// Disc average of any pointwise function, polar Gauss-Legendre in r and
/// the trapezoid rule in the angle, checked at two orders.
pub fn ball_average_of(f: impl Fn(Point) -> Result<f64>, center: Point, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(KpzError::domain(format!("radius must be positive, got {radius}")));
    }
    let rule = |nr: usize, nt: usize| -> Result<f64> {
        let (rs, ws) = gauss_legendre_on(nr, 0.0, radius);
        let mut acc = 0.0;
        for (r, w) in rs.iter().zip(&ws) {
            let mut ring = 0.0;
            for k in 0..nt {
                let th = 2.0 * PI * k as f64 / nt as f64;
                ring += f([center[0] + r * th.cos(), center[1] + r * th.sin()])?;
            }
            acc += w * r * ring * 2.0 * PI / nt as f64;
        }
        Ok(acc / (PI * radius * radius))
    };
    let lo = rule(16, 32)?;
    let hi = rule(24, 48)?;
    if (hi - lo).abs() > BALL_TOL {
        return Err(KpzError::Quadrature { achieved: (hi - lo).abs(), tol: BALL_TOL });
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        assert_eq!(solve_hbar(&InitialCondition::Constant { c: 0.7 }, 3.0, [1.0, 2.0]).unwrap(), 0.7);
        let bump = InitialCondition::GaussianBump { amplitude: 1.0, s0: 1.0, center: [0.0, 0.0] };
        assert_eq!(solve_hbar(&bump, 0.0, [0.3, 0.0]).unwrap(), bump.h0([0.3, 0.0]));
        assert!((solve_hbar(&bump, 1.0, [0.0, 0.0]).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        assert!(solve_hbar(&bump, -1.0, [0.0, 0.0]).is_err());
        let c = ball_average_hbar(&InitialCondition::Constant { c: -0.2 }, 1.0, [0.0, 0.0], 1.0).unwrap();
        assert!((c + 0.2).abs() < 1e-14);
    }

    #[test]
    fn torus_bump_matches_plane_near_center() {
        let bump = InitialCondition::GaussianBump { amplitude: 1.0, s0: 0.5, center: [4.0, 4.0] };
        let a = solve_hbar(&bump, 0.5, [4.2, 3.9]).unwrap();
        let b = solve_hbar_torus(&bump, 0.5, [4.2, 3.9], 8.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

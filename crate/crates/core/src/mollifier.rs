//! The unit-scale mollifier and its self-convolution `V = phi * phi`.

use crate::error::{KpzError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SUPPORTED_KINDS: &[&str] = &["standard-bump"];

/// Exponential integral `E1(x)` for `0 < x <= 4` by its power series.
pub(crate) fn exp_integral_e1(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1.0) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// `int_0^1 exp(-a/u) du = exp(-a) - a E1(a)`.
fn bump_radial_integral(a: f64) -> f64 {
    (-a).exp() - a * exp_integral_e1(a)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifierProfile {
    pub kind: String,
    /// Samples per unit length of the tabulations.
    pub resolution: usize,
    /// `phi` on the `(2 resolution + 1)^2` nodes of `[-1, 1]^2`, row-major.
    pub samples: Vec<f64>,
    /// The constant `c` in `phi(x) = c exp(-1/(1 - |x|^2))`.
    pub normalization: f64,
    pub l2_norm_sq: f64,
    /// `V` at radii `k / resolution`, `k = 0..=2 resolution`.
    pub v_table: Vec<f64>,
}

impl MollifierProfile {
    /// Pointwise `phi(x)` at unit scale.
    pub fn phi(&self, x: [f64; 2]) -> f64 {
        bump(self.normalization, x[0] * x[0] + x[1] * x[1])
    }

    /// `phi^eps(x) = eps^-2 phi(x / eps)`.
    pub fn phi_eps(&self, x: [f64; 2], eps: f64) -> f64 {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / (eps * eps);
        bump(self.normalization, r2) / (eps * eps)
    }

    pub fn table_step(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    /// Side length (in nodes) of the `samples` table.
    pub fn table_side(&self) -> usize {
        2 * self.resolution + 1
    }
}

#[inline]
fn bump(c: f64, r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        c * (-1.0 / (1.0 - r2)).exp()
    }
}

pub fn build_profile(kind: &str, resolution: usize) -> Result<MollifierProfile> {
    if !SUPPORTED_KINDS.contains(&kind) {
        return Err(KpzError::UnknownProfile {
            kind: kind.to_string(),
            supported: SUPPORTED_KINDS.join(", "),
        });
    }
    if resolution < 256 {
        return Err(KpzError::domain(format!(
            "mollifier resolution must be at least 256 samples per unit length, got {resolution}"
        )));
    }
    let c = 1.0 / (PI * bump_radial_integral(1.0));
    let l2_norm_sq = c * c * PI * bump_radial_integral(2.0);

    let side = 2 * resolution + 1;
    let h = 1.0 / resolution as f64;
    let mut samples = vec![0.0; side * side];
    for iy in 0..side {
        let y = iy as f64 * h - 1.0;
        for ix in 0..side {
            let x = ix as f64 * h - 1.0;
            samples[iy * side + ix] = bump(c, x * x + y * y);
        }
    }

    // V along the x axis by the discrete autocorrelation of the table; the
    // trapezoid weights are all one because phi vanishes on the boundary.
    let v_table: Vec<f64> = (0..=2 * resolution)
        .map(|lag| {
            if lag >= side {
                return 0.0;
            }
            let mut acc = 0.0;
            for iy in 0..side {
                let row = &samples[iy * side..(iy + 1) * side];
                acc += row[lag..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            acc * h * h
        })
        .collect();

    Ok(MollifierProfile {
        kind: kind.to_string(),
        resolution,
        samples,
        normalization: c,
        l2_norm_sq,
        v_table,
    })
}

/// Radial evaluation of `V` by six-point Lagrange interpolation of the table.
pub fn v_kernel(profile: &MollifierProfile, r: f64) -> f64 {
    let r = r.abs();
    if r >= 2.0 {
        return 0.0;
    }
    if r == 0.0 {
        return profile.l2_norm_sq;
    }
    let table = &profile.v_table;
    let last = table.len() as isize - 1;
    let s = r * profile.resolution as f64;
    let base = s.floor() as isize - 2;
    let at = |k: isize| -> f64 {
        // V is even in r and vanishes beyond the table
        let k = k.abs();
        if k > last {
            0.0
        } else {
            table[k as usize]
        }
    };
    let mut value = 0.0;
    for j in 0..6 {
        let xj = (base + j) as f64;
        let mut w = 1.0;
        for m in 0..6 {
            if m != j {
                let xm = (base + m) as f64;
                w *= (s - xm) / (xj - xm);
            }
        }
        value += w * at(base + j);
    }
    value.max(0.0)
}

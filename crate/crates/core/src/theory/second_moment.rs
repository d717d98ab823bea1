//! `E[u(t,x) u(t,y)]` for flat initial data through the Feynman-Kac form
//! `E_{x0}[exp(beta_eps^2 int_0^tau V(sqrt2 B_r) dr)]`, solved as a radial
//! parabolic problem `m_tau = 1/2 (m'' + m'/rho) + beta_eps^2 V(sqrt2 rho) m`.

use super::ScaleSet;
use crate::error::{KpzError, Result};
use crate::mollifier::{v_kernel, MollifierProfile};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Largest grid (cells times steps) the solver is allowed to use.
const GRID_BUDGET: f64 = 4.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentOracle {
    pub value: f64,
    pub error_estimate: f64,
    /// True when the cutoff rule applied and no solve was needed.
    pub cutoff: bool,
}

/// Radius (in `rho`) of the support of `V(sqrt2 rho)`.
const SUPPORT: f64 = SQRT_2;

pub fn second_moment_oracle(
    scale: &ScaleSet,
    t: f64,
    separation: f64,
    profile: &MollifierProfile,
    tol: f64,
) -> Result<SecondMomentOracle> {
    if !(separation >= 0.0) || !(tol > 0.0) || !(t >= 0.0) {
        return Err(KpzError::domain(format!(
            "second moment oracle needs separation >= 0, t >= 0, tol > 0 (got {separation}, {t}, {tol})"
        )));
    }
    let tau = t / (scale.eps * scale.eps);
    let rho0 = separation / (scale.eps * SQRT_2);
    let exact = |cutoff| SecondMomentOracle { value: 1.0, error_estimate: 0.0, cutoff };
    if scale.beta_eps == 0.0 || tau == 0.0 {
        return Ok(exact(false));
    }
    // Cutoff: the radial process would have to travel more than eight
    // standard deviations to reach the support of V.
    if rho0 > SUPPORT + 8.0 * tau.sqrt() {
        return Ok(exact(true));
    }

    let coupling = scale.beta_eps * scale.beta_eps;
    let outer = rho0.max(SUPPORT) + 8.0 * tau.sqrt();
    let mut dr = 0.02;
    let mut dtau = 0.02;
    let mut coarse = solve(profile, coupling, tau, rho0, outer, dr, dtau);
    loop {
        let fine = solve(profile, coupling, tau, rho0, outer, dr / 2.0, dtau / 2.0);
        // second order in both dr and dtau
        let err = (fine - coarse).abs() / 3.0;
        let value = fine + (fine - coarse) / 3.0;
        if err <= tol {
            return Ok(SecondMomentOracle { value: value.max(1.0), error_estimate: err, cutoff: false });
        }
        dr /= 2.0;
        dtau /= 2.0;
        let cost = (outer / (dr / 2.0)) * (tau / (dtau / 2.0));
        if cost > GRID_BUDGET {
            return Err(KpzError::OracleResolution { achieved: err, tol });
        }
        coarse = fine;
    }
}

/// One Crank-Nicolson solve on a cell-centred grid with `m = 1` at `outer`.
fn solve(
    profile: &MollifierProfile,
    coupling: f64,
    tau: f64,
    rho0: f64,
    outer: f64,
    dr: f64,
    dtau_target: f64,
) -> f64 {
    let cells = (outer / dr).ceil() as usize;
    let steps = (tau / dtau_target).ceil().max(1.0) as usize;
    let dtau = tau / steps as f64;
    let inv_dr2 = 1.0 / (dr * dr);

    // Off-diagonal couplings of the operator 1/2 (1/rho)(rho m')'.
    let mut lo = vec![0.0; cells];
    let mut up = vec![0.0; cells];
    let mut pot = vec![0.0; cells];
    for i in 0..cells {
        let rho = (i as f64 + 0.5) * dr;
        let face_lo = i as f64 * dr;
        let face_up = (i as f64 + 1.0) * dr;
        lo[i] = 0.5 * face_lo / rho * inv_dr2;
        up[i] = 0.5 * face_up / rho * inv_dr2;
        pot[i] = coupling * v_kernel(profile, SQRT_2 * rho);
    }
    let apply = |m: &[f64], i: usize| -> f64 {
        let left = if i == 0 { m[0] } else { m[i - 1] };
        let right = if i + 1 == cells { 1.0 } else { m[i + 1] };
        lo[i] * (left - m[i]) + up[i] * (right - m[i]) + pot[i] * m[i]
    };

    let mut m = vec![1.0; cells];
    let mut rhs = vec![0.0; cells];
    let mut diag = vec![0.0; cells];
    let mut a = vec![0.0; cells];
    let mut c = vec![0.0; cells];
    let mut work = vec![0.0; cells];

    // A few half-size implicit Euler steps damp the start-up transient
    // before Crank-Nicolson takes over.
    let startup = 4.min(steps);
    let schedule = (0..2 * startup)
        .map(|_| (dtau / 2.0, 1.0))
        .chain((startup..steps).map(|_| (dtau, 0.5)));
    for (k, theta) in schedule {
        for i in 0..cells {
            let explicit = if theta < 1.0 { (1.0 - theta) * k * apply(&m, i) } else { 0.0 };
            rhs[i] = m[i] + explicit;
            a[i] = -theta * k * lo[i];
            c[i] = -theta * k * up[i];
            diag[i] = 1.0 + theta * k * (lo[i] + up[i] - pot[i]);
        }
        // reflecting face at rho = 0
        diag[0] += a[0];
        a[0] = 0.0;
        // Dirichlet ghost value 1 past the outer cell
        rhs[cells - 1] -= c[cells - 1];
        c[cells - 1] = 0.0;
        thomas(&a, &diag, &c, &mut rhs, &mut work);
        m.copy_from_slice(&rhs);
    }
    interpolate(&m, dr, rho0)
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], cp: &mut [f64]) {
    let n = d.len();
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let denom = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / denom;
        d[i] = (d[i] - a[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Value at `rho0` from the cell averages. Near the origin the solution is
/// even in rho, so `m(rho) = a + b rho^2` through the first two cells.
fn interpolate(m: &[f64], dr: f64, rho0: f64) -> f64 {
    let s = rho0 / dr - 0.5;
    if s <= 0.0 {
        let r0 = 0.5 * dr;
        let r1 = 1.5 * dr;
        let b = (m[1] - m[0]) / (r1 * r1 - r0 * r0);
        return m[0] + b * (rho0 * rho0 - r0 * r0);
    }
    let i = (s.floor() as usize).clamp(1, m.len() - 2);
    let x = s - i as f64;
    let (p, q, r) = (m[i - 1], m[i], m[i + 1]);
    q + 0.5 * x * (r - p) + 0.5 * x * x * (r - 2.0 * q + p)
}

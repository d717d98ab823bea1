//! Closed-form limit predictions for the mollified 2D KPZ equation in the
//! subcritical regime `0 < beta < sqrt(2*pi)`, plus the second-moment oracle.

mod second_moment;

pub use second_moment::{second_moment_oracle, SecondMomentOracle};

use crate::error::{KpzError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// sqrt(2*pi): the critical disorder strength.
pub const BETA_CRITICAL: f64 = 2.506_628_274_631_000_7;

/// All scalars derived from `(beta, gamma, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub beta: f64,
    pub gamma: f64,
    pub eps: f64,
    /// `beta / sqrt(log(1/eps))`
    pub beta_eps: f64,
    /// Renormalization constant per unit (macroscopic) time.
    pub c_eps: f64,
    /// Averaging radius `eps^(1 - gamma)`.
    pub r_eps: f64,
    /// Time-window exponent `(log(1/eps))^(-1/2)`.
    pub a_eps: f64,
}

impl ScaleSet {
    /// Length of the decomposition window in microscopic time, `eps^(-2(1-a_eps)) t`.
    pub fn window_micro(&self, t: f64) -> f64 {
        self.eps.powf(-2.0 * (1.0 - self.a_eps)) * t
    }

    /// The same window in macroscopic time, `eps^(2 a_eps) t`.
    pub fn window_macro(&self, t: f64) -> f64 {
        self.eps.powf(2.0 * self.a_eps) * t
    }

    pub fn log_inv_eps(&self) -> f64 {
        (1.0 / self.eps).ln()
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(KpzError::domain(format!("beta must be finite and non-negative, got {beta}")));
    }
    if beta >= BETA_CRITICAL {
        return Err(KpzError::Supercritical { beta });
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(KpzError::domain(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

pub fn make_scale_set(beta: f64, gamma: f64, eps: f64, phi_norm_sq: f64) -> Result<ScaleSet> {
    check_beta(beta)?;
    check_unit("gamma", gamma)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(KpzError::domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(phi_norm_sq > 0.0 && phi_norm_sq.is_finite()) {
        return Err(KpzError::domain(format!("phi_norm_sq must be positive, got {phi_norm_sq}")));
    }
    let log_inv = (1.0 / eps).ln();
    Ok(ScaleSet {
        beta,
        gamma,
        eps,
        beta_eps: beta / log_inv.sqrt(),
        c_eps: beta * beta * phi_norm_sq / (2.0 * eps * eps * log_inv),
        r_eps: eps.powf(1.0 - gamma),
        a_eps: 1.0 / log_inv.sqrt(),
    })
}

/// Variance of the Gaussian limit of the `eps^(1-gamma)` ball average.
pub fn sigma_gamma_sq(beta: f64, gamma: f64) -> Result<f64> {
    check_beta(beta)?;
    check_unit("gamma", gamma)?;
    let b2 = beta * beta;
    Ok(((2.0 * PI - b2 * gamma) / (2.0 * PI - b2)).ln())
}

/// `-1/2 log(2 pi / (2 pi - beta^2))`, the limiting mean of `h` for flat data.
pub fn height_shift(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(-0.5 * (2.0 * PI / (2.0 * PI - beta * beta)).ln())
}

/// Limiting covariance of `h` at two points `eps^(1 - zeta)` apart.
pub fn cov_prediction(beta: f64, zeta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_unit("zeta", zeta)?;
    let b2 = beta * beta;
    Ok(((2.0 * PI - b2 * zeta) / (2.0 * PI - b2)).ln())
}

/// `(p - 1)!!` for even `p`, as f64.
fn double_factorial_odd(p: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = p.saturating_sub(1);
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Centered Gaussian moment `E[X^p]` for `X ~ N(0, sigma_sq)`.
pub fn wick_moment(p: u32, sigma_sq: f64) -> Result<f64> {
    if p == 0 {
        return Err(KpzError::domain("wick moment order must be >= 1"));
    }
    if !(sigma_sq >= 0.0) {
        return Err(KpzError::domain(format!("sigma_sq must be non-negative, got {sigma_sq}")));
    }
    if p % 2 == 1 {
        return Ok(0.0);
    }
    Ok(sigma_sq.powi((p / 2) as i32) * double_factorial_odd(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPrediction {
    pub sigma_gamma_sq: f64,
    pub height_shift: f64,
    pub deterministic_part: f64,
    pub predicted_mean: f64,
}

impl LimitPrediction {
    /// True when the limit law is a point mass (`gamma = 1` or `beta = 0`).
    pub fn is_degenerate(&self) -> bool {
        self.sigma_gamma_sq == 0.0
    }
}

/// Limit law of the ball-averaged height. `det_part` is `hbar(t, x)` for
/// `gamma < 1` and the unit-ball average of `hbar(t, .)` for `gamma = 1`.
pub fn predicted_limit_law(scale: &ScaleSet, det_part: f64) -> Result<LimitPrediction> {
    let sigma = sigma_gamma_sq(scale.beta, scale.gamma)?;
    let shift = height_shift(scale.beta)?;
    Ok(LimitPrediction {
        // log(1) can come out as a tiny negative number
        sigma_gamma_sq: sigma.max(0.0),
        height_shift: shift,
        deterministic_part: det_part,
        predicted_mean: shift + det_part,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scale_set_trivial_case() {
        let e = (-1.0f64).exp();
        let s = make_scale_set(1.0, 0.5, e, 1.0).unwrap();
        assert_relative_eq!(s.beta_eps, 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.a_eps, 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.r_eps, (-0.5f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(s.c_eps, 1.0 / (2.0 * e * e), epsilon = 1e-12);
    }

    #[test]
    fn scale_set_beta_eps_value() {
        // 1.5 / sqrt(ln 20), evaluated independently to 10 digits
        let s = make_scale_set(1.5, 0.0, 0.05, 1.0).unwrap();
        assert_relative_eq!(s.beta_eps, 0.866_642_055_0, epsilon = 1e-9);
        assert_relative_eq!(s.r_eps, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn scale_set_rejects_out_of_regime() {
        assert!(matches!(make_scale_set(2.6, 0.5, 0.1, 1.0), Err(KpzError::Supercritical { .. })));
        assert!(matches!(make_scale_set(1.0, 0.5, 1.0, 1.0), Err(KpzError::Domain(_))));
        assert!(matches!(make_scale_set(1.0, 1.5, 0.1, 1.0), Err(KpzError::Domain(_))));
        assert!(matches!(make_scale_set(1.0, 0.5, 0.1, 0.0), Err(KpzError::Domain(_))));
    }

    #[test]
    fn sigma_gamma_values() {
        assert_eq!(sigma_gamma_sq(1.0, 1.0).unwrap(), 0.0);
        assert!(sigma_gamma_sq(1e-9, 0.3).unwrap().abs() < 1e-17);
        // ln(5.783185307179586 / 5.283185307179586)
        assert_relative_eq!(sigma_gamma_sq(1.0, 0.5).unwrap(), 0.090_425_428_4, epsilon = 1e-10);
    }

    #[test]
    fn height_shift_values() {
        assert!(height_shift(1e-9).unwrap().abs() < 1e-17);
        assert_relative_eq!(height_shift(1.0).unwrap(), -0.086_673_936_4, epsilon = 1e-10);
        assert_relative_eq!(height_shift(PI.sqrt()).unwrap(), -0.5 * 2f64.ln(), epsilon = 1e-14);
        assert!(matches!(height_shift(3.0), Err(KpzError::Supercritical { .. })));
    }

    #[test]
    fn covariance_values() {
        assert!(cov_prediction(1.0, 1.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(cov_prediction(1.0, 0.0).unwrap(), 0.173_347_872_7, epsilon = 1e-10);
        assert_relative_eq!(cov_prediction(1.0, 0.25).unwrap(), 0.132_745_920_9, epsilon = 1e-10);
    }

    #[test]
    fn wick_values() {
        assert_eq!(wick_moment(3, 0.7).unwrap(), 0.0);
        assert_eq!(wick_moment(2, 0.7).unwrap(), 0.7);
        assert_relative_eq!(wick_moment(4, 0.090_425_428_4).unwrap(), 0.024_530_274_3, epsilon = 1e-10);
        assert_relative_eq!(wick_moment(6, 2.0).unwrap(), 15.0 * 8.0, epsilon = 1e-12);
        assert!(wick_moment(0, 1.0).is_err());
    }

    #[test]
    fn limit_law_examples() {
        let s = make_scale_set(1.0, 1.0, 0.05, 1.0).unwrap();
        let p = predicted_limit_law(&s, 0.3).unwrap();
        assert!(p.is_degenerate());
        assert_relative_eq!(p.predicted_mean, 0.3 - 0.086_673_936_4, epsilon = 1e-10);

        let s = make_scale_set(1.0, 0.0, 0.05, 1.0).unwrap();
        let p = predicted_limit_law(&s, 0.0).unwrap();
        assert_relative_eq!(p.predicted_mean, -0.086_673_936_4, epsilon = 1e-10);
        assert_relative_eq!(p.sigma_gamma_sq, 0.173_347_872_7, epsilon = 1e-10);

        let s = make_scale_set(1e-12, 0.4, 0.05, 1.0).unwrap();
        let p = predicted_limit_law(&s, 0.25).unwrap();
        assert!(p.sigma_gamma_sq < 1e-20);
        assert_relative_eq!(p.predicted_mean, 0.25, epsilon = 1e-15);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sigma_decreasing_in_gamma(beta in 0.01f64..2.5, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
                prop_assume!((g1 - g2).abs() > 1e-6);
                let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
                prop_assert!(sigma_gamma_sq(beta, lo).unwrap() > sigma_gamma_sq(beta, hi).unwrap());
                prop_assert!(cov_prediction(beta, lo).unwrap() > cov_prediction(beta, hi).unwrap());
            }

            #[test]
            fn point_variance_consistency(beta in 0.0f64..2.5) {
                let s0 = sigma_gamma_sq(beta, 0.0).unwrap();
                let c0 = cov_prediction(beta, 0.0).unwrap();
                let shift = height_shift(beta).unwrap();
                prop_assert!((s0 - c0).abs() < 1e-15);
                prop_assert!((s0 + 2.0 * shift).abs() < 1e-12);
                prop_assert!(shift <= 0.0);
            }
        }
    }
}

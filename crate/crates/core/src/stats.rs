//! Moments with jackknife errors, Kolmogorov-Smirnov distance, Wick
//! moment checks and monotone-trend verdicts.

use crate::error::{KpzError, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Asymptotic 1% critical value of `sqrt(n) D_n`.
pub const KS_CRIT_1PCT: f64 = 1.628;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub mean: Estimate,
    /// Unbiased sample variance.
    pub variance: Estimate,
    pub skewness: Estimate,
    pub excess_kurtosis: Estimate,
    pub ks_distance: Option<f64>,
    pub ks_threshold_at_1pct: f64,
}

/// Power sums `sum c^k`, `k = 0..=4`.
struct PowerSums {
    n: f64,
    s: [f64; 5],
}

impl PowerSums {
    fn new(c: &[f64]) -> Self {
        let mut s = [0.0; 5];
        for &v in c {
            let mut p = 1.0;
            for item in &mut s {
                *item += p;
                p *= v;
            }
        }
        PowerSums { n: c.len() as f64, s }
    }

    fn without(&self, v: f64) -> Self {
        let mut s = self.s;
        let mut p = 1.0;
        for item in &mut s {
            *item -= p;
            p *= v;
        }
        PowerSums { n: self.n - 1.0, s }
    }

    /// `(mean, unbiased variance, skewness, excess kurtosis)` of the shifted data.
    fn moments(&self) -> [f64; 4] {
        let n = self.n;
        let m = self.s[1] / n;
        let r2 = self.s[2] / n;
        let r3 = self.s[3] / n;
        let r4 = self.s[4] / n;
        let m2 = (r2 - m * m).max(0.0);
        let m3 = r3 - 3.0 * m * r2 + 2.0 * m.powi(3);
        let m4 = r4 - 4.0 * m * r3 + 6.0 * m * m * r2 - 3.0 * m.powi(4);
        let var = if n > 1.0 { m2 * n / (n - 1.0) } else { 0.0 };
        let (g1, g2) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
        [m, var, g1, g2]
    }
}

/// Jackknife standard errors of the four moments, from leave-one-out power sums.
fn jackknife(values: &[f64]) -> ([f64; 4], [f64; 4]) {
    let n = values.len();
    let center = values.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = values.iter().map(|v| v - center).collect();
    let full = PowerSums::new(&c);
    let mut est = full.moments();
    est[0] += center;
    let loo: Vec<[f64; 4]> = c.iter().map(|&v| full.without(v).moments()).collect();
    let mut se = [0.0; 4];
    for k in 0..4 {
        let avg = loo.iter().map(|m| m[k]).sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|m| (m[k] - avg).powi(2)).sum();
        se[k] = ((n as f64 - 1.0) / n as f64 * ss).sqrt();
    }
    (est, se)
}

/// Mean and unbiased variance; needs only two samples.
pub fn mean_variance(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(KpzError::TooFewSamples { need: 2, got: n });
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok((m, v))
}

pub fn moments(values: &[f64]) -> Result<MomentReport> {
    if values.len() < 8 {
        return Err(KpzError::TooFewSamples { need: 8, got: values.len() });
    }
    let (est, se) = jackknife(values);
    let e = |k: usize| Estimate { value: est[k], se: se[k] };
    Ok(MomentReport {
        n: values.len(),
        mean: e(0),
        variance: e(1),
        skewness: e(2),
        excess_kurtosis: e(3),
        ks_distance: None,
        ks_threshold_at_1pct: KS_CRIT_1PCT / (values.len() as f64).sqrt(),
    })
}

/// Moments plus the KS distance against `N(ref_mean, ref_var)`.
pub fn moment_report(values: &[f64], ref_mean: f64, ref_var: f64) -> Result<MomentReport> {
    let mut r = moments(values)?;
    r.ks_distance = Some(ks_distance(values, ref_mean, ref_var)?);
    Ok(r)
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * var).sqrt())
}

/// Sup distance between the empirical CDF and `N(ref_mean, ref_var)`; for
/// `ref_var = 0` the largest deviation `max |x - ref_mean|` instead.
pub fn ks_distance(values: &[f64], ref_mean: f64, ref_var: f64) -> Result<f64> {
    if !(ref_var >= 0.0) {
        return Err(KpzError::domain(format!("reference variance must be non-negative, got {ref_var}")));
    }
    if values.is_empty() {
        return Err(KpzError::TooFewSamples { need: 1, got: 0 });
    }
    if ref_var == 0.0 {
        return Ok(values.iter().map(|v| (v - ref_mean).abs()).fold(0.0, f64::max));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x, ref_mean, ref_var);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WickLine {
    pub p: u32,
    pub sample: f64,
    pub se: f64,
    pub target: f64,
    /// Discrepancy in standard errors (0 when both discrepancy and SE vanish).
    pub z: f64,
}

impl WickLine {
    pub fn within(&self, k: f64) -> bool {
        (self.sample - self.target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickReport {
    pub sigma_sq: f64,
    pub lines: Vec<WickLine>,
}

impl WickReport {
    pub fn within(&self, k: f64) -> bool {
        self.lines.iter().all(|l| l.within(k))
    }
}

/// Centered sample moments `p = 3, 4` against the Gaussian values.
pub fn wick_check(values: &[f64], sigma_sq: f64) -> Result<WickReport> {
    if values.len() < 100 {
        return Err(KpzError::TooFewSamples { need: 100, got: values.len() });
    }
    let n = values.len();
    let centered_moment = |xs: &[f64], p: i32| -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|v| (v - m).powi(p)).sum::<f64>() / xs.len() as f64
    };
    let mut lines = Vec::new();
    for p in [3u32, 4] {
        let full = centered_moment(values, p as i32);
        let mut loo = Vec::with_capacity(n);
        let mut buf = Vec::with_capacity(n - 1);
        for i in 0..n {
            buf.clear();
            buf.extend(values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
            loo.push(centered_moment(&buf, p as i32));
        }
        let avg = loo.iter().sum::<f64>() / n as f64;
        let se = ((n as f64 - 1.0) / n as f64 * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt();
        let target = crate::theory::wick_moment(p, sigma_sq)?;
        let diff = full - target;
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        lines.push(WickLine { p, sample: full, se, target, z });
    }
    Ok(WickReport { sigma_sq, lines })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    MonotoneNonincreasing,
    /// First index `i` with `values[i] > values[i-1] + slack`.
    Violated(usize),
}

impl TrendVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, TrendVerdict::MonotoneNonincreasing)
    }
}

pub fn trend_test(values: &[f64], slack: f64) -> Result<TrendVerdict> {
    if values.len() < 2 {
        return Err(KpzError::TooFewSamples { need: 2, got: values.len() });
    }
    for i in 1..values.len() {
        if values[i] > values[i - 1] + slack {
            return Ok(TrendVerdict::Violated(i));
        }
    }
    Ok(TrendVerdict::MonotoneNonincreasing)
}

/// Like [`trend_test`] but ties count as violations.
pub fn strict_decrease(values: &[f64]) -> Result<TrendVerdict> {
    if values.len() < 2 {
        return Err(KpzError::TooFewSamples { need: 2, got: values.len() });
    }
    for i in 1..values.len() {
        if values[i] >= values[i - 1] {
            return Ok(TrendVerdict::Violated(i));
        }
    }
    Ok(TrendVerdict::MonotoneNonincreasing)
}

/// Sample covariance of paired values (unbiased) with a jackknife error.
pub fn covariance(a: &[f64], b: &[f64]) -> Result<Estimate> {
    let n = a.len();
    if n != b.len() || n < 8 {
        return Err(KpzError::TooFewSamples { need: 8, got: n.min(b.len()) });
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (ca, cb): (Vec<f64>, Vec<f64>) = (a.iter().map(|v| v - ma).collect(), b.iter().map(|v| v - mb).collect());
    let (sa, sb) = (ca.iter().sum::<f64>(), cb.iter().sum::<f64>());
    let sab: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let cov = |sa: f64, sb: f64, sab: f64, n: f64| (sab - sa * sb / n) / (n - 1.0);
    let full = cov(sa, sb, sab, n as f64);
    let loo: Vec<f64> = (0..n).map(|i| cov(sa - ca[i], sb - cb[i], sab - ca[i] * cb[i], n as f64 - 1.0)).collect();
    let avg = loo.iter().sum::<f64>() / n as f64;
    let se = ((n as f64 - 1.0) / n as f64 * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt();
    Ok(Estimate { value: full, se })
}

/// Jackknife estimate of `f(mean a, mean b)` over paired samples.
pub fn jackknife_means(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Result<Estimate> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return Err(KpzError::TooFewSamples { need: 2, got: n.min(b.len()) });
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let value = f(sa / n as f64, sb / n as f64);
    let m = (n - 1) as f64;
    let loo: Vec<f64> = a.iter().zip(b).map(|(x, y)| f((sa - x) / m, (sb - y) / m)).collect();
    let avg = loo.iter().sum::<f64>() / n as f64;
    let se = (m / n as f64 * loo.iter().map(|v| (v - avg).powi(2)).sum::<f64>()).sqrt();
    Ok(Estimate { value, se })
}

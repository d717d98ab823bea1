//! Initial height profiles `h0`.

use crate::error::{KpzError, Result};
use crate::grid::{min_image, wrap, GridSpec, Point};
use serde::{Deserialize, Serialize};

/// A periodic table of `h0` values on an `n x n` lattice of side `side_len`,
/// extended to the plane by periodicity and bilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedField {
    pub n: usize,
    pub side_len: f64,
    pub values: Vec<f64>,
}

impl TabulatedField {
    pub fn new(n: usize, side_len: f64, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n || !(side_len > 0.0) {
            return Err(KpzError::Config(vec![format!(
                "tabulated h0 needs n*n = {} values on a positive side, got {} values",
                n * n,
                values.len()
            )]));
        }
        Ok(TabulatedField { n, side_len, values })
    }

    pub fn from_fn(n: usize, side_len: f64, f: impl Fn(Point) -> f64) -> Self {
        let dx = side_len / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                values.push(f([ix as f64 * dx, iy as f64 * dx]));
            }
        }
        TabulatedField { n, side_len, values }
    }

    pub fn dx(&self) -> f64 {
        self.side_len / self.n as f64
    }

    pub fn at_node(&self, ix: usize, iy: usize) -> f64 {
        self.values[(iy % self.n) * self.n + ix % self.n]
    }

    pub fn eval(&self, p: Point) -> f64 {
        let dx = self.dx();
        let sx = wrap(p[0], self.side_len) / dx;
        let sy = wrap(p[1], self.side_len) / dx;
        let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
        let (fx, fy) = (sx - ix as f64, sy - iy as f64);
        let v00 = self.at_node(ix, iy);
        let v10 = self.at_node(ix + 1, iy);
        let v01 = self.at_node(ix, iy + 1);
        let v11 = self.at_node(ix + 1, iy + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    Constant { c: f64 },
    /// `exp(h0(x)) = 1 + amplitude * exp(-|x - center|^2 / (2 s0))`.
    GaussianBump { amplitude: f64, s0: f64, center: Point },
    Tabulated(TabulatedField),
}

/// Default bound on the discrete Lipschitz constant of `h0`.
pub const DEFAULT_LIPSCHITZ_MAX: f64 = 1.0e3;

impl InitialCondition {
    /// `h0(x)` on the plane. Bumps are not periodized here.
    pub fn h0(&self, x: Point) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Constant { c } => *c,
            InitialCondition::GaussianBump { amplitude, s0, center } => {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                (amplitude * (-d2 / (2.0 * s0)).exp()).ln_1p()
            }
            InitialCondition::Tabulated(t) => t.eval(x),
        }
    }

    /// `h0` on the torus of side `l`, using the nearest image of bump centers.
    pub fn h0_torus(&self, x: Point, l: f64) -> f64 {
        match self {
            InitialCondition::GaussianBump { amplitude, s0, center } => {
                let dx = min_image(x[0] - center[0], l);
                let dy = min_image(x[1] - center[1], l);
                (amplitude * (-(dx * dx + dy * dy) / (2.0 * s0)).exp()).ln_1p()
            }
            other => other.h0(x),
        }
    }

    /// Structural checks that do not need a grid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            InitialCondition::Zero => {}
            InitialCondition::Constant { c } => {
                if !c.is_finite() {
                    out.push(format!("h0.c = {c} must be finite"));
                }
            }
            InitialCondition::GaussianBump { amplitude, s0, center } => {
                if !(*amplitude > -1.0) || !amplitude.is_finite() {
                    out.push(format!("h0.amplitude = {amplitude} must exceed -1"));
                }
                if !(*s0 > 0.0) || !s0.is_finite() {
                    out.push(format!("h0.s0 = {s0} must be positive"));
                }
                if !center.iter().all(|v| v.is_finite()) {
                    out.push("h0.center must be finite".to_string());
                }
            }
            InitialCondition::Tabulated(t) => {
                if let Some(bad) = t.values.iter().find(|v| !v.is_finite()) {
                    out.push(format!("tabulated h0 contains a non-finite value {bad}"));
                }
            }
        }
        out
    }

    /// Sample on `grid` and check boundedness and the discrete Lipschitz bound.
    pub fn sample(&self, grid: &GridSpec, lipschitz_max: f64) -> Result<Vec<f64>> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(KpzError::Config(v));
        }
        let n = grid.n;
        let mut h = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                h.push(self.h0_torus(grid.node(ix, iy), grid.side_len));
            }
        }
        if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
            return Err(KpzError::Config(vec![format!("h0 is unbounded on the grid (value {bad})")]));
        }
        let lip = discrete_lipschitz(&h, n, grid.dx());
        if lip > lipschitz_max {
            return Err(KpzError::Config(vec![format!(
                "discrete Lipschitz constant of h0 is {lip}, above the bound {lipschitz_max}"
            )]));
        }
        Ok(h)
    }
}

/// Largest adjacent-node difference divided by `dx`, periodic.
pub fn discrete_lipschitz(h: &[f64], n: usize, dx: f64) -> f64 {
    let mut m: f64 = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let v = h[iy * n + ix];
            m = m.max((h[iy * n + (ix + 1) % n] - v).abs());
            m = m.max((h[((iy + 1) % n) * n + ix] - v).abs());
        }
    }
    m / dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_on_nodes_and_periodic() {
        let t = TabulatedField::from_fn(8, 2.0, |p| p[0] + 2.0 * p[1]);
        assert_eq!(t.eval([0.5, 0.25]), 0.5 + 0.5);
        assert_eq!(t.eval([0.5 + 2.0, 0.25 - 2.0]), 1.0);
        assert!((t.eval([0.6, 0.3]) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let g = GridSpec::with_steps(8.0, 64, 0.5, 10);
        let bad = InitialCondition::GaussianBump { amplitude: -1.5, s0: 0.0, center: [4.0, 4.0] };
        match bad.sample(&g, 10.0) {
            Err(KpzError::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        let steep = InitialCondition::Tabulated(TabulatedField::from_fn(64, 8.0, |p| if p[0] < 4.0 { 0.0 } else { 5.0 }));
        assert!(steep.sample(&g, 10.0).is_err());
        let ok = InitialCondition::GaussianBump { amplitude: 1.0, s0: 1.0, center: [4.0, 4.0] };
        let h = ok.sample(&g, 10.0).unwrap();
        assert!((h[32 * 64 + 32] - 2f64.ln()).abs() < 1e-15);
    }
}

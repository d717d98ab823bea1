//! Feynman-Kac path estimators in a frozen noise environment.
//!
//! A path `X_0 = x, X_k = X_{k-1} + sqrt(dt) N(0, I)` collects the weight
//! `exp(beta_eps M(X) - 1/2 beta_eps^2 Var M(X))` of one slab per step, with
//! `M(X)` the bilinear interpolant of the mollified increment. `Var M(X)`
//! is exact for the interpolant, so each path weight has mean one over the
//! environment. In the time-reversed orientation step `k` reads slab
//! `K - k`, which reproduces the lattice solver `u(K dt, x)` pathwise; the
//! forward orientation reads slab `k - 1` and has the same law.

use crate::error::{KpzError, Result};
use crate::grid::{wrap, GridSpec, Point};
use crate::initial::InitialCondition;
use crate::mollifier::MollifierProfile;
use crate::noise::{substream, MollifiedSlab, MollifierKernel, NoiseMode, ReplicaNoise};
use crate::scalar::Real;
use crate::solver::HeatPropagator;
use crate::spectral::{Spectral2d, SpectralWork};
use crate::theory::ScaleSet;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

enum Storage<T> {
    Stored(Vec<MollifiedSlab<T>>),
    Keyed(ReplicaNoise),
}

/// Read-only noise environment: either stored slabs or slabs regenerated
/// on demand from their keys.
pub struct FrozenEnvironment<T: Real> {
    pub grid: GridSpec,
    pub scale: ScaleSet,
    pub kernel: MollifierKernel<T>,
    spectral: Spectral2d<T>,
    storage: Storage<T>,
}

impl<T: Real> FrozenEnvironment<T> {
    /// Environment of replica `replica` under `seed`, as the solver sees it.
    pub fn keyed(
        profile: &MollifierProfile,
        grid: &GridSpec,
        scale: &ScaleSet,
        seed: u64,
        replica: u64,
        fine_steps: usize,
        mode: NoiseMode,
    ) -> Result<Self> {
        let spectral = Spectral2d::new(grid.n);
        let kernel = MollifierKernel::new(profile, scale.eps, grid, &spectral)?;
        let noise = ReplicaNoise::new(seed, replica, grid, fine_steps, mode);
        Ok(FrozenEnvironment { grid: *grid, scale: *scale, kernel, spectral, storage: Storage::Keyed(noise) })
    }

    pub fn from_slabs(
        slabs: Vec<MollifiedSlab<T>>,
        profile: &MollifierProfile,
        grid: &GridSpec,
        scale: &ScaleSet,
    ) -> Result<Self> {
        for (k, s) in slabs.iter().enumerate() {
            if s.step_index != k as u64 || s.values.len() != grid.len() {
                return Err(KpzError::domain(format!("slab {k} has step index {} or wrong size", s.step_index)));
            }
        }
        let spectral = Spectral2d::new(grid.n);
        let kernel = MollifierKernel::new(profile, scale.eps, grid, &spectral)?;
        Ok(FrozenEnvironment { grid: *grid, scale: *scale, kernel, spectral, storage: Storage::Stored(slabs) })
    }

    /// The first `steps` slabs held in memory, for repeated passes.
    pub fn stored_prefix(&self, steps: usize) -> Result<Self> {
        if steps > self.steps() {
            return Err(KpzError::domain(format!("environment has only {} steps", self.steps())));
        }
        let mut work = self.work();
        let slabs = (0..steps)
            .map(|k| {
                let mut values = vec![T::zero(); self.grid.len()];
                let variance = self.slab_into(k, &mut values, &mut work);
                MollifiedSlab { values, step_index: k as u64, variance }
            })
            .collect();
        Ok(FrozenEnvironment {
            grid: self.grid,
            scale: self.scale,
            kernel: self.kernel.clone(),
            spectral: self.spectral.clone(),
            storage: Storage::Stored(slabs),
        })
    }

    pub fn steps(&self) -> usize {
        match &self.storage {
            Storage::Stored(s) => s.len(),
            Storage::Keyed(_) => self.grid.steps(),
        }
    }

    pub fn work(&self) -> SpectralWork<T> {
        self.spectral.work()
    }

    /// Mollified increment of step `k` into `out`; returns its per-site variance.
    pub fn slab_into(&self, k: usize, out: &mut [T], work: &mut SpectralWork<T>) -> f64 {
        match &self.storage {
            Storage::Stored(s) => {
                out.copy_from_slice(&s[k].values);
                s[k].variance
            }
            Storage::Keyed(noise) => {
                noise.fill(k as u64, out);
                self.kernel.convolve(out, &self.spectral, work);
                if noise.mode == NoiseMode::Zero {
                    0.0
                } else {
                    self.kernel.v_d * self.grid.dt
                }
            }
        }
    }

    /// Lattice solution `u(K dt, x)` driven by slabs `0..K`.
    pub fn lattice_value(&self, u0: &InitialCondition, steps: usize, x: Point) -> Result<f64> {
        self.lattice_window(u0, 0, steps, x)
    }

    /// Lattice solution started at step `from` and run to step `to`.
    pub fn lattice_window(&self, u0: &InitialCondition, from: usize, to: usize, x: Point) -> Result<f64> {
        let mut u: Vec<T> = u0.sample(&self.grid, f64::INFINITY)?.iter().map(|h| T::of(h.exp())).collect();
        let mut heat = HeatPropagator::with_spectral(self.spectral.clone(), &self.grid, self.grid.dt);
        let mut m = vec![T::zero(); self.grid.len()];
        let mut work = self.work();
        let b = self.scale.beta_eps;
        for k in from..to {
            let var = self.slab_into(k, &mut m, &mut work);
            let comp = T::of(-0.5 * b * b * var);
            for (uv, &mv) in u.iter_mut().zip(&m) {
                *uv = *uv * (T::of(b) * mv + comp).exp();
            }
            heat.apply(&mut u);
        }
        let (ix, iy) = self.grid.nearest_node(x);
        Ok(u[iy * self.grid.n + ix].as_f64())
    }

    /// Bilinear weights and node indices around `p`, plus the exact variance
    /// (per unit of slab variance) of the interpolated increment.
    fn stencil(&self, p: Point) -> ([usize; 4], [f64; 4], f64) {
        let n = self.grid.n;
        let dx = self.grid.dx();
        let sx = wrap(p[0], self.grid.side_len) / dx;
        let sy = wrap(p[1], self.grid.side_len) / dx;
        let (ix, iy) = (sx.floor() as usize % n, sy.floor() as usize % n);
        let (fx, fy) = (sx - sx.floor(), sy - sy.floor());
        let (jx, jy) = ((ix + 1) % n, (iy + 1) % n);
        let idx = [iy * n + ix, iy * n + jx, jy * n + ix, jy * n + jx];
        let a = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let k = &self.kernel;
        let c00 = k.autocov_at(0, 0);
        let c10 = k.autocov_at(1, 0);
        let c01 = k.autocov_at(0, 1);
        let c11 = k.autocov_at(1, 1);
        let c1m = k.autocov_at(1, -1);
        let var = c00 * a.iter().map(|v| v * v).sum::<f64>()
            + 2.0 * c10 * (a[0] * a[1] + a[2] * a[3])
            + 2.0 * c01 * (a[0] * a[2] + a[1] * a[3])
            + 2.0 * c11 * a[0] * a[3]
            + 2.0 * c1m * a[1] * a[2];
        (idx, a, var / c00)
    }
}

/// How paths are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEnsembleSpec {
    pub m_paths: usize,
    pub seed: u64,
    /// Bridge endpoint; `None` for free paths.
    pub bridge: Option<Point>,
}

/// Below this many paths an estimate carries a warning.
pub const MIN_REPORTED_PATHS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub mean: f64,
    pub se: f64,
    pub m_paths: usize,
    pub warning: Option<String>,
}

fn summarize(values: &[f64]) -> PsiEstimate {
    let m = values.len();
    // fixed index order keeps the reduction reproducible
    let mean = values.iter().sum::<f64>() / m as f64;
    let se = if m > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0) / m as f64).sqrt()
    } else {
        0.0
    };
    let warning = (m < MIN_REPORTED_PATHS).then(|| format!("only {m} paths; estimate is not reportable"));
    PsiEstimate { mean, se, m_paths: m, warning }
}

struct PathState {
    pos: Point,
    log_w: f64,
    rng: Xoshiro256PlusPlus,
    /// For bridges: drift per step and the running free Brownian motion.
    drift: Point,
    free: Point,
}

const PATH_TAG: u64 = 0x5041_5448;

/// Sum of `steps` free increments of a path stream (the bridge's `W_s`).
fn endpoint_of(seed: u64, path: u64, steps: usize, sd: f64) -> Point {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(substream(seed, PATH_TAG, path));
    let mut w = [0.0, 0.0];
    for _ in 0..steps {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        w[0] += sd * a;
        w[1] += sd * b;
    }
    w
}

/// Which slab a path reads at step `k = 1..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Orientation {
    /// slab `offset + steps - k`
    Reversed { offset: usize },
    /// slab `offset + k - 1`
    Forward { offset: usize },
}

/// Run `spec.m_paths` paths for `steps` steps from `x`. Returns per-path
/// `(log weight of the first `window` steps, full log weight, endpoint)`.
fn run_paths<T: Real>(
    env: &FrozenEnvironment<T>,
    x: Point,
    steps: usize,
    spec: &PathEnsembleSpec,
    orientation: Orientation,
    window: usize,
) -> Vec<(f64, f64, Point)> {
    let dt = env.grid.dt;
    let sd = dt.sqrt();
    let b = env.scale.beta_eps;
    let mut paths: Vec<PathState> = (0..spec.m_paths as u64)
        .map(|i| {
            let rng = Xoshiro256PlusPlus::seed_from_u64(substream(spec.seed, PATH_TAG, i));
            let drift = match spec.bridge {
                Some(z) => {
                    // B_r = x + (r/s)(z - x) + (W_r - (r/s) W_s)
                    let ws = endpoint_of(spec.seed, i, steps, sd);
                    [(z[0] - x[0] - ws[0]) / steps as f64, (z[1] - x[1] - ws[1]) / steps as f64]
                }
                None => [0.0, 0.0],
            };
            PathState { pos: x, log_w: 0.0, rng, drift, free: [0.0, 0.0] }
        })
        .collect();
    let mut window_w = vec![0.0; spec.m_paths];
    let mut slab = vec![T::zero(); env.grid.len()];
    let mut work = env.work();
    for k in 1..=steps {
        let index = match orientation {
            Orientation::Reversed { offset } => offset + steps - k,
            Orientation::Forward { offset } => offset + k - 1,
        };
        let var = env.slab_into(index, &mut slab, &mut work);
        let slab = &slab;
        paths.par_iter_mut().for_each(|p| {
            let a: f64 = StandardNormal.sample(&mut p.rng);
            let c: f64 = StandardNormal.sample(&mut p.rng);
            p.free[0] += sd * a;
            p.free[1] += sd * c;
            let r = k as f64;
            p.pos = [x[0] + p.free[0] + r * p.drift[0], x[1] + p.free[1] + r * p.drift[1]];
            if b != 0.0 {
                let (idx, w, rel_var) = env.stencil(p.pos);
                let m: f64 = idx.iter().zip(&w).map(|(i, wi)| wi * slab[*i].as_f64()).sum();
                p.log_w += b * m - 0.5 * b * b * var * rel_var;
            }
        });
        if k == window {
            for (w, p) in window_w.iter_mut().zip(&paths) {
                *w = p.log_w;
            }
        }
    }
    paths.iter().zip(window_w).map(|(p, w)| (w, p.log_w, p.pos)).collect()
}

fn check_horizon<T: Real>(env: &FrozenEnvironment<T>, horizon: f64) -> Result<usize> {
    let k = horizon / env.grid.dt;
    let steps = k.round() as usize;
    if (k - k.round()).abs() > 1e-6 || steps > env.steps() || steps == 0 {
        return Err(KpzError::domain(format!(
            "horizon {horizon} must be a positive whole number of steps within the environment ({} steps of {})",
            env.steps(),
            env.grid.dt
        )));
    }
    Ok(steps)
}

/// Monte Carlo estimate of `E[exp(f(X_end)) * weight]` from `x` over `horizon`.
pub fn estimate_psi<T: Real>(
    x: Point,
    horizon: f64,
    f: &InitialCondition,
    env: &FrozenEnvironment<T>,
    spec: &PathEnsembleSpec,
    time_reversed: bool,
) -> Result<PsiEstimate> {
    let steps = check_horizon(env, horizon)?;
    let spec = PathEnsembleSpec { bridge: None, ..*spec };
    let orientation = if time_reversed { Orientation::Reversed { offset: 0 } } else { Orientation::Forward { offset: 0 } };
    let l = env.grid.side_len;
    let values: Vec<f64> = run_paths(env, x, steps, &spec, orientation, steps)
        .into_iter()
        .map(|(_, lw, end)| (lw + f.h0_torus(end, l)).exp())
        .collect();
    Ok(summarize(&values))
}

/// Bridge-pinned estimate of `E_{0,x}^{horizon,z}[weight]` (forward orientation).
pub fn estimate_psi_bridge<T: Real>(
    x: Point,
    z: Point,
    horizon: f64,
    env: &FrozenEnvironment<T>,
    spec: &PathEnsembleSpec,
) -> Result<PsiEstimate> {
    let steps = check_horizon(env, horizon)?;
    let spec = PathEnsembleSpec { bridge: Some(z), ..*spec };
    let values: Vec<f64> = run_paths(env, x, steps, &spec, Orientation::Forward { offset: 0 }, steps)
        .into_iter()
        .map(|(_, lw, _)| lw.exp())
        .collect();
    Ok(summarize(&values))
}

/// Both sides of the Markov identity `E_x[W_s] = sum_z rho_s(z - x) E_x^{s,z}[W_s] dz^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub free: PsiEstimate,
    pub mixed: f64,
    pub mixed_se: f64,
    /// Endpoints in the `z` sum.
    pub points: usize,
}

impl MarkovCheck {
    pub fn z_score(&self) -> f64 {
        (self.free.mean - self.mixed) / (self.free.se.powi(2) + self.mixed_se.powi(2)).sqrt()
    }
}

/// Free paths against a heat-kernel mixture of bridges, all in the forward
/// orientation. Endpoints lie on a lattice of spacing `stride * dx` around
/// `x`, within six standard deviations.
pub fn bridge_markov_check<T: Real>(
    x: Point,
    horizon: f64,
    env: &FrozenEnvironment<T>,
    spec: &PathEnsembleSpec,
    bridge_paths: usize,
    stride: usize,
) -> Result<MarkovCheck> {
    if stride == 0 || bridge_paths < 2 {
        return Err(KpzError::domain("bridge check needs a positive stride and at least two paths per endpoint"));
    }
    let free = estimate_psi(x, horizon, &InitialCondition::Zero, env, spec, false)?;
    let h = stride as f64 * env.grid.dx();
    let reach = 6.0 * horizon.sqrt();
    let m = (reach / h).floor() as i64;
    let mut offsets = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let (dx, dy) = (i as f64 * h, j as f64 * h);
            if dx * dx + dy * dy <= reach * reach {
                offsets.push([dx, dy]);
            }
        }
    }
    let (mut mixed, mut var) = (0.0, 0.0);
    for (k, d) in offsets.iter().enumerate() {
        let z = [x[0] + d[0], x[1] + d[1]];
        let sub = PathEnsembleSpec { m_paths: bridge_paths, seed: substream(spec.seed, 0x4252_4447, k as u64), bridge: None };
        let est = estimate_psi_bridge(x, z, horizon, env, &sub)?;
        let w = (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * horizon)).exp() / (2.0 * std::f64::consts::PI * horizon) * h * h;
        mixed += w * est.mean;
        var += (w * est.se).powi(2);
    }
    Ok(MarkovCheck { free, mixed, mixed_se: var.sqrt(), points: offsets.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioEstimator {
    /// Numerator and denominator from one ensemble of time-reversed paths.
    #[default]
    CommonPaths,
    /// Numerator and denominator from the lattice solver on the same environment.
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub numerator: PsiEstimate,
    pub denominator: PsiEstimate,
    /// Steps in the window.
    pub window_steps: usize,
    /// Macroscopic time at which the deterministic target is evaluated.
    pub target_time: f64,
}

/// Number of steps in the decomposition window, `eps^(2 a_eps) t / dt`, at least one.
pub fn window_steps(scale: &ScaleSet, t: f64, dt: f64) -> usize {
    ((scale.window_macro(t) / dt).round() as usize).max(1)
}

/// `E[Psi_full^{h0}] / E[Psi_window^0]` at `x`.
pub fn decomposition_ratio<T: Real>(
    x: Point,
    t: f64,
    h0: &InitialCondition,
    env: &FrozenEnvironment<T>,
    spec: &PathEnsembleSpec,
    estimator: RatioEstimator,
) -> Result<RatioEstimate> {
    let steps = check_horizon(env, t)?;
    let k = window_steps(&env.scale, t, env.grid.dt).min(steps);
    let target_time = t - k as f64 * env.grid.dt;
    let (numerator, denominator) = match estimator {
        RatioEstimator::CommonPaths => {
            let l = env.grid.side_len;
            let runs = run_paths(env, x, steps, spec, Orientation::Reversed { offset: 0 }, k);
            let num: Vec<f64> = runs.iter().map(|(_, lw, end)| (lw + h0.h0_torus(*end, l)).exp()).collect();
            let den: Vec<f64> = runs.iter().map(|(w, _, _)| w.exp()).collect();
            (summarize(&num), summarize(&den))
        }
        RatioEstimator::Lattice => {
            let num = env.lattice_value(h0, steps, x)?;
            let den = env.lattice_window(&InitialCondition::Zero, steps - k, steps, x)?;
            let exact = |v: f64| PsiEstimate { mean: v, se: 0.0, m_paths: 0, warning: None };
            (exact(num), exact(den))
        }
    };
    if denominator.mean.abs() <= 3.0 * denominator.se {
        return Err(KpzError::DegenerateDenominator { mean: denominator.mean, se: denominator.se });
    }
    Ok(RatioEstimate { ratio: numerator.mean / denominator.mean, numerator, denominator, window_steps: k, target_time })
}

/// The microscopic picture: `(s, y) = (t / eps^2, x / eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroCoordinates {
    pub eps: f64,
}

impl MicroCoordinates {
    pub fn to_micro(&self, t: f64, x: Point) -> (f64, Point) {
        (t / (self.eps * self.eps), [x[0] / self.eps, x[1] / self.eps])
    }

    pub fn to_macro(&self, s: f64, y: Point) -> (f64, Point) {
        (s * self.eps * self.eps, [y[0] * self.eps, y[1] * self.eps])
    }

    /// [`estimate_psi`] with microscopic time and position.
    pub fn estimate_psi<T: Real>(
        &self,
        y: Point,
        s: f64,
        f: &InitialCondition,
        env: &FrozenEnvironment<T>,
        spec: &PathEnsembleSpec,
        time_reversed: bool,
    ) -> Result<PsiEstimate> {
        let (t, x) = self.to_macro(s, y);
        estimate_psi(x, t, f, env, spec, time_reversed)
    }
}

//! Lie splitting for `du = 1/2 Lap u dt + beta_eps u dW_eps` on the torus:
//! an exact lognormal noise substep followed by the exact heat semigroup.

use crate::error::{KpzError, Result};
use crate::grid::GridSpec;
use crate::initial::{InitialCondition, DEFAULT_LIPSCHITZ_MAX};
use crate::mollifier::MollifierProfile;
use crate::noise::{MollifiedSlab, MollifierKernel, ReplicaNoise};
use crate::scalar::Real;
use crate::spectral::{Spectral2d, SpectralWork};
use crate::theory::ScaleSet;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct FieldState<T> {
    pub u: Vec<T>,
    pub time: f64,
    pub step: usize,
    pub grid: GridSpec,
    pub scale: ScaleSet,
}

pub fn init_field<T: Real>(h0: &InitialCondition, grid: &GridSpec, scale: &ScaleSet) -> Result<FieldState<T>> {
    init_field_with_bound(h0, grid, scale, DEFAULT_LIPSCHITZ_MAX)
}

pub fn init_field_with_bound<T: Real>(
    h0: &InitialCondition,
    grid: &GridSpec,
    scale: &ScaleSet,
    lipschitz_max: f64,
) -> Result<FieldState<T>> {
    let h = h0.sample(grid, lipschitz_max)?;
    Ok(FieldState {
        u: h.iter().map(|v| T::of(v.exp())).collect(),
        time: 0.0,
        step: 0,
        grid: *grid,
        scale: *scale,
    })
}

/// The heat semigroup over a fixed `dt`, with its own FFT buffers.
pub struct HeatPropagator<T: Real> {
    pub spectral: Spectral2d<T>,
    multiplier: Vec<T>,
    work: SpectralWork<T>,
}

impl<T: Real> HeatPropagator<T> {
    pub fn new(grid: &GridSpec, dt: f64) -> Self {
        Self::with_spectral(Spectral2d::new(grid.n), grid, dt)
    }

    pub fn with_spectral(spectral: Spectral2d<T>, grid: &GridSpec, dt: f64) -> Self {
        let multiplier = spectral.multiplier(grid.side_len, |kx, ky| (-0.5 * (kx * kx + ky * ky) * dt).exp());
        let work = spectral.work();
        HeatPropagator { spectral, multiplier, work }
    }

    pub fn apply(&mut self, u: &mut [T]) {
        self.spectral.apply_multiplier(u, &self.multiplier, &mut self.work);
    }

    pub fn work_mut(&mut self) -> &mut SpectralWork<T> {
        &mut self.work
    }
}

pub fn heat_step<T: Real>(state: &mut FieldState<T>, dt: f64) {
    HeatPropagator::new(&state.grid, dt).apply(&mut state.u);
    state.time += dt;
}

/// Multiplicative weights `exp(beta_eps M - 1/2 beta_eps^2 Var M)` of one step.
pub fn noise_weights<T: Real>(m: &[T], variance: f64, beta_eps: f64, out: &mut [T]) {
    let b = T::of(beta_eps);
    let comp = T::of(-0.5 * beta_eps * beta_eps * variance);
    for (w, &v) in out.iter_mut().zip(m) {
        *w = (b * v + comp).exp();
    }
}

pub fn noise_step<T: Real>(state: &mut FieldState<T>, mslab: &MollifiedSlab<T>) {
    if state.scale.beta_eps == 0.0 {
        return;
    }
    let b = T::of(state.scale.beta_eps);
    let comp = T::of(-0.5 * state.scale.beta_eps * state.scale.beta_eps * mslab.variance);
    for (u, &v) in state.u.iter_mut().zip(&mslab.values) {
        *u = *u * (b * v + comp).exp();
    }
}

/// Per-replica supplier of mollified increments.
pub trait NoiseSource<T: Real> {
    /// Fill `out` with the mollified increment of `step`; return its per-site variance.
    fn mollified(&mut self, step: u64, out: &mut [T]) -> f64;
}

/// Keyed white noise for one replica, mollified by FFT.
pub struct LatticeNoise<'a, T: Real> {
    pub noise: ReplicaNoise,
    pub kernel: &'a MollifierKernel<T>,
    pub dt: f64,
    spectral: Spectral2d<T>,
    work: SpectralWork<T>,
}

impl<'a, T: Real> LatticeNoise<'a, T> {
    pub fn new(noise: ReplicaNoise, kernel: &'a MollifierKernel<T>, spectral: Spectral2d<T>, dt: f64) -> Self {
        let work = spectral.work();
        LatticeNoise { noise, kernel, dt, spectral, work }
    }
}

impl<T: Real> NoiseSource<T> for LatticeNoise<'_, T> {
    fn mollified(&mut self, step: u64, out: &mut [T]) -> f64 {
        self.noise.fill(step, out);
        self.kernel.convolve(out, &self.spectral, &mut self.work);
        if self.noise.mode == crate::noise::NoiseMode::Zero {
            0.0
        } else {
            self.kernel.v_d * self.dt
        }
    }
}

/// Callback after every completed step.
pub trait Observer<T: Real> {
    fn observe(&mut self, state: &FieldState<T>) -> Result<()>;
}

impl<T: Real, F: FnMut(&FieldState<T>) -> Result<()>> Observer<T> for F {
    fn observe(&mut self, state: &FieldState<T>) -> Result<()> {
        self(state)
    }
}

/// First non-positive or non-finite value, if any.
pub fn positivity_violation<T: Real>(u: &[T]) -> Option<f64> {
    u.iter().find(|v| !(**v > T::zero()) || !v.is_finite()).map(|v| v.as_f64())
}

/// Step from `state.time` to `horizon`.
pub fn evolve<T: Real>(
    state: &mut FieldState<T>,
    horizon: f64,
    noise: &mut dyn NoiseSource<T>,
    observers: &mut [&mut dyn Observer<T>],
) -> Result<()> {
    let dt = state.grid.dt;
    let remaining = (horizon - state.time) / dt;
    if remaining < -1e-9 || (remaining - remaining.round()).abs() > 1e-9 * remaining.abs().max(1.0) {
        return Err(KpzError::domain(format!(
            "horizon {horizon} is not a whole number of steps of {dt} past t = {}",
            state.time
        )));
    }
    let steps = remaining.round() as usize;
    let mut heat = HeatPropagator::new(&state.grid, dt);
    let mut m = vec![T::zero(); state.grid.len()];
    let start = state.step;
    for k in 0..steps {
        let step = start + k;
        let variance = noise.mollified(step as u64, &mut m);
        if state.scale.beta_eps != 0.0 {
            let b = T::of(state.scale.beta_eps);
            let comp = T::of(-0.5 * state.scale.beta_eps * state.scale.beta_eps * variance);
            for (u, &v) in state.u.iter_mut().zip(&m) {
                *u = *u * (b * v + comp).exp();
            }
        }
        heat.apply(&mut state.u);
        state.step = step + 1;
        state.time = state.step as f64 * dt;
        if let Some(value) = positivity_violation(&state.u) {
            return Err(KpzError::Positivity { step: state.step, value });
        }
        for obs in observers.iter_mut() {
            obs.observe(state)?;
        }
    }
    Ok(())
}

/// Convenience: evolve one replica with keyed white noise on its own grid.
pub fn simulate_replica<T: Real>(
    h0: &InitialCondition,
    grid: &GridSpec,
    scale: &ScaleSet,
    profile: &MollifierProfile,
    seed: u64,
    replica: u64,
) -> Result<FieldState<T>> {
    let spectral = Spectral2d::<T>::new(grid.n);
    let kernel = MollifierKernel::new(profile, scale.eps, grid, &spectral)?;
    let mut state = init_field(h0, grid, scale)?;
    let noise = ReplicaNoise::new(seed, replica, grid, grid.steps(), crate::noise::NoiseMode::White);
    let mut src = LatticeNoise::new(noise, &kernel, spectral, grid.dt);
    evolve(&mut state, grid.horizon, &mut src, &mut [])?;
    Ok(state)
}

pub fn hopf_cole<T: Real>(state: &FieldState<T>) -> Result<Vec<f64>> {
    if let Some(value) = positivity_violation(&state.u) {
        return Err(KpzError::Positivity { step: state.step, value });
    }
    Ok(state.u.iter().map(|v| v.as_f64().ln()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    /// Little-endian f64, row-major.
    Bin,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub grid: GridSpec,
    pub scale: ScaleSet,
    pub seed: u64,
    pub replica: u64,
    pub time: f64,
    pub profile: String,
    pub format: SnapshotFormat,
}

/// Write `h` next to a `<stem>.json` sidecar; returns the data path.
pub fn write_snapshot(dir: &Path, stem: &str, h: &[f64], meta: &SnapshotMeta) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let n = meta.grid.n;
    let data_path = match meta.format {
        SnapshotFormat::Bin => {
            let p = dir.join(format!("{stem}.bin"));
            let bytes: Vec<u8> = h.iter().flat_map(|v| v.to_le_bytes()).collect();
            std::fs::write(&p, bytes)?;
            p
        }
        SnapshotFormat::Csv => {
            let p = dir.join(format!("{stem}.csv"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&p)?);
            for row in h.chunks(n) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(f, "{}", line.join(","))?;
            }
            f.flush()?;
            p
        }
    };
    let json = serde_json::to_string_pretty(meta).map_err(|e| KpzError::Parse(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(data_path)
}

pub fn read_snapshot_bin(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Values of a periodic sampled row at off-grid offsets, by trigonometric
/// interpolation. `coeffs` is the real FFT of the row.
pub fn trig_interpolate(coeffs: &[rustfft::num_complex::Complex<f64>], n: usize, pos: f64) -> f64 {
    // pos in units of the sample spacing
    let theta = 2.0 * std::f64::consts::PI * pos / n as f64;
    let (s, c) = theta.sin_cos();
    let mut acc = coeffs[0].re;
    let (mut cr, mut ci) = (c, s);
    let half = n / 2;
    for z in &coeffs[1..half] {
        acc += 2.0 * (z.re * cr - z.im * ci);
        let nr = cr * c - ci * s;
        ci = cr * s + ci * c;
        cr = nr;
    }
    // Nyquist term, split symmetrically so the interpolant is real
    acc += coeffs[half].re * cr;
    acc / n as f64
}

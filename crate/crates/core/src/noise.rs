//! Reproducible cell-integrated white noise and its mollification.
//!
//! Each lattice row of each time step draws from its own generator, seeded
//! from a hash of `(seed, replica, step, row)`, so any slab can be rebuilt
//! in isolation.

use crate::error::{KpzError, Result};
use crate::grid::{min_image, GridSpec};
use crate::mollifier::MollifierProfile;
use crate::scalar::Real;
use crate::spectral::{Spectral2d, SpectralWork};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

#[inline]
pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the noise stream of one replica.
pub fn stream_seed(seed: u64, replica: u64) -> u64 {
    splitmix(splitmix(seed) ^ replica.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed of an auxiliary stream (paths, bridges) derived from a replica stream.
pub fn substream(stream: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(stream ^ splitmix(tag)) ^ index)
}

fn row_rng(stream: u64, step: u64, row: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(splitmix(splitmix(stream ^ splitmix(step)) ^ row))
}

/// Add (or write) `scale * N(0,1)` draws for one time step into `out`.
pub(crate) fn white_increments<T: Real>(stream: u64, step: u64, n: usize, scale: f64, out: &mut [T], add: bool) {
    for (row, chunk) in out.chunks_exact_mut(n).enumerate() {
        let mut rng = row_rng(stream, step, row as u64);
        for v in chunk.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let z = T::of(scale * z);
            *v = if add { *v + z } else { z };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSlab<T> {
    /// Increments `Delta W` of each cell over one step, row-major.
    pub values: Vec<T>,
    pub step_index: u64,
    pub replica_id: u64,
}

pub fn sample_noise_slab<T: Real>(seed: u64, replica_id: u64, step_index: u64, grid: &GridSpec) -> NoiseSlab<T> {
    let mut values = vec![T::zero(); grid.len()];
    let scale = grid.dt.sqrt() * grid.dx();
    white_increments(stream_seed(seed, replica_id), step_index, grid.n, scale, &mut values, false);
    NoiseSlab { values, step_index, replica_id }
}

/// The grid-sampled kernel `phi^eps` and the statistics the solver needs.
#[derive(Debug, Clone)]
pub struct MollifierKernel<T: Real> {
    pub eps: f64,
    /// Fourier multiplier of the circular convolution (real: the kernel is even).
    pub multiplier: Vec<T>,
    /// `sum_j K_j dx^2` before normalization.
    pub raw_mass: f64,
    /// Whether the kernel was rescaled to unit discrete mass.
    pub normalized: bool,
    /// Per-site variance per unit time, `sum_j K_j^2 dx^2`.
    pub v_d: f64,
    /// `C(l) = sum_j K_j K_{j+l} dx^2` for all torus lags, row-major.
    pub autocov: Vec<f64>,
    n: usize,
}

/// Discrete kernel mass deviations above this are normalized away.
pub const MASS_TOLERANCE: f64 = 1e-4;

impl<T: Real> MollifierKernel<T> {
    pub fn new(profile: &MollifierProfile, eps: f64, grid: &GridSpec, spectral: &Spectral2d<T>) -> Result<Self> {
        if eps > grid.side_len / 2.0 {
            return Err(KpzError::Config(vec![format!(
                "mollifier support {eps} exceeds half the torus side {}",
                grid.side_len / 2.0
            )]));
        }
        let n = grid.n;
        let dx = grid.dx();
        let l = grid.side_len;
        let mut k = vec![0.0f64; n * n];
        for iy in 0..n {
            let y = min_image(iy as f64 * dx, l);
            for ix in 0..n {
                let x = min_image(ix as f64 * dx, l);
                k[iy * n + ix] = profile.phi_eps([x, y], eps);
            }
        }
        let raw_mass = k.iter().sum::<f64>() * dx * dx;
        let normalized = (raw_mass - 1.0).abs() > MASS_TOLERANCE;
        if normalized {
            k.iter_mut().for_each(|v| *v /= raw_mass);
        }
        let v_d = k.iter().map(|v| v * v).sum::<f64>() * dx * dx;

        // Spectrum in f64 regardless of T, so the multiplier is accurate.
        let sp64 = Spectral2d::<f64>::new(n);
        let mut w64 = sp64.work();
        let mut spec = sp64.spectrum();
        sp64.forward(&k, &mut spec, &mut w64);
        let multiplier = spec.iter().map(|c| T::of(c.re)).collect();
        let mut sq: Vec<_> = spec.iter().map(|c| c * c.re * dx * dx).collect();
        let mut autocov = vec![0.0; n * n];
        sp64.inverse(&mut sq, &mut autocov, &mut w64);
        debug_assert_eq!(spectral.n(), n);
        Ok(MollifierKernel { eps, multiplier, raw_mass, normalized, v_d, autocov, n })
    }

    /// `C` at lag `(dx_cells, dy_cells)`, wrapping.
    pub fn autocov_at(&self, lx: isize, ly: isize) -> f64 {
        let n = self.n as isize;
        self.autocov[(ly.rem_euclid(n) * n + lx.rem_euclid(n)) as usize]
    }

    /// In-place circular convolution of a cell-increment field with the kernel.
    pub fn convolve(&self, field: &mut [T], spectral: &Spectral2d<T>, work: &mut SpectralWork<T>) {
        spectral.apply_multiplier(field, &self.multiplier, work);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedSlab<T> {
    pub values: Vec<T>,
    pub step_index: u64,
    /// Theoretical per-site variance `dt * v_d`.
    pub variance: f64,
}

/// Mollify one slab, building the kernel on the fly.
pub fn mollify_slab<T: Real>(
    slab: &NoiseSlab<T>,
    profile: &MollifierProfile,
    eps: f64,
    grid: &GridSpec,
) -> Result<MollifiedSlab<T>> {
    if grid.dx() > eps / 4.0 * (1.0 + 1e-12) {
        return Err(KpzError::Config(vec![format!("dx = {} exceeds eps/4 = {}", grid.dx(), eps / 4.0)]));
    }
    let spectral = Spectral2d::<T>::new(grid.n);
    let kernel = MollifierKernel::new(profile, eps, grid, &spectral)?;
    let mut work = spectral.work();
    let mut values = slab.values.clone();
    kernel.convolve(&mut values, &spectral, &mut work);
    Ok(MollifiedSlab { values, step_index: slab.step_index, variance: grid.dt * kernel.v_d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    White,
    /// No noise at all: the solver reduces to the heat equation.
    Zero,
}

/// Cell increments of one replica on a grid whose step is `factor` fine
/// steps long. Scales sharing a `fine_dt` see the same Brownian sheet.
#[derive(Debug, Clone, Copy)]
pub struct ReplicaNoise {
    pub stream: u64,
    pub replica_id: u64,
    pub n: usize,
    pub dx: f64,
    pub fine_dt: f64,
    pub factor: usize,
    pub mode: NoiseMode,
}

impl ReplicaNoise {
    pub fn new(seed: u64, replica_id: u64, grid: &GridSpec, fine_steps: usize, mode: NoiseMode) -> Self {
        let steps = grid.steps();
        assert!(fine_steps.is_multiple_of(steps), "fine step count {fine_steps} is not a multiple of {steps}");
        ReplicaNoise {
            stream: stream_seed(seed, replica_id),
            replica_id,
            n: grid.n,
            dx: grid.dx(),
            fine_dt: grid.horizon / fine_steps as f64,
            factor: fine_steps / steps,
            mode,
        }
    }

    /// Increments of coarse step `step` into `out`.
    pub fn fill<T: Real>(&self, step: u64, out: &mut [T]) {
        if self.mode == NoiseMode::Zero {
            out.iter_mut().for_each(|v| *v = T::zero());
            return;
        }
        let scale = self.fine_dt.sqrt() * self.dx;
        for j in 0..self.factor {
            let fine = step * self.factor as u64 + j as u64;
            white_increments(self.stream, fine, self.n, scale, out, j > 0);
        }
    }
}

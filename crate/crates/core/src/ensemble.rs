//! Replica ensembles over one or several mollification scales.
//!
//! A replica advances every scale in lockstep on the finest time step: each
//! fine white-noise increment is drawn once and added into the running
//! increment of every coarser scale, so all scales see the same Brownian
//! sheet. All observables are read from the final fields of that one run.

use crate::averaging::{pairing_weights, DiscStencil, TestFunction};
use crate::error::{KpzError, Result};
use crate::grid::{coupled_step_counts, GridSpec, Point};
use crate::initial::InitialCondition;
use crate::mollifier::MollifierProfile;
use crate::noise::{stream_seed, white_increments, MollifierKernel, NoiseMode};
use crate::polymer::window_steps;
use crate::scalar::Real;
use crate::solver::{positivity_violation, trig_interpolate};
use crate::spectral::{Spectral2d, SpectralWork};
use crate::theory::{make_scale_set, ScaleSet};
use realfft::{RealFftPlanner, RealToComplex};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub eps: f64,
    /// Replicas `0..replicas` are run at this scale.
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub beta: f64,
    pub t: f64,
    pub side_len: f64,
    pub n: usize,
    pub seed: u64,
    pub h0: InitialCondition,
    pub noise: NoiseMode,
    pub levels: Vec<LevelSpec>,
    /// Explicit step counts per level; `None` picks the coupled ladder.
    pub steps: Option<Vec<usize>>,
}

/// Pair and pooled statistics at a lattice of base points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSpec {
    /// Base points per side; they sit at the centers of a regular tiling.
    pub per_side: usize,
    /// Separations `eps^(1 - zeta)` at which pair products are recorded.
    pub zetas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub center: Point,
    /// Disc averages at the center with radius `eps^(1 - gamma)`.
    pub local_gammas: Vec<f64>,
    /// Pairing of the disc-averaged field (radius `eps^(1 - gamma)`) with `g`.
    pub pairing: Option<(f64, TestFunction)>,
    pub pooled: Option<PooledSpec>,
    /// Numerator initial condition of the decomposition ratio. The
    /// denominator is always a flat start over the final window.
    pub ratio: Option<InitialCondition>,
}

impl ProbeSpec {
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["u_center".to_string(), "h_center".to_string()];
        for g in &self.local_gammas {
            out.push(avg_name(*g));
        }
        if self.pairing.is_some() {
            out.push("pairing".into());
        }
        if let Some(p) = &self.pooled {
            out.extend(["pool_h_mean", "pool_h_sq", "pool_avg0_mean", "pool_avg0_sq"].map(String::from));
            for z in &p.zetas {
                out.push(format!("pair_prod_{z}"));
                out.push(format!("pair_mean_{z}"));
            }
        }
        if self.ratio.is_some() {
            out.extend(["ratio_num", "ratio_den", "log_ratio"].map(String::from));
        }
        out
    }
}

pub fn avg_name(gamma: f64) -> String {
    format!("avg_gamma_{gamma}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub level: usize,
    pub eps: f64,
    pub replica: u64,
    /// Seed of the replica's noise stream.
    pub seed: u64,
    pub values: Vec<f64>,
}

struct PooledGeometry {
    base: Vec<(usize, usize)>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    disc0: Vec<DiscStencil>,
    /// separation in units of dx, per zeta
    offsets: Vec<f64>,
}

struct Level<T: Real> {
    spec: LevelSpec,
    scale: ScaleSet,
    grid: GridSpec,
    factor: usize,
    kernel: MollifierKernel<T>,
    heat: Vec<T>,
    window: usize,
    center: usize,
    discs: Vec<DiscStencil>,
    pairing: Option<Vec<f64>>,
    pooled: Option<PooledGeometry>,
}

/// Buffers owned by one worker thread.
pub struct Workspace<T: Real> {
    fine: Vec<T>,
    levels: Vec<LevelWork<T>>,
    h: Vec<f64>,
    row: Vec<f64>,
    row_spec: Vec<Vec<Complex<f64>>>,
    col_spec: Vec<Vec<Complex<f64>>>,
    r2c: Arc<dyn RealToComplex<f64>>,
}

struct LevelWork<T: Real> {
    accum: Vec<T>,
    main: Vec<T>,
    num: Vec<T>,
    win: Vec<T>,
    work: SpectralWork<T>,
}

pub struct Ensemble<T: Real> {
    pub plan: SweepPlan,
    pub probes: ProbeSpec,
    pub fine_steps: usize,
    names: Vec<String>,
    spectral: Spectral2d<T>,
    levels: Vec<Level<T>>,
    u0_main: Vec<T>,
    u0_num: Option<Vec<T>>,
}

impl<T: Real> Ensemble<T> {
    pub fn new(plan: SweepPlan, probes: ProbeSpec, profile: &MollifierProfile) -> Result<Self> {
        let mut problems = Vec::new();
        if plan.levels.is_empty() {
            problems.push("at least one eps level is required".to_string());
        }
        if !(plan.t > 0.0) {
            problems.push(format!("t = {} must be positive", plan.t));
        }
        if plan.levels.iter().any(|l| l.replicas == 0) {
            problems.push("every level needs at least one replica".to_string());
        }
        if !problems.is_empty() {
            return Err(KpzError::Config(problems));
        }
        let eps: Vec<f64> = plan.levels.iter().map(|l| l.eps).collect();
        let steps = match &plan.steps {
            Some(s) if s.len() == eps.len() => s.clone(),
            Some(_) => return Err(KpzError::Config(vec!["one step count per level is required".into()])),
            None => coupled_step_counts(&eps, plan.t),
        };
        let fine_steps = *steps.iter().max().expect("non-empty");
        if let Some(bad) = steps.iter().find(|s| fine_steps % **s != 0) {
            problems.push(format!("step count {bad} does not divide the finest count {fine_steps}"));
        }

        let mut gammas = probes.local_gammas.clone();
        if let Some((g, _)) = &probes.pairing {
            gammas.push(*g);
        }
        let norm = profile.l2_norm_sq;
        let spectral = Spectral2d::<T>::new(plan.n);
        let mut levels = Vec::new();
        for (spec, &count) in plan.levels.iter().zip(&steps) {
            let grid = GridSpec::with_steps(plan.side_len, plan.n, plan.t, count);
            let scale = make_scale_set(plan.beta, 0.0, spec.eps, norm)?;
            for g in gammas.iter().copied().chain(std::iter::once(0.0)) {
                let s = make_scale_set(plan.beta, g, spec.eps, norm)?;
                for v in grid.violations(&s) {
                    if !problems.contains(&v) {
                        problems.push(v);
                    }
                }
            }
            if !problems.is_empty() {
                continue;
            }
            let kernel = MollifierKernel::new(profile, spec.eps, &grid, &spectral)?;
            let dt = grid.dt;
            let heat = spectral.multiplier(grid.side_len, |kx, ky| (-0.5 * (kx * kx + ky * ky) * dt).exp());
            let (cx, cy) = grid.nearest_node(probes.center);
            let discs = probes
                .local_gammas
                .iter()
                .map(|g| DiscStencil::new(&grid, probes.center, spec.eps.powf(1.0 - g)))
                .collect::<Result<Vec<_>>>()?;
            let pairing = match &probes.pairing {
                Some((g, tf)) => {
                    let gv = tf.sample(profile, &grid);
                    Some(pairing_weights(&gv, &grid, spec.eps.powf(1.0 - g))?)
                }
                None => None,
            };
            let pooled = match &probes.pooled {
                Some(p) => Some(pooled_geometry(&grid, spec.eps, p)?),
                None => None,
            };
            levels.push(Level {
                spec: spec.clone(),
                scale,
                grid,
                factor: fine_steps / count,
                kernel,
                heat,
                window: window_steps(&scale, plan.t, dt).min(count),
                center: cy * plan.n + cx,
                discs,
                pairing,
                pooled,
            });
        }
        if !problems.is_empty() {
            return Err(KpzError::Config(problems));
        }
        let grid0 = levels[0].grid;
        let sample = |ic: &InitialCondition| -> Result<Vec<T>> {
            Ok(ic.sample(&grid0, crate::initial::DEFAULT_LIPSCHITZ_MAX)?.iter().map(|h| T::of(h.exp())).collect())
        };
        let u0_main = sample(&plan.h0)?;
        let u0_num = match &probes.ratio {
            Some(ic) if *ic != plan.h0 => Some(sample(ic)?),
            _ => None,
        };
        Ok(Ensemble { names: probes.names(), plan, probes, fine_steps, spectral, levels, u0_main, u0_num })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn level_grid(&self, level: usize) -> GridSpec {
        self.levels[level].grid
    }

    pub fn level_scale(&self, level: usize) -> ScaleSet {
        self.levels[level].scale
    }

    /// Steps in the decomposition window of a level.
    pub fn level_window(&self, level: usize) -> usize {
        self.levels[level].window
    }

    pub fn level_kernel(&self, level: usize) -> &MollifierKernel<T> {
        &self.levels[level].kernel
    }

    pub fn workspace(&self) -> Workspace<T> {
        let n = self.plan.n;
        let r2c = RealFftPlanner::<f64>::new().plan_fft_forward(n);
        let levels = self
            .levels
            .iter()
            .map(|_| LevelWork {
                accum: vec![T::zero(); n * n],
                main: vec![T::zero(); n * n],
                num: if self.u0_num.is_some() { vec![T::zero(); n * n] } else { Vec::new() },
                win: if self.probes.ratio.is_some() { vec![T::zero(); n * n] } else { Vec::new() },
                work: self.spectral.work(),
            })
            .collect();
        let per = self.probes.pooled.as_ref().map_or(0, |p| p.per_side);
        Workspace {
            fine: vec![T::zero(); n * n],
            levels,
            h: vec![0.0; n * n],
            row: vec![0.0; n],
            row_spec: vec![r2c.make_output_vec(); per],
            col_spec: vec![r2c.make_output_vec(); per],
            r2c,
        }
    }

    /// Run one replica at every level it belongs to.
    pub fn run_replica(&self, replica: u64, ws: &mut Workspace<T>) -> Result<Vec<ReplicaRecord>> {
        self.run_replica_inner(replica, ws).map_err(|e| KpzError::Replica { replica, source: Box::new(e) })
    }

    fn run_replica_inner(&self, replica: u64, ws: &mut Workspace<T>) -> Result<Vec<ReplicaRecord>> {
        let n = self.plan.n;
        let stream = stream_seed(self.plan.seed, replica);
        let active: Vec<usize> = (0..self.levels.len()).filter(|&i| replica < self.levels[i].spec.replicas).collect();
        for &i in &active {
            let lw = &mut ws.levels[i];
            lw.main.copy_from_slice(&self.u0_main);
            if let Some(u0) = &self.u0_num {
                lw.num.copy_from_slice(u0);
            }
        }
        let fine_dt = self.plan.t / self.fine_steps as f64;
        let scale = fine_dt.sqrt() * self.plan.side_len / n as f64;
        for fine in 0..self.fine_steps {
            if self.plan.noise == NoiseMode::White {
                white_increments(stream, fine as u64, n, scale, &mut ws.fine, false);
            } else {
                ws.fine.iter_mut().for_each(|v| *v = T::zero());
            }
            for &i in &active {
                let level = &self.levels[i];
                let lw = &mut ws.levels[i];
                let j = fine % level.factor;
                if j == 0 {
                    lw.accum.copy_from_slice(&ws.fine);
                } else {
                    lw.accum.iter_mut().zip(&ws.fine).for_each(|(a, b)| *a = *a + *b);
                }
                if j + 1 == level.factor {
                    self.level_step(level, lw, fine / level.factor)?;
                }
            }
        }
        let mut out = Vec::with_capacity(active.len());
        for &i in &active {
            let values = self.probe(i, ws)?;
            out.push(ReplicaRecord { level: i, eps: self.levels[i].spec.eps, replica, seed: stream, values });
        }
        Ok(out)
    }

    fn level_step(&self, level: &Level<T>, lw: &mut LevelWork<T>, k: usize) -> Result<()> {
        let steps = level.grid.steps();
        let b = level.scale.beta_eps;
        let var = if self.plan.noise == NoiseMode::White { level.kernel.v_d * level.grid.dt } else { 0.0 };
        level.kernel.convolve(&mut lw.accum, &self.spectral, &mut lw.work);
        let (tb, comp) = (T::of(b), T::of(-0.5 * b * b * var));
        // accum now holds the step's multiplicative weights
        lw.accum.iter_mut().for_each(|m| *m = (tb * *m + comp).exp());
        let advance = |u: &mut Vec<T>, work: &mut SpectralWork<T>| {
            u.iter_mut().zip(&lw.accum).for_each(|(x, w)| *x = *x * *w);
            self.spectral.apply_multiplier(u, &level.heat, work);
        };
        advance(&mut lw.main, &mut lw.work);
        if self.u0_num.is_some() {
            advance(&mut lw.num, &mut lw.work);
        }
        if self.probes.ratio.is_some() && k + level.window >= steps {
            if k + level.window == steps {
                lw.win.iter_mut().for_each(|v| *v = T::one());
            }
            advance(&mut lw.win, &mut lw.work);
        }
        if let Some(value) = positivity_violation(&lw.main) {
            return Err(KpzError::Positivity { step: k + 1, value });
        }
        Ok(())
    }

    fn probe(&self, i: usize, ws: &mut Workspace<T>) -> Result<Vec<f64>> {
        let level = &self.levels[i];
        let n = self.plan.n;
        let lw = &ws.levels[i];
        for (h, u) in ws.h.iter_mut().zip(&lw.main) {
            *h = u.as_f64().ln();
        }
        let h = &ws.h;
        let mut out = Vec::with_capacity(self.names.len());
        out.push(lw.main[level.center].as_f64());
        out.push(h[level.center]);
        for d in &level.discs {
            out.push(d.mean(h));
        }
        if let Some(w) = &level.pairing {
            out.push(h.iter().zip(w).map(|(a, b)| a * b).sum());
        }
        if let Some(geo) = &level.pooled {
            let nb = geo.base.len() as f64;
            let pts: Vec<f64> = geo.base.iter().map(|&(x, y)| h[y * n + x]).collect();
            out.push(pts.iter().sum::<f64>() / nb);
            out.push(pts.iter().map(|v| v * v).sum::<f64>() / nb);
            let avg0: Vec<f64> = geo.disc0.iter().map(|d| d.mean(h)).collect();
            out.push(avg0.iter().sum::<f64>() / nb);
            out.push(avg0.iter().map(|v| v * v).sum::<f64>() / nb);
            for (k, &r) in geo.rows.iter().enumerate() {
                ws.row.copy_from_slice(&h[r * n..(r + 1) * n]);
                ws.r2c.process(&mut ws.row, &mut ws.row_spec[k]).expect("row length");
            }
            for (k, &c) in geo.cols.iter().enumerate() {
                for (y, v) in ws.row.iter_mut().enumerate() {
                    *v = h[y * n + c];
                }
                ws.r2c.process(&mut ws.row, &mut ws.col_spec[k]).expect("column length");
            }
            for &off in &geo.offsets {
                let (mut prod, mut mean) = (0.0, 0.0);
                for (b, &(x, y)) in geo.base.iter().enumerate() {
                    let here = pts[b];
                    let row = &ws.row_spec[geo.rows.iter().position(|&r| r == y).expect("base row")];
                    let col = &ws.col_spec[geo.cols.iter().position(|&c| c == x).expect("base col")];
                    for other in [
                        trig_interpolate(row, n, x as f64 + off),
                        trig_interpolate(row, n, x as f64 - off),
                        trig_interpolate(col, n, y as f64 + off),
                        trig_interpolate(col, n, y as f64 - off),
                    ] {
                        prod += here * other;
                        mean += 0.5 * (here + other);
                    }
                }
                out.push(prod / (4.0 * nb));
                out.push(mean / (4.0 * nb));
            }
        }
        if self.probes.ratio.is_some() {
            let num = if self.u0_num.is_some() { lw.num[level.center] } else { lw.main[level.center] }.as_f64();
            let den = lw.win[level.center].as_f64();
            if !(num > 0.0) || !(den > 0.0) {
                return Err(KpzError::Positivity { step: level.grid.steps(), value: num.min(den) });
            }
            out.push(num);
            out.push(den);
            out.push(num.ln() - den.ln());
        }
        Ok(out)
    }

    /// Run `replicas` in parallel. `on_record` sees each record as it completes;
    /// the returned records are ordered by level, then replica.
    pub fn run(&self, replicas: &[u64], on_record: &(dyn Fn(&ReplicaRecord) + Sync)) -> Result<Vec<ReplicaRecord>> {
        let per: Vec<Vec<ReplicaRecord>> = replicas
            .par_iter()
            .map_init(
                || self.workspace(),
                |ws, &r| {
                    let recs = self.run_replica(r, ws)?;
                    recs.iter().for_each(on_record);
                    Ok(recs)
                },
            )
            .collect::<Result<_>>()?;
        let mut all: Vec<ReplicaRecord> = per.into_iter().flatten().collect();
        all.sort_by_key(|r| (r.level, r.replica));
        Ok(all)
    }

    /// Every replica id used by some level.
    pub fn all_replicas(&self) -> Vec<u64> {
        let max = self.levels.iter().map(|l| l.spec.replicas).max().unwrap_or(0);
        (0..max).collect()
    }
}

fn pooled_geometry(grid: &GridSpec, eps: f64, spec: &PooledSpec) -> Result<PooledGeometry> {
    let n = grid.n;
    if spec.per_side == 0 || !n.is_multiple_of(spec.per_side) {
        return Err(KpzError::Config(vec![format!("pooled.per_side = {} must divide n = {n}", spec.per_side)]));
    }
    let stride = n / spec.per_side;
    let coords: Vec<usize> = (0..spec.per_side).map(|i| i * stride + stride / 2).collect();
    let base: Vec<(usize, usize)> = coords.iter().flat_map(|&y| coords.iter().map(move |&x| (x, y))).collect();
    let disc0 = base
        .iter()
        .map(|&(x, y)| DiscStencil::new(grid, grid.node(x, y), eps))
        .collect::<Result<Vec<_>>>()?;
    let offsets = spec.zetas.iter().map(|z| eps.powf(1.0 - z) / grid.dx()).collect();
    Ok(PooledGeometry { base, rows: coords.clone(), cols: coords, disc0, offsets })
}

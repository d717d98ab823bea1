//! Real 2D FFTs on the periodic lattice with real Fourier multipliers.

use crate::scalar::Real;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Plans for one `n x n` lattice. Cheap to clone; the scratch buffers
/// live in [`SpectralWork`].
#[derive(Clone)]
pub struct Spectral2d<T: Real> {
    n: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

/// Per-thread buffers for [`Spectral2d`].
pub struct SpectralWork<T: Real> {
    rows: Vec<Complex<T>>,
    cols: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    real_row: Vec<T>,
}

impl<T: Real> std::fmt::Debug for Spectral2d<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral2d").field("n", &self.n).finish()
    }
}

impl<T: Real> Spectral2d<T> {
    pub fn new(n: usize) -> Self {
        let mut rp = RealFftPlanner::<T>::new();
        let mut cp = FftPlanner::<T>::new();
        Spectral2d {
            n,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            fwd: cp.plan_fft_forward(n),
            inv: cp.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored frequencies along x (`n/2 + 1`).
    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn work(&self) -> SpectralWork<T> {
        let h = self.half();
        let scratch = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len())
            .max(self.r2c.get_scratch_len())
            .max(self.c2r.get_scratch_len());
        SpectralWork {
            rows: vec![Complex::default(); self.n * h],
            cols: vec![Complex::default(); self.n * h],
            scratch: vec![Complex::default(); scratch],
            real_row: vec![T::zero(); self.n],
        }
    }

    /// Forward transform. The spectrum is stored column-major:
    /// `spec[kx * n + ky]` for `kx < n/2 + 1`.
    pub fn forward(&self, data: &[T], spec: &mut [Complex<T>], w: &mut SpectralWork<T>) {
        let n = self.n;
        let h = self.half();
        assert_eq!(data.len(), n * n);
        assert_eq!(spec.len(), n * h);
        for r in 0..n {
            w.real_row.copy_from_slice(&data[r * n..(r + 1) * n]);
            self.r2c
                .process_with_scratch(&mut w.real_row, &mut w.rows[r * h..(r + 1) * h], &mut w.scratch)
                .expect("r2c length");
        }
        for r in 0..n {
            for c in 0..h {
                spec[c * n + r] = w.rows[r * h + c];
            }
        }
        self.fwd.process_with_scratch(spec, &mut w.scratch);
    }

    /// Inverse of [`forward`](Self::forward) including the `1/n^2` factor.
    /// `spec` is used as scratch and left unspecified.
    pub fn inverse(&self, spec: &mut [Complex<T>], data: &mut [T], w: &mut SpectralWork<T>) {
        let n = self.n;
        let h = self.half();
        self.inv.process_with_scratch(spec, &mut w.scratch);
        let norm = T::one() / T::of((n * n) as f64);
        for r in 0..n {
            for c in 0..h {
                w.rows[r * h + c] = spec[c * n + r] * norm;
            }
        }
        for r in 0..n {
            let row = &mut w.rows[r * h..(r + 1) * h];
            row[0].im = T::zero();
            row[h - 1].im = T::zero();
            self.c2r
                .process_with_scratch(row, &mut data[r * n..(r + 1) * n], &mut w.scratch)
                .expect("c2r length");
        }
    }

    /// `data <- F^-1 (mult * F data)` for a real multiplier laid out like the spectrum.
    pub fn apply_multiplier(&self, data: &mut [T], mult: &[T], w: &mut SpectralWork<T>) {
        let mut spec = std::mem::take(&mut w.cols);
        self.forward(data, &mut spec, w);
        for (s, m) in spec.iter_mut().zip(mult) {
            *s = *s * *m;
        }
        self.inverse(&mut spec, data, w);
        w.cols = spec;
    }

    /// Allocate a spectrum buffer.
    pub fn spectrum(&self) -> Vec<Complex<T>> {
        vec![Complex::default(); self.n * self.half()]
    }

    /// Build a multiplier `f(kx, ky)` over angular wave numbers `2 pi m / L`.
    pub fn multiplier(&self, side_len: f64, f: impl Fn(f64, f64) -> f64) -> Vec<T> {
        let n = self.n;
        let h = self.half();
        let base = 2.0 * std::f64::consts::PI / side_len;
        let mut out = vec![T::zero(); n * h];
        for c in 0..h {
            let kx = base * c as f64;
            for r in 0..n {
                let m = if r <= n / 2 { r as f64 } else { r as f64 - n as f64 };
                out[c * n + r] = T::of(f(kx, base * m));
            }
        }
        out
    }
}

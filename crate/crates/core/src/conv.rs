//! Linear (non-circular) convolution on a uniform grid through a
//! zero-padded FFT.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Convolver {
    n: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Smallest `2^a 3^b ≥ n`.
fn smooth_length(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

impl Convolver {
    /// Convolver for signals and outputs of length `n`; kernels cover the
    /// offsets `-(n-1)..=(n-1)`.
    pub fn new(n: usize) -> Self {
        let len = smooth_length(2 * n - 1);
        let mut planner = FftPlanner::new();
        Self {
            n,
            len,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Spectrum of a kernel given as `k(m)` for `m ∈ [-(n-1), n-1]`.
    pub fn kernel<F: Fn(isize) -> f64>(&self, k: F) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        let n = self.n as isize;
        for m in -(n - 1)..n {
            let idx = m.rem_euclid(self.len as isize) as usize;
            buf[idx] = Complex64::new(k(m), 0.0);
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Spectrum of a signal of length `n`.
    pub fn signal(&self, s: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(s.len(), self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(s) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Back to the grid: the first `n` entries of the inverse transform.
    pub fn finish(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spectrum);
        let scale = 1.0 / self.len as f64;
        spectrum[..self.n].iter().map(|c| c.re * scale).collect()
    }

    /// `out[k] = Σ_j k(k - j) s[j]`.
    pub fn apply(&self, kernel: &[Complex64], s: &[f64]) -> Vec<f64> {
        let mut spec = self.signal(s);
        for (a, b) in spec.iter_mut().zip(kernel) {
            *a *= *b;
        }
        self.finish(spec)
    }
}

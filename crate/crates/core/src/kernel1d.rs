//! Fast one-dimensional kernel evaluation for the grid solvers.
//!
//! For `α < 2` the time-one density `g`, its first three derivatives,
//! the half-line CDF `Φ(y) = ∫_0^y g` and the lower partial moment
//! `K(y) = E[(Z - y)_+]` are tabulated by Fourier inversion on `[0, 40]`
//! and interpolated with quintic Hermite polynomials. Beyond the table the
//! asymptotic tail series is used. Everything else follows from
//! self-similarity.
//!
//! The `hat_*` functions integrate the kernel (or its derivative) exactly
//! against a piecewise-linear hat function, which is what lets the Duhamel
//! solver use lags far below the grid resolution.

use crate::error::Result;
use crate::quadrature::gl24;
use crate::stable_noise::{cutoff_frequency, tail_series_coefficients, StableSpec};
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

const TABLE_END: f64 = 40.0;
const TABLE_STEP: f64 = 0.01;
const TAIL_TERMS: usize = 24;

/// Tabulated standardized profile of the symmetric α-stable law with
/// characteristic function `exp(-|λ|^α)`.
#[derive(Debug)]
pub struct StableProfile {
    alpha: f64,
    g: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    g3: Vec<f64>,
    phi: Vec<f64>,
    k: Vec<f64>,
    tail: Vec<f64>,
    /// `K(0) = E|Z| / 2 = Γ(1 - 1/α) / π`.
    k0: f64,
}

impl StableProfile {
    pub fn build(alpha: f64) -> Self {
        assert!(alpha > 1.0 && alpha < 2.0);
        let (lambdas, weights) = table_frequencies(alpha);
        let n = (TABLE_END / TABLE_STEP).round() as usize + 1;
        let k0 = libm::tgamma(1.0 - 1.0 / alpha) / PI;
        let mut g = vec![0.0; n];
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        let mut g3 = vec![0.0; n];
        let mut phi = vec![0.0; n];
        let mut k = vec![0.0; n];
        for i in 0..n {
            let y = i as f64 * TABLE_STEP;
            let mut acc = [0.0f64; 6];
            for (&l, &w) in lambdas.iter().zip(&weights) {
                let (s, c) = (l * y).sin_cos();
                let half = (0.5 * l * y).sin();
                let sinc = if l * y == 0.0 { y } else { s / l };
                acc[0] += w * c;
                acc[1] -= w * l * s;
                acc[2] -= w * l * l * c;
                acc[3] += w * l * l * l * s;
                acc[4] += w * sinc;
                // (1 - cos λy) / λ² without cancellation
                let psi = if l == 0.0 {
                    0.5 * y * y
                } else {
                    2.0 * half * half / (l * l)
                };
                acc[5] += w * psi;
            }
            g[i] = acc[0] / PI;
            g1[i] = acc[1] / PI;
            g2[i] = acc[2] / PI;
            g3[i] = acc[3] / PI;
            phi[i] = acc[4] / PI;
            k[i] = k0 - 0.5 * y + acc[5] / PI;
        }
        Self {
            alpha,
            g,
            g1,
            g2,
            g3,
            phi,
            k,
            tail: tail_series_coefficients(alpha, TAIL_TERMS),
            k0,
        }
    }

    /// Process-wide cache keyed by the bit pattern of `alpha`.
    pub fn shared(alpha: f64) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableProfile>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(p) = cache.lock().unwrap().get(&alpha.to_bits()) {
            return p.clone();
        }
        let built = Arc::new(Self::build(alpha));
        cache
            .lock()
            .unwrap()
            .entry(alpha.to_bits())
            .or_insert(built)
            .clone()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Sums `Σ coeff_k · c_k · y^{-αk - shift}` over the tail series,
    /// stopping once terms stop shrinking.
    fn series<F: Fn(f64) -> f64>(&self, y: f64, shift: f64, coeff: F) -> f64 {
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        for (i, c) in self.tail.iter().enumerate() {
            let ak = self.alpha * (i + 1) as f64;
            let term = coeff(ak) * c * y.powf(-ak - shift);
            if term.abs() > prev && term != 0.0 {
                break;
            }
            sum += term;
            if term != 0.0 {
                prev = term.abs();
                if prev < 1e-18 * sum.abs() {
                    break;
                }
            }
        }
        sum
    }

    fn locate(&self, y: f64) -> (usize, f64) {
        let pos = y / TABLE_STEP;
        let i = (pos.floor() as usize).min(self.g.len() - 2);
        (i, pos - i as f64)
    }

    pub fn g(&self, y: f64) -> f64 {
        let y = y.abs();
        if y >= TABLE_END {
            return self.series(y, 1.0, |_| 1.0);
        }
        let (i, t) = self.locate(y);
        quintic(t, TABLE_STEP, [self.g[i], self.g1[i], self.g2[i]], [
            self.g[i + 1],
            self.g1[i + 1],
            self.g2[i + 1],
        ])
    }

    /// `g'(y)` for `y ≥ 0`.
    pub fn g1(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        if y >= TABLE_END {
            return self.series(y, 2.0, |ak| -(ak + 1.0));
        }
        let (i, t) = self.locate(y);
        quintic(t, TABLE_STEP, [self.g1[i], self.g2[i], self.g3[i]], [
            self.g1[i + 1],
            self.g2[i + 1],
            self.g3[i + 1],
        ])
    }

    /// Survival function `P(Z > y)` for `y ≥ 0`.
    pub fn survival(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        if y >= TABLE_END {
            return self.series(y, 0.0, |ak| 1.0 / ak);
        }
        let (i, t) = self.locate(y);
        0.5 - quintic(t, TABLE_STEP, [self.phi[i], self.g[i], self.g1[i]], [
            self.phi[i + 1],
            self.g[i + 1],
            self.g1[i + 1],
        ])
    }

    /// `K(y) = E[(Z - y)_+]` for `y ≥ 0`.
    pub fn lower_moment(&self, y: f64) -> f64 {
        debug_assert!(y >= 0.0);
        if y >= TABLE_END {
            return self.series(y, -1.0, |ak| 1.0 / (ak * (ak - 1.0)));
        }
        let (i, t) = self.locate(y);
        quintic(
            t,
            TABLE_STEP,
            [self.k[i], self.phi[i] - 0.5, self.g[i]],
            [self.k[i + 1], self.phi[i + 1] - 0.5, self.g[i + 1]],
        )
    }

    pub fn first_absolute_moment(&self) -> f64 {
        2.0 * self.k0
    }
}

fn table_frequencies(alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let cutoff = cutoff_frequency(alpha);
    let mut edges = vec![0.0];
    let mut e = 1e-12;
    while e < 0.25 {
        edges.push(e);
        e *= 4.0;
    }
    let n = ((cutoff - 0.25) / 0.1).ceil() as usize;
    let step = (cutoff - 0.25) / n as f64;
    for i in 0..=n {
        edges.push(0.25 + i as f64 * step);
    }
    let mut lambdas = Vec::new();
    let mut weights = Vec::new();
    for w in edges.windows(2) {
        for (x, wt) in gl24().mapped(w[0], w[1]) {
            lambdas.push(x);
            weights.push(wt * (-x.powf(alpha)).exp());
        }
    }
    (lambdas, weights)
}

fn quintic(t: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
    a[0] * h0 + h * a[1] * h1 + h * h * a[2] * h2 + b[0] * h3 + h * b[1] * h4 + h * h * b[2] * h5
}

/// One-dimensional kernel `p_α(t, ·)` with fast evaluation.
#[derive(Debug, Clone)]
pub enum Kernel1D {
    /// Brownian kernel, variance `t`.
    Gaussian,
    Stable(Arc<StableProfile>),
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl Kernel1D {
    pub fn new(spec: &StableSpec) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(crate::error::invalid(
                "dim",
                "the grid kernel is one-dimensional",
            ));
        }
        Ok(if spec.is_gaussian() {
            Kernel1D::Gaussian
        } else {
            Kernel1D::Stable(StableProfile::shared(spec.alpha()))
        })
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Kernel1D::Gaussian => 2.0,
            Kernel1D::Stable(p) => p.alpha,
        }
    }

    pub fn scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.alpha())
    }

    fn std_g(&self, y: f64) -> f64 {
        match self {
            Kernel1D::Gaussian => INV_SQRT_2PI * (-0.5 * y * y).exp(),
            Kernel1D::Stable(p) => p.g(y),
        }
    }

    fn std_g1(&self, y: f64) -> f64 {
        match self {
            Kernel1D::Gaussian => -y * INV_SQRT_2PI * (-0.5 * y * y).exp(),
            Kernel1D::Stable(p) => p.g1(y),
        }
    }

    fn std_survival(&self, y: f64) -> f64 {
        match self {
            Kernel1D::Gaussian => 0.5 * libm::erfc(y * FRAC_1_SQRT_2),
            Kernel1D::Stable(p) => p.survival(y),
        }
    }

    fn std_lower_moment(&self, y: f64) -> f64 {
        match self {
            Kernel1D::Gaussian => {
                INV_SQRT_2PI * (-0.5 * y * y).exp() - y * 0.5 * libm::erfc(y * FRAC_1_SQRT_2)
            }
            Kernel1D::Stable(p) => p.lower_moment(y),
        }
    }

    pub fn pdf(&self, t: f64, v: f64) -> f64 {
        let s = self.scale(t);
        self.std_g(v.abs() / s) / s
    }

    /// `∂_v p(t, v)`.
    pub fn dpdf(&self, t: f64, v: f64) -> f64 {
        let s = self.scale(t);
        v.signum() * self.std_g1(v.abs() / s) / (s * s)
    }

    /// `P(|Z_t| > r)` for `r ≥ 0`.
    pub fn two_sided_tail(&self, t: f64, r: f64) -> f64 {
        2.0 * self.std_survival(r.abs() / self.scale(t))
    }

    /// `P(Z_t > r)`.
    pub fn survival(&self, t: f64, r: f64) -> f64 {
        let s = self.std_survival(r.abs() / self.scale(t));
        if r >= 0.0 {
            s
        } else {
            1.0 - s
        }
    }

    /// `∫ hat(z) p(t, v - z) dz` where `hat` has height one and half-width `dx`.
    pub fn hat_pdf(&self, t: f64, v: f64, dx: f64) -> f64 {
        let s = self.scale(t);
        let ramp = (v + dx).max(0.0) - 2.0 * v.max(0.0) + (v - dx).max(0.0);
        let k = |w: f64| self.std_lower_moment(w.abs() / s);
        (ramp + s * (k(v + dx) - 2.0 * k(v) + k(v - dx))) / dx
    }

    /// `∫ hat(z) ∂_v p(t, v - z) dz`.
    pub fn hat_dpdf(&self, t: f64, v: f64, dx: f64) -> f64 {
        let s = self.scale(t);
        let step = |w: f64| {
            if w > 0.0 {
                1.0
            } else if w == 0.0 {
                0.5
            } else {
                0.0
            }
        };
        let signed_tail = |w: f64| {
            if w == 0.0 {
                0.0
            } else {
                w.signum() * self.std_survival(w.abs() / s)
            }
        };
        let jump = step(v + dx) - 2.0 * step(v) + step(v - dx);
        let smooth = signed_tail(v + dx) - 2.0 * signed_tail(v) + signed_tail(v - dx);
        (jump - smooth) / dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_noise::{density, grad_density};

    #[test]
    fn table_matches_direct_inversion() {
        for alpha in [1.3, 1.5, 1.8] {
            let spec = StableSpec::new(alpha, 1).unwrap();
            let k = Kernel1D::new(&spec).unwrap();
            for &x in &[0.0, 0.013, 0.5, 1.234, 3.0, 7.77, 15.0, 39.99, 40.01, 55.0] {
                let direct = density(&spec, 1.0, &[x]).unwrap();
                let fast = k.pdf(1.0, x);
                assert!(
                    (direct - fast).abs() < 1e-11 + 1e-7 * direct,
                    "alpha={alpha} x={x}: {direct} vs {fast}"
                );
                let dg = grad_density(&spec, 1.0, &[x]).unwrap()[0];
                assert!((dg - k.dpdf(1.0, x)).abs() < 1e-10 + 1e-6 * dg.abs());
            }
        }
    }

    #[test]
    fn tail_series_is_continuous_with_table() {
        for alpha in [1.3, 1.5, 1.8] {
            let p = StableProfile::shared(alpha);
            let a = TABLE_END - 1e-9;
            let b = TABLE_END + 1e-9;
            assert!((p.g(a) - p.g(b)).abs() < 1e-12, "g alpha={alpha}");
            assert!((p.survival(a) - p.survival(b)).abs() < 1e-11, "S alpha={alpha}");
            assert!(
                (p.lower_moment(a) - p.lower_moment(b)).abs() < 1e-10,
                "K alpha={alpha}"
            );
        }
    }

    #[test]
    fn profile_identities() {
        let p = StableProfile::shared(1.5);
        assert!((p.survival(0.0) - 0.5).abs() < 1e-14);
        assert!((p.lower_moment(0.0) - p.k0).abs() < 1e-12);
        // E|Z| = 2 Γ(1 - 1/α) / π
        assert!((p.first_absolute_moment() - 2.0 * libm::tgamma(1.0 / 3.0) / PI).abs() < 1e-14);
    }

    #[test]
    fn hat_kernels_approximate_point_values_when_resolved() {
        for spec in [StableSpec::new(1.5, 1).unwrap(), StableSpec::new(2.0, 1).unwrap()] {
            let k = Kernel1D::new(&spec).unwrap();
            let dx = 1e-3;
            for &v in &[0.0, 0.3, -1.1, 4.0] {
                let hp = k.hat_pdf(1.0, v, dx) / dx;
                assert!((hp - k.pdf(1.0, v)).abs() < 1e-5, "v={v}");
                let hd = k.hat_dpdf(1.0, v, dx) / dx;
                assert!((hd - k.dpdf(1.0, v)).abs() < 1e-4, "v={v}");
            }
        }
    }

    #[test]
    fn hat_kernel_conserves_mass_when_unresolved() {
        let k = Kernel1D::new(&StableSpec::new(1.5, 1).unwrap()).unwrap();
        let dx = 0.01;
        let t = 1e-6;
        let mass: f64 = (-2000..=2000).map(|j| k.hat_pdf(t, j as f64 * dx, dx)).sum();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        let drift: f64 = (-2000..=2000).map(|j| k.hat_dpdf(t, j as f64 * dx, dx)).sum();
        assert!(drift.abs() < 1e-9);
    }
}

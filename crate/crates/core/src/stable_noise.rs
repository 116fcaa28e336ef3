//! Isotropic α-stable noise: samplers and the exact heat kernel.
//!
//! Characteristic exponent convention: `ψ(λ) = |λ|^α` for `α ∈ (1, 2)` and
//! `ψ(λ) = |λ|²/2` for `α = 2` (Brownian motion with generator `½Δ`).
//! Fitted constants elsewhere in the crate depend on this choice; rate
//! exponents do not.

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gl16, gl24, GaussLegendre};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Variance factor of the Gaussian that is time-changed by the positive
/// `(α/2)`-stable subordinator `A` with Laplace transform `exp(-s^{α/2})`:
/// `Z = sqrt(2 A) G` has characteristic function `exp(-|λ|^α)`.
pub const SUBORDINATOR_VARIANCE_SCALE: f64 = 2.0;

/// Number of `f64` uniforms consumed by [`sample_scalar_stable`].
pub const SCALAR_STABLE_UNIFORMS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSpec {
    alpha: f64,
    dim: usize,
}

impl StableSpec {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(invalid("alpha", format!("{alpha} is outside (1, 2]")));
        }
        if dim == 0 {
            return Err(invalid("dim", "dimension must be at least 1"));
        }
        Ok(Self { alpha, dim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    /// `ψ(λ)` for a frequency of norm `lambda`.
    pub fn char_exponent(&self, lambda: f64) -> f64 {
        if self.is_gaussian() {
            0.5 * lambda * lambda
        } else {
            lambda.abs().powf(self.alpha)
        }
    }

    /// Spatial scale of the marginal at time `t`.
    pub fn scale(&self, t: f64) -> f64 {
        t.powf(1.0 / self.alpha)
    }

    /// Gap to singularity `γ = α + β - 1`.
    pub fn gamma(&self, beta: f64) -> f64 {
        self.alpha + beta - 1.0
    }
}

/// Symmetric α-stable draw with characteristic function `exp(-|λ|^α)`,
/// by the Chambers–Mallows–Stuck transform. Consumes exactly
/// [`SCALAR_STABLE_UNIFORMS`] uniforms.
pub fn sample_scalar_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(invalid(
            "alpha",
            format!("{alpha} is outside (1, 2); use Gaussian sampling for alpha = 2"),
        ));
    }
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    Ok(cms_symmetric(alpha, u1, u2))
}

fn cms_symmetric(alpha: f64, u1: f64, u2: f64) -> f64 {
    let v = PI * (u1 - 0.5);
    // 1 - u2 lies in (0, 1], so the exponential draw is finite.
    let w = -(1.0 - u2).ln();
    let w = w.max(f64::MIN_POSITIVE);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Positive stable draw with Laplace transform `exp(-s^a)`, `a ∈ (0, 1)`
/// (Kanter's representation of the one-sided CMS transform).
pub fn sample_positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    debug_assert!(a > 0.0 && a < 1.0);
    let u: f64 = rng.random();
    let e: f64 = rng.random();
    let theta = PI * (1.0 - u).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let w = -(1.0 - e).ln();
    let w = w.max(f64::MIN_POSITIVE);
    let left = (a * theta).sin() / theta.sin().powf(1.0 / a);
    let right = (((1.0 - a) * theta).sin() / w).powf((1.0 - a) / a);
    left * right
}

/// One increment `Z_{t+dt} - Z_t` written into `out` (length `spec.dim()`).
pub fn sample_isotropic_increment_into<R: Rng + ?Sized>(
    spec: &StableSpec,
    dt: f64,
    rng: &mut R,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), spec.dim());
    let std = if spec.is_gaussian() {
        dt.sqrt()
    } else {
        let a = sample_positive_stable(0.5 * spec.alpha(), rng);
        spec.scale(dt) * (SUBORDINATOR_VARIANCE_SCALE * a).sqrt()
    };
    for o in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *o = std * g;
    }
}

pub fn sample_isotropic_increment<R: Rng + ?Sized>(
    spec: &StableSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("{dt} must be positive")));
    }
    let mut out = vec![0.0; spec.dim()];
    sample_isotropic_increment_into(spec, dt, rng, &mut out);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fourier inversion.

/// Absolute tolerance (in units of the time-one kernel) for the inversion
/// quadrature.
pub const INVERSION_TOL: f64 = 1e-10;

/// `∫_0^∞ f(λ) exp(-λ^α) dλ` for an integrand oscillating at frequency
/// about `y`. Panels are geometrically graded towards `λ = 0` (where
/// `exp(-λ^α)` is not smooth) and uniform beyond, with width adapted to
/// `y`. Each panel is evaluated with 16 and 24 points; the discrepancy
/// plus the truncation bound forms the error estimate.
pub(crate) fn fourier_integral<F: Fn(f64) -> f64>(
    alpha: f64,
    y: f64,
    growth: i32,
    f: F,
) -> Estimate {
    let cutoff = cutoff_frequency(alpha);
    let width = (8.0 / y.abs().max(1e-3)).min(0.5);
    let mut value = 0.0;
    let mut error = 0.0;
    let mut panel = |lo: f64, hi: f64| {
        let coarse = panel_sum(gl16(), alpha, lo, hi, &f);
        let fine = panel_sum(gl24(), alpha, lo, hi, &f);
        value += fine;
        error += (fine - coarse).abs();
    };
    let graded_end = width.min(0.25);
    let mut lo = 0.0;
    let mut hi = 1e-12;
    while hi < graded_end {
        panel(lo, hi);
        lo = hi;
        hi *= 4.0;
    }
    panel(lo, graded_end);
    let n = ((cutoff - graded_end) / width).ceil().max(1.0) as usize;
    let step = (cutoff - graded_end) / n as f64;
    for i in 0..n {
        let a = graded_end + i as f64 * step;
        panel(a, a + step);
    }
    // ∫_Λ^∞ λ^k e^{-λ^α} dλ ≤ Λ^{k+1} e^{-Λ^α} for Λ^α ≫ k.
    let tail = cutoff.powi(growth + 1) * (-cutoff.powf(alpha)).exp();
    Estimate {
        value,
        error: error + tail,
    }
}

fn panel_sum<F: Fn(f64) -> f64>(rule: &GaussLegendre, alpha: f64, lo: f64, hi: f64, f: &F) -> f64 {
    rule.mapped(lo, hi)
        .map(|(x, w)| w * f(x) * (-x.powf(alpha)).exp())
        .sum()
}

/// Frequency beyond which `exp(-λ^α) < e^{-40}`.
pub(crate) fn cutoff_frequency(alpha: f64) -> f64 {
    40f64.powf(1.0 / alpha)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Radial {
    Density,
    Derivative,
    TimeDerivative,
}

/// Radial profile of the time-one kernel at radius `y`, in dimension `d`.
fn radial_profile(alpha: f64, dim: usize, y: f64, kind: Radial) -> Result<f64> {
    let y = y.abs();
    let est = match (dim, kind) {
        (1, Radial::Density) => fourier_integral(alpha, y, 0, |l| (l * y).cos() / PI),
        (1, Radial::Derivative) => fourier_integral(alpha, y, 1, |l| -l * (l * y).sin() / PI),
        (1, Radial::TimeDerivative) => {
            fourier_integral(alpha, y, 2, |l| -l.powf(alpha) * (l * y).cos() / PI)
        }
        (2, Radial::Density) => fourier_integral(alpha, y, 1, |l| l * libm::j0(l * y) / (2.0 * PI)),
        (2, Radial::Derivative) => {
            fourier_integral(alpha, y, 2, |l| -l * l * libm::j1(l * y) / (2.0 * PI))
        }
        (2, Radial::TimeDerivative) => fourier_integral(alpha, y, 3, |l| {
            -l.powf(alpha) * l * libm::j0(l * y) / (2.0 * PI)
        }),
        (3, Radial::Density) => {
            fourier_integral(alpha, y, 2, |l| l * l * sph_j0(l * y) / (2.0 * PI * PI))
        }
        (3, Radial::Derivative) => {
            fourier_integral(alpha, y, 3, |l| -l * l * l * sph_j1(l * y) / (2.0 * PI * PI))
        }
        (3, Radial::TimeDerivative) => fourier_integral(alpha, y, 4, |l| {
            -l.powf(alpha) * l * l * sph_j0(l * y) / (2.0 * PI * PI)
        }),
        _ => {
            return Err(invalid(
                "dim",
                format!("inversion is implemented for d in 1..=3, got {dim}"),
            ))
        }
    };
    if est.error > INVERSION_TOL {
        return Err(Error::QuadratureFailure {
            estimate: est.error,
            tolerance: INVERSION_TOL,
            context: format!("stable inversion alpha={alpha} d={dim} y={y} ({kind:?})"),
        });
    }
    Ok(est.value)
}

fn sph_j0(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

fn sph_j1(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        z / 3.0 - z * z2 / 30.0 + z * z2 * z2 / 840.0
    } else {
        z.sin() / (z * z) - z.cos() / z
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_eval_args(spec: &StableSpec, t: f64, x: &[f64]) -> Result<()> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    if x.len() != spec.dim() {
        return Err(invalid(
            "x",
            format!("length {} does not match dimension {}", x.len(), spec.dim()),
        ));
    }
    if !spec.is_gaussian() && spec.dim() > 3 {
        return Err(invalid("dim", "inversion is implemented for d <= 3"));
    }
    Ok(())
}

/// Transition density `p_α(t, x)` of the driving noise.
pub fn density(spec: &StableSpec, t: f64, x: &[f64]) -> Result<f64> {
    check_eval_args(spec, t, x)?;
    let d = spec.dim() as f64;
    let r = norm(x);
    if spec.is_gaussian() {
        return Ok((2.0 * PI * t).powf(-0.5 * d) * (-0.5 * r * r / t).exp());
    }
    let s = spec.scale(t);
    Ok(radial_profile(spec.alpha(), spec.dim(), r / s, Radial::Density)? / s.powf(d))
}

/// Spatial gradient `∇_x p_α(t, x)`.
pub fn grad_density(spec: &StableSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_eval_args(spec, t, x)?;
    let r = norm(x);
    if r == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    if spec.is_gaussian() {
        let p = density(spec, t, x)?;
        return Ok(x.iter().map(|xi| -xi / t * p).collect());
    }
    let d = spec.dim() as f64;
    let s = spec.scale(t);
    let dr = radial_profile(spec.alpha(), spec.dim(), r / s, Radial::Derivative)? / s.powf(d + 1.0);
    Ok(x.iter().map(|xi| dr * xi / r).collect())
}

/// Time derivative `∂_t p_α(t, x)`.
pub fn time_deriv_density(spec: &StableSpec, t: f64, x: &[f64]) -> Result<f64> {
    check_eval_args(spec, t, x)?;
    let d = spec.dim() as f64;
    let r = norm(x);
    if spec.is_gaussian() {
        let p = density(spec, t, x)?;
        return Ok(p * (0.5 * r * r / (t * t) - 0.5 * d / t));
    }
    let s = spec.scale(t);
    Ok(radial_profile(spec.alpha(), spec.dim(), r / s, Radial::TimeDerivative)? / (s.powf(d) * t))
}

/// Coefficient of `|y|^{-(α+1)}` in the tail of the 1-d time-one density:
/// `Γ(α+1) sin(πα/2) / π`.
pub fn tail_constant(alpha: f64) -> f64 {
    libm::tgamma(alpha + 1.0) * (FRAC_PI_2 * alpha).sin() / PI
}

/// Coefficients `c_k` of the asymptotic tail expansion of the 1-d
/// time-one density, `g(y) ~ Σ c_k y^{-αk-1}`.
pub fn tail_series_coefficients(alpha: f64, terms: usize) -> Vec<f64> {
    (1..=terms)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * libm::tgamma(alpha * kf + 1.0) * (kf * FRAC_PI_2 * alpha).sin()
                / (libm::tgamma(kf + 1.0) * PI)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn spec_rejects_out_of_range_alpha() {
        assert!(StableSpec::new(1.0, 1).is_err());
        assert!(StableSpec::new(2.1, 1).is_err());
        assert!(StableSpec::new(1.5, 0).is_err());
        assert!(StableSpec::new(2.0, 3).is_ok());
    }

    #[test]
    fn scalar_sampler_rejects_gaussian_index() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(sample_scalar_stable(2.0, &mut rng).is_err());
        assert!(sample_scalar_stable(0.9, &mut rng).is_err());
    }

    #[test]
    fn scalar_sampler_consumes_two_uniforms() {
        let mut a = ChaCha12Rng::seed_from_u64(9);
        let mut b = ChaCha12Rng::seed_from_u64(9);
        sample_scalar_stable(1.5, &mut a).unwrap();
        for _ in 0..SCALAR_STABLE_UNIFORMS {
            let _: f64 = b.random();
        }
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn gaussian_density_at_origin() {
        let spec = StableSpec::new(2.0, 1).unwrap();
        let p = density(&spec, 1.0, &[0.0]).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn stable_density_at_origin_matches_gamma_formula() {
        let spec = StableSpec::new(1.5, 1).unwrap();
        let p = density(&spec, 1.0, &[0.0]).unwrap();
        // (1/π) Γ(1 + 1/α)
        let expected = libm::tgamma(1.0 + 1.0 / 1.5) / PI;
        assert!((p - expected).abs() < 1e-10, "{p} vs {expected}");
        assert!((expected - 0.287353).abs() < 1e-6);
    }

    #[test]
    fn gradient_vanishes_at_origin() {
        for (alpha, dim) in [(1.5, 1), (1.5, 2), (1.3, 3), (2.0, 2)] {
            let spec = StableSpec::new(alpha, dim).unwrap();
            let g = grad_density(&spec, 0.7, &vec![0.0; dim]).unwrap();
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gaussian_heat_equation_holds() {
        let spec = StableSpec::new(2.0, 1).unwrap();
        let t = 0.8;
        for i in -20..=20 {
            let x = 0.2 * i as f64;
            let dt = time_deriv_density(&spec, t, &[x]).unwrap();
            let p = density(&spec, t, &[x]).unwrap();
            let lap = p * (x * x / (t * t) - 1.0 / t);
            assert!((dt - 0.5 * lap).abs() < 1e-6);
        }
    }

    #[test]
    fn higher_dimensions_match_closed_form_at_origin() {
        // p(1, 0) = ω_{d-1} Γ(d/α) / (α (2π)^d)
        for (dim, omega) in [(2usize, 2.0 * PI), (3usize, 4.0 * PI)] {
            let alpha = 1.5;
            let spec = StableSpec::new(alpha, dim).unwrap();
            let p = density(&spec, 1.0, &vec![0.0; dim]).unwrap();
            let expected = omega * libm::tgamma(dim as f64 / alpha)
                / (alpha * (2.0 * PI).powi(dim as i32));
            assert!((p - expected).abs() < 1e-9, "d={dim}: {p} vs {expected}");
        }
    }

    #[test]
    fn time_derivative_matches_finite_difference() {
        let spec = StableSpec::new(1.5, 2).unwrap();
        let x = [0.4, -0.9];
        let t = 1.3;
        let eps = 1e-4 * spec.scale(t);
        let fd = (density(&spec, t + eps, &x).unwrap() - density(&spec, t - eps, &x).unwrap())
            / (2.0 * eps);
        let dt = time_deriv_density(&spec, t, &x).unwrap();
        assert!((fd - dt).abs() < 1e-6, "{fd} vs {dt}");
    }
}

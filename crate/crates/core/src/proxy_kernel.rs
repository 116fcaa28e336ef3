//! The proxy density `p̄_α` used as a weight in every error and
//! regularity statement.
//!
//! For `α < 2` it is the normalized polynomial profile
//! `C_α v^{-d/α} (1 + |z| / v^{1/α})^{-(d+α)}`; for `α = 2` it is the
//! Gaussian with variance inflated by [`GAUSSIAN_INFLATION`].

use crate::error::{invalid, Result};
use crate::quadrature;
use crate::stable_noise::{density, StableSpec};
use crate::stats::least_squares;
use serde::Serialize;
use std::f64::consts::PI;

/// Variance inflation `c` of the Gaussian proxy.
pub const GAUSSIAN_INFLATION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyKernel {
    spec: StableSpec,
    c_alpha: f64,
    c_gauss: f64,
}

/// Area of the unit sphere `S^{d-1}`.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * PI.powf(0.5 * d) / libm::tgamma(0.5 * d)
}

fn beta_fn(a: f64, b: f64) -> f64 {
    (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp()
}

impl ProxyKernel {
    pub fn new(spec: StableSpec) -> Self {
        Self::with_inflation(spec, GAUSSIAN_INFLATION)
    }

    pub fn with_inflation(spec: StableSpec, c_gauss: f64) -> Self {
        assert!(c_gauss >= 1.0, "Gaussian proxy inflation must be >= 1");
        let c_alpha = if spec.is_gaussian() {
            f64::NAN
        } else {
            // ∫ (1 + |z|)^{-(d+α)} dz = ω_{d-1} B(d, α)
            1.0 / (sphere_area(spec.dim()) * beta_fn(spec.dim() as f64, spec.alpha()))
        };
        Self {
            spec,
            c_alpha,
            c_gauss,
        }
    }

    pub fn spec(&self) -> &StableSpec {
        &self.spec
    }

    /// Normalizer `C_α` (NaN in the Gaussian case).
    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    pub fn c_gauss(&self) -> f64 {
        self.c_gauss
    }

    /// `p̄_α(v, ·)` as a function of the radius `|z|`.
    pub fn eval_radial(&self, v: f64, r: f64) -> f64 {
        let d = self.spec.dim() as f64;
        if self.spec.is_gaussian() {
            let var = self.c_gauss * v;
            (2.0 * PI * var).powf(-0.5 * d) * (-0.5 * r * r / var).exp()
        } else {
            let a = self.spec.alpha();
            let s = v.powf(1.0 / a);
            self.c_alpha * s.powf(-d) * (1.0 + r.abs() / s).powf(-(d + a))
        }
    }

    pub fn eval(&self, v: f64, z: &[f64]) -> f64 {
        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.eval_radial(v, r)
    }

    /// `sup_{x,y} ∫ p̄(u, z - x) p̄(v, y - z) dz / p̄(u + v, y - x)` over
    /// `|y - x| ≤ 10 (u + v)^{1/α}` sampled at `n_points` offsets (d = 1).
    pub fn check_convolution(&self, u: f64, v: f64, n_points: usize) -> Result<ConvolutionReport> {
        if self.spec.dim() != 1 {
            return Err(invalid("dim", "convolution check is implemented for d = 1"));
        }
        if !(u > 0.0 && v > 0.0) {
            return Err(invalid("u, v", "times must be positive"));
        }
        if n_points < 2 {
            return Err(invalid("n_points", "need at least two offsets"));
        }
        let radius = 10.0 * (u + v).powf(1.0 / self.spec.alpha());
        let mut best = ConvolutionReport {
            constant: 0.0,
            argmax: 0.0,
            min_ratio: f64::INFINITY,
            n_points,
        };
        for i in 0..n_points {
            let w = -radius + 2.0 * radius * i as f64 / (n_points - 1) as f64;
            let target = self.eval_radial(u + v, w);
            let conv = quadrature::whole_line(
                |z| self.eval_radial(u, z) * self.eval_radial(v, w - z),
                &[0.0, w],
                1e-15 * target,
                1e-12,
            )?;
            let ratio = conv.value / target;
            if ratio > best.constant {
                best.constant = ratio;
                best.argmax = w;
            }
            best.min_ratio = best.min_ratio.min(ratio);
        }
        Ok(best)
    }

    /// Spatial moment `∫ |z|^δ p̄(v, z) dz`.
    pub fn moment(&self, delta: f64, v: f64) -> Result<f64> {
        self.check_delta(delta)?;
        let d = self.spec.dim() as f64;
        let omega = sphere_area(self.spec.dim());
        let scale = if self.spec.is_gaussian() {
            (self.c_gauss * v).sqrt()
        } else {
            v.powf(1.0 / self.spec.alpha())
        };
        // radial integral in units of the kernel scale
        let est = quadrature::semi_infinite(
            |r| {
                let rr = r * scale;
                rr.powf(delta + d - 1.0) * self.eval_radial(v, rr) * scale
            },
            0.0,
            1e-14,
            1e-12,
        )?;
        Ok(omega * est.value)
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if delta < 0.0 {
            return Err(invalid("delta", "moment order must be nonnegative"));
        }
        if !self.spec.is_gaussian() && delta >= self.spec.alpha() {
            return Err(invalid(
                "delta",
                format!(
                    "moment of order {delta} diverges for alpha = {}",
                    self.spec.alpha()
                ),
            ));
        }
        Ok(())
    }

    /// Regression slope of `log ∫|z|^δ p̄(v,z)dz` against `log v`.
    pub fn check_moments(&self, delta: f64, v_list: &[f64]) -> Result<MomentReport> {
        self.check_delta(delta)?;
        if v_list.len() < 4 {
            return Err(invalid("v_list", "need at least four times"));
        }
        if v_list.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("v_list", "times must be positive"));
        }
        let moments = v_list
            .iter()
            .map(|&v| self.moment(delta, v))
            .collect::<Result<Vec<_>>>()?;
        let xs: Vec<f64> = v_list.iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
        let fit = least_squares(&xs, &ys)?;
        Ok(MomentReport {
            delta,
            times: v_list.to_vec(),
            moments,
            slope: fit.slope,
        })
    }

    /// Range of `p_α(t, x) / p̄_α(t, x)` over `times` and `n_points`
    /// evenly spaced `x` in `[-radius, radius]` (first coordinate axis).
    pub fn check_sandwich(&self, times: &[f64], radius: f64, n_points: usize) -> Result<SandwichReport> {
        if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("times", "need positive times"));
        }
        if n_points < 2 || !(radius > 0.0) {
            return Err(invalid("n_points", "need at least two points on a positive radius"));
        }
        let d = self.spec.dim();
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        let mut x = vec![0.0; d];
        for &t in times {
            for i in 0..n_points {
                x[0] = -radius + 2.0 * radius * i as f64 / (n_points - 1) as f64;
                let ratio = density(&self.spec, t, &x)? / self.eval(t, &x);
                min_ratio = min_ratio.min(ratio);
                max_ratio = max_ratio.max(ratio);
            }
        }
        Ok(SandwichReport {
            constant: max_ratio.max(1.0 / min_ratio),
            min_ratio,
            max_ratio,
            n_points,
        })
    }
}

/// `p_α / p̄_α` lies in `[1/constant, constant]` on the sampled points.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub constant: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionReport {
    /// Fitted constant: largest sampled ratio.
    pub constant: f64,
    pub argmax: f64,
    pub min_ratio: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub delta: f64,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub slope: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pk(alpha: f64, dim: usize) -> ProxyKernel {
        ProxyKernel::new(StableSpec::new(alpha, dim).unwrap())
    }

    #[test]
    fn normalizer_in_one_dimension_is_half_alpha() {
        let k = pk(1.5, 1);
        assert!((k.c_alpha() - 0.75).abs() < 1e-14);
        assert!((k.eval(1.0, &[0.0]) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn unit_mass_in_several_dimensions() {
        for (alpha, dim) in [(1.5, 1), (1.3, 2), (1.8, 3), (2.0, 1), (2.0, 2)] {
            let k = pk(alpha, dim);
            for v in [0.3, 1.0, 7.0] {
                let m = k.moment(0.0, v).unwrap();
                assert!((m - 1.0).abs() < 1e-6, "alpha={alpha} d={dim} v={v}: {m}");
            }
        }
    }

    #[test]
    fn self_similarity_is_exact() {
        let k = pk(1.5, 2);
        let v: f64 = 16.0;
        let s = v.powf(1.0 / 1.5);
        for z in [[0.0, 0.0], [1.0, 2.0], [-7.0, 30.0]] {
            let lhs = k.eval(v, &z);
            let rhs = v.powf(-2.0 / 1.5) * k.eval(1.0, &[z[0] / s, z[1] / s]);
            assert!((lhs - rhs).abs() <= 1e-15 * lhs.abs());
        }
    }

    #[test]
    fn moment_order_checks() {
        let k = pk(1.5, 1);
        assert!(k.check_moments(1.5, &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(k.check_moments(1.0, &[1.0, 2.0, 3.0]).is_err());
        assert!(pk(2.0, 1).moment(3.0, 1.0).is_ok());
    }

    #[test]
    fn moment_slopes() {
        let v = [0.5, 1.0, 2.0, 4.0];
        let zero = pk(1.5, 1).check_moments(0.0, &v).unwrap();
        assert!(zero.slope.abs() < 1e-9);
        let one = pk(1.5, 1).check_moments(1.0, &v).unwrap();
        assert!((one.slope - 1.0 / 1.5).abs() < 0.02);
        let gauss = pk(2.0, 1).check_moments(2.0, &v).unwrap();
        assert!((gauss.slope - 1.0).abs() < 0.01);
        for (m, t) in gauss.moments.iter().zip(&v) {
            assert!((m / t - GAUSSIAN_INFLATION).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_convolution_is_exact() {
        let r = pk(2.0, 1).check_convolution(0.7, 1.3, 41).unwrap();
        assert!((r.constant - 1.0).abs() < 1e-8, "{r:?}");
        assert!((r.min_ratio - 1.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn sandwich_constant_is_moderate() {
        let k = pk(1.5, 1);
        let coarse = k.check_sandwich(&[0.25, 1.0, 4.0], 10.0, 41).unwrap();
        let fine = k.check_sandwich(&[0.25, 1.0, 4.0], 10.0, 81).unwrap();
        assert!(coarse.constant < 10.0, "{coarse:?}");
        assert!((fine.constant / coarse.constant - 1.0).abs() < 0.2);
    }

    #[test]
    fn radial_profile_is_nonincreasing() {
        for k in [pk(1.5, 1), pk(2.0, 3)] {
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let val = k.eval_radial(0.9, i as f64 * 0.1);
                assert!(val <= prev);
                prev = val;
            }
        }
    }
}

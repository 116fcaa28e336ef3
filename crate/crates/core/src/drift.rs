//! Catalog of bounded space-Hölder drifts `b(t, x) = a · τ(t) · φ(x)`.
//!
//! Space profiles act componentwise. The declared sup-norm and Hölder
//! seminorm are the exact (Euclidean) constants for the shape, and
//! [`certify`] checks them by dense sampling.

use crate::error::{invalid, Error, Result};
use crate::quadrature::gl16;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Componentwise shape `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum SpaceProfile {
    /// `sign(x) · min(|x|, 1)^β`
    CappedPower,
    /// `|sin x|^β`
    SinPower,
    /// Unit constant (seminorm zero).
    Constant,
    Zero,
}

/// Time modulation `τ`, bounded by one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum TimeProfile {
    Constant,
    /// `cos(ω t)`
    SmoothOscillating { omega: f64 },
    /// `±1`, switching every half period. `period_steps` is measured in
    /// scheme steps and becomes absolute once a step is fixed with
    /// [`DriftSpec::resolve`]. `phase` is the fraction of a period elapsed
    /// at `t = 0`; the sign is `+` on the first half of each period.
    SquareWave {
        period_steps: f64,
        phase: f64,
        #[serde(default)]
        period: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub name: String,
    pub beta: f64,
    pub amplitude: f64,
    pub dim: usize,
    pub space: SpaceProfile,
    pub time: TimeProfile,
    pub sup_norm: f64,
    pub holder_seminorm: f64,
}

/// Builds a drift with exact metadata for the chosen shape.
pub fn make_holder_drift(
    beta: f64,
    amplitude: f64,
    dim: usize,
    space: SpaceProfile,
    time: TimeProfile,
) -> Result<DriftSpec> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} is outside (0, 1)")));
    }
    if dim == 0 {
        return Err(invalid("dim", "dimension must be at least 1"));
    }
    let zero = matches!(space, SpaceProfile::Zero);
    if !zero && !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(invalid("amplitude", format!("{amplitude} must be positive")));
    }
    match time {
        TimeProfile::SmoothOscillating { omega } if !omega.is_finite() => {
            return Err(invalid("omega", "frequency must be finite"));
        }
        TimeProfile::SquareWave {
            period_steps,
            phase,
            ..
        } if !(period_steps > 0.0 && phase.is_finite()) => {
            return Err(invalid("period_steps", "square-wave period must be positive"));
        }
        _ => {}
    }
    let d = dim as f64;
    // For a componentwise profile with scalar seminorm κ the Euclidean
    // seminorm is κ d^{(1-β)/2}: the worst direction splits the gap evenly.
    let spread = d.powf(0.5 * (1.0 - beta));
    let (sup_norm, holder_seminorm, name) = match space {
        SpaceProfile::CappedPower => (
            amplitude * d.sqrt(),
            amplitude * 2f64.powf(1.0 - beta) * spread,
            "capped-power",
        ),
        SpaceProfile::SinPower => (amplitude * d.sqrt(), amplitude * spread, "sin-power"),
        SpaceProfile::Constant => (amplitude * d.sqrt(), 0.0, "constant"),
        SpaceProfile::Zero => (0.0, 0.0, "zero"),
    };
    Ok(DriftSpec {
        name: name.to_string(),
        beta,
        amplitude: if zero { 0.0 } else { amplitude },
        dim,
        space,
        time,
        sup_norm,
        holder_seminorm,
    })
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        make_holder_drift(0.5, 0.0, dim, SpaceProfile::Zero, TimeProfile::Constant)
            .expect("zero drift is always valid")
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.space, SpaceProfile::Zero)
    }

    /// True when `b` does not depend on `t`.
    pub fn is_time_homogeneous(&self) -> bool {
        matches!(self.time, TimeProfile::Constant) || self.is_zero()
    }

    pub fn needs_step(&self) -> bool {
        matches!(self.time, TimeProfile::SquareWave { period: None, .. })
    }

    /// Fixes the square-wave period for step `h`; other drifts are returned
    /// unchanged.
    pub fn resolve(&self, h: f64) -> DriftSpec {
        let mut out = self.clone();
        if let TimeProfile::SquareWave {
            period_steps,
            phase,
            ..
        } = self.time
        {
            out.time = TimeProfile::SquareWave {
                period_steps,
                phase,
                period: Some(period_steps * h),
            };
        }
        out
    }

    fn ensure_resolved(&self) -> Result<()> {
        if self.needs_step() {
            return Err(invalid(
                "drift",
                format!("`{}` has a square-wave period in steps; resolve it first", self.name),
            ));
        }
        Ok(())
    }

    /// `τ(t)`.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self.time {
            TimeProfile::Constant => 1.0,
            TimeProfile::SmoothOscillating { omega } => (omega * t).cos(),
            TimeProfile::SquareWave { phase, period, .. } => {
                let p = period.expect("square-wave drift evaluated before resolve()");
                let frac = (t / p + phase).rem_euclid(1.0);
                if frac < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Scalar shape `a · φ(x)` of one component.
    pub fn space_factor(&self, x: f64) -> f64 {
        let a = self.amplitude;
        match self.space {
            SpaceProfile::CappedPower => a * x.signum() * x.abs().min(1.0).powf(self.beta),
            SpaceProfile::SinPower => a * x.sin().abs().powf(self.beta),
            SpaceProfile::Constant => a,
            SpaceProfile::Zero => 0.0,
        }
    }

    /// Points where `φ` is not smooth, inside `(a, b)`.
    pub fn space_breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let candidates: Vec<f64> = match self.space {
            SpaceProfile::CappedPower => vec![-1.0, 0.0, 1.0],
            SpaceProfile::SinPower => {
                let lo = (a / PI).ceil() as i64;
                let hi = (b / PI).floor() as i64;
                (lo..=hi).map(|k| k as f64 * PI).collect()
            }
            SpaceProfile::Constant | SpaceProfile::Zero => Vec::new(),
        };
        candidates.into_iter().filter(|&x| x > a && x < b).collect()
    }

    /// Average of `a · φ` against the unit-mass hat of half-width `dx`
    /// centred at `x`. Grid solvers use it instead of point values so the
    /// singular points of `φ` are integrated rather than sampled.
    pub fn cell_average_space_factor(&self, x: f64, dx: f64) -> f64 {
        match self.space {
            SpaceProfile::Constant | SpaceProfile::Zero => return self.space_factor(x),
            _ => {}
        }
        let mut edges = vec![x - dx];
        edges.extend(self.space_breakpoints(x - dx, x + dx));
        edges.push(x);
        edges.push(x + dx);
        edges.sort_by(|p, q| p.total_cmp(q));
        edges.dedup();
        let rule = gl16();
        let mut acc = 0.0;
        for w in edges.windows(2) {
            acc += rule.integrate(w[0], w[1], |z| (1.0 - (z - x).abs() / dx) * self.space_factor(z));
        }
        acc / dx
    }

    /// One-dimensional value `b(t, x)`.
    pub fn eval1(&self, t: f64, x: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.time_factor(t) * self.space_factor(x)
    }

    pub fn evaluate_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let tau = if self.is_zero() { 0.0 } else { self.time_factor(t) };
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = tau * self.space_factor(xi);
        }
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.evaluate_into(t, x, &mut out);
        out
    }

    /// Points of `(t0, t1)` where `τ` jumps.
    pub fn time_breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let TimeProfile::SquareWave {
            phase,
            period: Some(p),
            ..
        } = self.time
        else {
            return Vec::new();
        };
        let half = 0.5 * p;
        // switches where t / p + phase is a multiple of 1/2
        let first = ((t0 / p + phase) * 2.0).floor() + 1.0;
        let mut out = Vec::new();
        let mut j = first;
        loop {
            let t = (j * 0.5 - phase) * p;
            if t >= t1 - 1e-12 * half {
                break;
            }
            if t > t0 + 1e-12 * half {
                out.push(t);
            }
            j += 1.0;
        }
        out
    }

    /// Nodes and weights (summing to one) for the average of `τ` over
    /// `[t0, t1]`: exact for square waves, 16-point Gauss–Legendre for the
    /// smooth profile.
    pub fn time_average_nodes(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let len = t1 - t0;
        match self.time {
            _ if self.is_time_homogeneous() => vec![(t0, 1.0)],
            TimeProfile::SmoothOscillating { .. } => gl16()
                .mapped(t0, t1)
                .map(|(t, w)| (t, w / len))
                .collect(),
            _ => {
                let mut edges = vec![t0];
                edges.extend(self.time_breakpoints(t0, t1));
                edges.push(t1);
                edges
                    .windows(2)
                    .map(|w| (0.5 * (w[0] + w[1]), (w[1] - w[0]) / len))
                    .collect()
            }
        }
    }

    /// `τ` just before (`side < 0`) or after (`side > 0`) `t`.
    pub fn time_factor_one_sided(&self, t: f64, side: f64) -> f64 {
        match self.time {
            TimeProfile::SquareWave {
                period: Some(p), ..
            } => self.time_factor(t + side.signum() * 1e-9 * p),
            _ => self.time_factor(t),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub max_ratio_beta: f64,
    pub max_abs: f64,
    pub n_pairs: usize,
}

/// Slack allowed on top of the declared constants.
pub const CERTIFY_SLACK: f64 = 1e-9;

/// Samples `n_pairs` pairs at log-spaced gaps in `[1e-6, 10]` and times in
/// `[0, horizon]`, and checks the declared sup-norm and seminorm.
pub fn certify<R: Rng + ?Sized>(
    drift: &DriftSpec,
    n_pairs: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<CertificationReport> {
    if n_pairs < 1000 {
        return Err(invalid("n_pairs", "certification needs at least 1000 pairs"));
    }
    drift.ensure_resolved()?;
    let d = drift.dim;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut max_ratio: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for i in 0..n_pairs {
        let t = rng.random::<f64>() * horizon;
        let gap = 10f64.powf(-6.0 + 7.0 * rng.random::<f64>());
        // Half the pairs are centred near the origin, where the capped
        // power is least regular.
        let spread = if i % 2 == 0 { 2.0 * gap } else { 2.0 * PI };
        for v in x.iter_mut() {
            *v = spread * (2.0 * rng.random::<f64>() - 1.0);
        }
        let mut norm = 0.0;
        for v in dir.iter_mut() {
            *v = 2.0 * rng.random::<f64>() - 1.0;
            norm += *v * *v;
        }
        let norm = norm.sqrt().max(1e-300);
        for k in 0..d {
            y[k] = x[k] + gap * dir[k] / norm;
        }
        drift.evaluate_into(t, &x, &mut bx);
        drift.evaluate_into(t, &y, &mut by);
        let diff = bx
            .iter()
            .zip(&by)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let actual_gap = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if actual_gap > 0.0 {
            max_ratio = max_ratio.max(diff / actual_gap.powf(drift.beta));
        }
        let nx = bx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = by.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_abs = max_abs.max(nx).max(ny);
    }
    if max_abs > drift.sup_norm + CERTIFY_SLACK {
        return Err(Error::CertificationFailure {
            drift: drift.name.clone(),
            detail: format!("sampled |b| = {max_abs} exceeds declared sup-norm {}", drift.sup_norm),
        });
    }
    if max_ratio > drift.holder_seminorm + CERTIFY_SLACK {
        return Err(Error::CertificationFailure {
            drift: drift.name.clone(),
            detail: format!(
                "sampled Hölder ratio {max_ratio} exceeds declared seminorm {}",
                drift.holder_seminorm
            ),
        });
    }
    Ok(CertificationReport {
        max_ratio_beta: max_ratio,
        max_abs,
        n_pairs,
    })
}

/// A catalog entry as shown by `list-drifts`.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub space: SpaceProfile,
    pub summary: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "capped-power",
        space: SpaceProfile::CappedPower,
        summary: "a·sign(x)·min(|x|,1)^β per component; seminorm 2^(1-β)·a",
    },
    CatalogEntry {
        name: "sin-power",
        space: SpaceProfile::SinPower,
        summary: "a·|sin x|^β per component; seminorm a",
    },
    CatalogEntry {
        name: "constant",
        space: SpaceProfile::Constant,
        summary: "a in every component; seminorm 0",
    },
    CatalogEntry {
        name: "zero",
        space: SpaceProfile::Zero,
        summary: "b ≡ 0",
    },
];

pub const TIME_PROFILES: &[(&str, &str)] = &[
    ("constant", "τ ≡ 1"),
    ("smooth-oscillating", "τ(t) = cos(ω t); parameter omega"),
    (
        "square-wave",
        "τ = ±1 flipping every half period; parameters period_steps (in units of h), phase",
    ),
];

pub fn lookup(name: &str) -> Result<SpaceProfile> {
    CATALOG
        .iter()
        .find(|e| e.name == name)
        .map(|e| e.space)
        .ok_or_else(|| Error::Config {
            key: "drift.name".into(),
            reason: format!(
                "unknown drift `{name}` (known: {})",
                CATALOG.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
            ),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn capped(beta: f64) -> DriftSpec {
        make_holder_drift(beta, 1.0, 1, SpaceProfile::CappedPower, TimeProfile::Constant).unwrap()
    }

    #[test]
    fn cell_average_of_capped_power() {
        let b = capped(0.5);
        // odd profile: the average over a cell centred at 0 vanishes
        assert!(b.cell_average_space_factor(0.0, 0.1).abs() < 1e-15);
        // smooth region: second-order close to the point value
        let x: f64 = 0.5;
        let dx = 1e-2;
        let exact = x.sqrt() + dx * dx / 12.0 * (-0.25 * x.powf(-1.5));
        assert!((b.cell_average_space_factor(x, dx) - exact).abs() < 1e-8);
        // hat touching the singular point
        let v = b.cell_average_space_factor(dx, dx);
        let f = |z: f64| (1.0 - (z - dx).abs() / dx) * z.sqrt();
        let want = crate::quadrature::adaptive(f, 0.0, 2.0 * dx, 1e-14, 1e-13).unwrap().value / dx;
        assert!((v - want).abs() < 1e-7, "{v} vs {want}");
    }

    #[test]
    fn rejects_bad_beta() {
        for beta in [0.0, 1.0, -0.3, f64::NAN] {
            assert!(make_holder_drift(beta, 1.0, 1, SpaceProfile::SinPower, TimeProfile::Constant).is_err());
        }
    }

    #[test]
    fn capped_power_values() {
        let b = capped(0.5);
        assert_eq!(b.eval1(0.0, 2.0), b.eval1(0.0, 1.0));
        let diff = b.eval1(0.0, 0.04) - b.eval1(0.0, 0.01);
        assert!((diff - 0.1).abs() < 1e-15);
        assert!(diff <= 0.03f64.sqrt());
        // the straddling pair attains the declared seminorm
        let r: f64 = 1e-3;
        let q = (b.eval1(0.0, r / 2.0) - b.eval1(0.0, -r / 2.0)) / r.sqrt();
        assert!((q - b.holder_seminorm).abs() < 1e-12);
    }

    #[test]
    fn certification_of_catalog() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = certify(&DriftSpec::zero(1), 1000, 1.0, &mut rng).unwrap();
        assert_eq!((z.max_ratio_beta, z.max_abs), (0.0, 0.0));

        let c = certify(&capped(0.5), 4000, 1.0, &mut rng).unwrap();
        assert!((c.max_abs - 1.0).abs() < 1e-12);
        assert!(c.max_ratio_beta > 1.0, "straddling pairs should exceed the one-sided constant");

        let s = make_holder_drift(0.7, 2.0, 1, SpaceProfile::SinPower, TimeProfile::Constant).unwrap();
        let r = certify(&s, 4000, 1.0, &mut rng).unwrap();
        assert!((r.max_abs - 2.0).abs() < 1e-3, "{r:?}");

        for dim in [2, 3] {
            let v = make_holder_drift(0.4, 1.5, dim, SpaceProfile::CappedPower, TimeProfile::Constant).unwrap();
            certify(&v, 5000, 1.0, &mut rng).unwrap();
        }
    }

    #[test]
    fn certification_catches_understated_metadata() {
        let mut b = capped(0.5);
        b.holder_seminorm = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            certify(&b, 5000, 1.0, &mut rng),
            Err(Error::CertificationFailure { .. })
        ));
    }

    #[test]
    fn square_wave_flips_each_step() {
        let h = 0.125;
        let b = make_holder_drift(
            0.5,
            1.0,
            1,
            SpaceProfile::SinPower,
            TimeProfile::SquareWave {
                period_steps: 2.0,
                phase: 0.0,
                period: None,
            },
        )
        .unwrap();
        assert!(b.needs_step());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(certify(&b, 1000, 1.0, &mut rng).is_err());
        let b = b.resolve(h);
        let signs: Vec<f64> = (0..6).map(|k| b.time_factor((k as f64 + 0.5) * h)).collect();
        assert_eq!(signs, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let sup = (0..10_000)
            .map(|i| b.eval1(i as f64 * 1e-4, PI / 2.0).abs())
            .fold(0.0, f64::max);
        assert_eq!(sup, 1.0);
    }

    #[test]
    fn mid_step_switching_averages_to_zero() {
        let h = 0.01;
        let b = make_holder_drift(
            0.5,
            1.0,
            1,
            SpaceProfile::CappedPower,
            TimeProfile::SquareWave {
                period_steps: 2.0,
                phase: 0.25,
                period: None,
            },
        )
        .unwrap()
        .resolve(h);
        for k in 0..20 {
            let t0 = k as f64 * h;
            let nodes = b.time_average_nodes(t0, t0 + h);
            assert_eq!(nodes.len(), 2);
            let avg: f64 = nodes.iter().map(|(t, w)| w * b.time_factor(*t)).sum();
            assert!(avg.abs() < 1e-9);
            let expected = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(b.time_factor(t0), expected);
        }
    }
}

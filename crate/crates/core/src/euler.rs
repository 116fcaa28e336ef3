//! The randomized-time Euler scheme
//! `X_{k+1} = X_k + h b(θ_k, X_k) + ΔZ_k`, `θ_k ~ U[t_k, t_{k+1}]`
//! (or `θ_k = t_k` for the left-point variant).

use crate::drift::DriftSpec;
use crate::error::{invalid, Error, Result};
use crate::kernel1d::Kernel1D;
use crate::par;
use crate::quadrature::gl16;
use crate::rng::{substream, StreamKind};
use crate::stable_noise::{density, sample_isotropic_increment_into, StableSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub horizon: f64,
    pub steps: usize,
    pub randomized: bool,
    pub seed: u64,
}

impl SchemeConfig {
    pub fn new(horizon: f64, steps: usize, randomized: bool, seed: u64) -> Result<Self> {
        let cfg = Self {
            horizon,
            steps,
            randomized,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k = k h`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h()
    }

    /// Grid projection `τ_s^h = h ⌊s / h⌋`.
    pub fn project(&self, s: f64) -> f64 {
        let h = self.h();
        (s / h).floor() * h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `U_k` for the randomized scheme.
    pub draws: Option<Vec<f64>>,
}

fn prepare(drift: &DriftSpec, spec: &StableSpec, cfg: &SchemeConfig, x0: &[f64]) -> Result<DriftSpec> {
    cfg.validate()?;
    if x0.len() != spec.dim() || drift.dim != spec.dim() {
        return Err(invalid(
            "x0",
            format!(
                "dimensions disagree: x0 {}, drift {}, noise {}",
                x0.len(),
                drift.dim,
                spec.dim()
            ),
        ));
    }
    Ok(drift.resolve(cfg.h()))
}

/// Draws the evaluation time of step `k`. The time stream is only touched
/// by the randomized scheme.
fn evaluation_time<R: Rng + ?Sized>(cfg: &SchemeConfig, k: usize, rng_time: &mut R) -> f64 {
    let t = cfg.time(k);
    if cfg.randomized {
        t + cfg.h() * rng_time.random::<f64>()
    } else {
        t
    }
}

pub fn simulate_path<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    drift: &DriftSpec,
    spec: &StableSpec,
    cfg: &SchemeConfig,
    x0: &[f64],
    rng_noise: &mut R1,
    rng_time: &mut R2,
) -> Result<SchemePath> {
    let drift = prepare(drift, spec, cfg, x0)?;
    let h = cfg.h();
    let d = spec.dim();
    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut draws = cfg.randomized.then(|| Vec::with_capacity(cfg.steps));
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut dz = vec![0.0; d];
    states.push(x.clone());
    for k in 0..cfg.steps {
        let theta = evaluation_time(cfg, k, rng_time);
        if let Some(u) = draws.as_mut() {
            u.push(theta);
        }
        drift.evaluate_into(theta, &x, &mut b);
        sample_isotropic_increment_into(spec, h, rng_noise, &mut dz);
        for i in 0..d {
            x[i] += h * b[i] + dz[i];
        }
        states.push(x.clone());
    }
    Ok(SchemePath {
        times: (0..=cfg.steps).map(|k| cfg.time(k)).collect(),
        states,
        draws,
    })
}

fn terminal_of(
    drift: &DriftSpec,
    spec: &StableSpec,
    cfg: &SchemeConfig,
    x0: &[f64],
    path: u64,
    out: &mut [f64],
) {
    let mut rng_noise = substream(cfg.seed, StreamKind::Noise, path);
    let mut rng_time = substream(cfg.seed, StreamKind::Time, path);
    let h = cfg.h();
    let d = spec.dim();
    out.copy_from_slice(x0);
    let mut b = vec![0.0; d];
    let mut dz = vec![0.0; d];
    for k in 0..cfg.steps {
        let theta = evaluation_time(cfg, k, &mut rng_time);
        drift.evaluate_into(theta, out, &mut b);
        sample_isotropic_increment_into(spec, h, &mut rng_noise, &mut dz);
        for i in 0..d {
            out[i] += h * b[i] + dz[i];
        }
    }
}

/// Terminal states of `n_paths` paths; path `i` uses the substreams
/// `(seed, noise, i)` and `(seed, time, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminals {
    pub dim: usize,
    /// Row-major, `n_paths × dim`.
    pub values: Vec<f64>,
}

impl Terminals {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// First coordinate of every path.
    pub fn first_coordinates(&self) -> Vec<f64> {
        self.values.iter().step_by(self.dim).copied().collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("path_index");
        for k in 1..=self.dim {
            header.push_str(&format!(",x_{k}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            let mut line = i.to_string();
            for v in self.row(i) {
                line.push_str(&format!(",{v:e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"SETERM01";

    /// Little-endian binary: magic, `dim: u32`, `n: u64`, then the values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Degenerate("not a terminal-batch file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut values = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(Self { dim, values })
    }
}

pub fn batch_terminals(
    drift: &DriftSpec,
    spec: &StableSpec,
    cfg: &SchemeConfig,
    x0: &[f64],
    n_paths: usize,
) -> Result<Terminals> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    let drift = prepare(drift, spec, cfg, x0)?;
    let d = spec.dim();
    const CHUNK: usize = 1024;
    let chunks = n_paths.div_ceil(CHUNK);
    let parts = par::map_indexed(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n_paths);
        let mut buf = vec![0.0; (hi - lo) * d];
        for (j, p) in (lo..hi).enumerate() {
            terminal_of(&drift, spec, cfg, x0, p as u64, &mut buf[j * d..(j + 1) * d]);
        }
        buf
    });
    Ok(Terminals {
        dim: d,
        values: parts.concat(),
    })
}

/// Averaged one-step transition density
/// `(1/h) ∫_{t_k}^{t_k+h} p_α(h, y - x - h b(u, x)) du`, or the left-point
/// kernel when `randomized` is false.
pub fn step_density(
    drift: &DriftSpec,
    spec: &StableSpec,
    h: f64,
    t_k: f64,
    x: &[f64],
    y: &[f64],
    randomized: bool,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("h", "step must be positive"));
    }
    let d = spec.dim();
    if x.len() != d || y.len() != d {
        return Err(invalid("x, y", "dimension mismatch"));
    }
    let drift = drift.resolve(h);
    let kernel = if d == 1 { Some(Kernel1D::new(spec)?) } else { None };
    let mut b = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut at = |u: f64| -> Result<f64> {
        drift.evaluate_into(u, x, &mut b);
        for i in 0..d {
            v[i] = y[i] - x[i] - h * b[i];
        }
        match &kernel {
            Some(k) => Ok(k.pdf(h, v[0])),
            None => density(spec, h, &v),
        }
    };
    if !randomized || drift.is_time_homogeneous() {
        return at(t_k);
    }
    let t1 = t_k + h;
    let mut edges = vec![t_k];
    edges.extend(drift.time_breakpoints(t_k, t1));
    edges.push(t1);
    let piecewise_constant = !matches!(
        drift.time,
        crate::drift::TimeProfile::SmoothOscillating { .. }
    );
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, c) = (w[0], w[1]);
        if piecewise_constant {
            total += (c - a) * at(0.5 * (a + c))?;
            continue;
        }
        // composite 16-point rule, doubling the panel count
        let mut panels = 1usize;
        let mut prev = composite(&mut at, a, c, panels)?;
        loop {
            panels *= 2;
            let next = composite(&mut at, a, c, panels)?;
            let done = (next - prev).abs() <= 1e-8 * next.abs().max(f64::MIN_POSITIVE);
            prev = next;
            if done || panels >= 1 << 12 {
                break;
            }
        }
        total += prev;
    }
    Ok(total / h)
}

fn composite<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64, panels: usize) -> Result<f64> {
    let rule = gl16();
    let w = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * w;
        for (u, wt) in rule.mapped(lo, lo + w) {
            s += wt * f(u)?;
        }
    }
    Ok(s)
}

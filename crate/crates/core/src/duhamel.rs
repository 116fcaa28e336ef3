//! One-dimensional reference densities on a uniform grid.
//!
//! * [`propagate_scheme_density`] pushes the Euler scheme's law forward
//!   step by step: every node's mass is moved by `h b(u, z)` (cubic
//!   deposit, which keeps the first four moments) and then convolved with
//!   `p_α(h, ·)` by FFT.
//! * [`solve_sde_density`] solves the Duhamel equation
//!   `Γ(t) = P_{t-a} Γ(a) - ∫_a^t D_{t-r}[Γ(r) b(r)] dr` by Picard
//!   iteration on blocks of time nodes, restarting at each block end.
//!   `S = Γ b` is taken piecewise linear in time and in space, and the
//!   gradient kernel is integrated exactly against both, so the
//!   `(t - r)^{-1/α}` singularity never gets sampled.

use crate::conv::Convolver;
use crate::drift::DriftSpec;
use crate::error::{invalid, Error, Result};
use crate::euler::SchemeConfig;
use crate::kernel1d::Kernel1D;
use crate::par;
use crate::quadrature::{gl16, GaussLegendre};
use crate::stable_noise::StableSpec;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::io::{BufRead, Read, Write};

/// Minimal number of nodes.
pub const MIN_NODES: usize = 256;
/// Largest tolerated `|mass_defect|`.
pub const MASS_DEFECT_LIMIT: f64 = 1e-3;
/// A kernel whose scale is at least this many cells is sampled pointwise;
/// narrower kernels are integrated against the hat basis.
const RESOLVED_CELLS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    /// Times at which a density slice is stored.
    pub times: Vec<f64>,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_x: usize, times: Vec<f64>) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid("x_min, x_max", "need a finite interval with x_min < x_max"));
        }
        if n_x < MIN_NODES {
            return Err(invalid("n_x", format!("need at least {MIN_NODES} nodes, got {n_x}")));
        }
        if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
            return Err(invalid("times", "need at least one positive time"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("times", "times must be strictly increasing"));
        }
        Ok(Self {
            x_min,
            x_max,
            n_x,
            times,
        })
    }

    /// Grid `[x0 - half_width, x0 + half_width]` with spacing close to `dx`.
    pub fn centered(x0: f64, half_width: f64, dx: f64, times: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0 && half_width > 0.0) {
            return Err(invalid("dx", "spacing and half width must be positive"));
        }
        let cells = (2.0 * half_width / dx).round() as usize;
        Self::new(x0 - half_width, x0 + half_width, cells + 1, times)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.node(i)).collect()
    }

    /// Truncation rule: at least `10 T^{1/α}` on each side of `x0`.
    pub fn check_truncation(&self, alpha: f64, horizon: f64, x0: f64) -> Result<()> {
        let need = 10.0 * horizon.powf(1.0 / alpha);
        if x0 - self.x_min < need * (1.0 - 1e-12) || self.x_max - x0 < need * (1.0 - 1e-12) {
            return Err(invalid(
                "grid",
                format!(
                    "domain [{}, {}] must extend {need:.4} on each side of x0 = {x0}",
                    self.x_min, self.x_max
                ),
            ));
        }
        Ok(())
    }

    pub fn same_nodes(&self, other: &Grid1D) -> bool {
        self.n_x == other.n_x
            && (self.x_min - other.x_min).abs() <= 1e-12 * self.dx()
            && (self.x_max - other.x_max).abs() <= 1e-12 * self.dx()
    }
}

/// Density slices on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    pub grid: Grid1D,
    /// `values[k][i]` is the density at `grid.times[k]`, node `i`.
    pub values: Vec<Vec<f64>>,
    /// `1 - (trapezoid mass + analytic mass outside the domain)`.
    pub mass_defect: Vec<f64>,
}

impl GridDensity {
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.grid
            .times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::GridMismatch(format!("no slice stored at t = {t}")))
    }

    pub fn slice(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.values[self.time_index(t)?])
    }

    pub fn trapezoid_mass(&self, k: usize) -> f64 {
        trapezoid(&self.values[k], self.grid.dx())
    }

    /// CSV with columns `t,x,value,mass_defect`; negative round-off is
    /// clamped to zero.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,value,mass_defect")?;
        for (k, t) in self.grid.times.iter().enumerate() {
            for i in 0..self.grid.n_x {
                writeln!(
                    w,
                    "{t},{},{:e},{:e}",
                    self.grid.node(i),
                    self.values[k][i].max(0.0),
                    self.mass_defect[k]
                )?;
            }
        }
        Ok(())
    }

    const MAGIC: &'static str = "stable-euler grid density v1";

    /// Text header (`key = value` lines ending with `end`) followed by
    /// little-endian `f64` slices, time-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::MAGIC)?;
        writeln!(w, "x_min = {:e}", self.grid.x_min)?;
        writeln!(w, "x_max = {:e}", self.grid.x_max)?;
        writeln!(w, "n_x = {}", self.grid.n_x)?;
        writeln!(w, "n_times = {}", self.grid.times.len())?;
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        writeln!(w, "times = {}", join(&self.grid.times))?;
        writeln!(w, "mass_defect = {}", join(&self.mass_defect))?;
        writeln!(w, "layout = f64-le time-major")?;
        writeln!(w, "end")?;
        for row in &self.values {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(r);
        let bad = |m: &str| Error::Degenerate(format!("grid density file: {m}"));
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != Self::MAGIC {
            return Err(bad("unrecognised header"));
        }
        let mut fields = std::collections::HashMap::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            let l = line.trim_end();
            if l == "end" {
                break;
            }
            let (k, v) = l.split_once(" = ").ok_or_else(|| bad("malformed header line"))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(k)) };
        let list = |k: &str| -> Result<Vec<f64>> {
            let s = get(k)?;
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(|x| x.parse().map_err(|_| bad(k))).collect()
        };
        let n_x: usize = get("n_x")?.parse().map_err(|_| bad("n_x"))?;
        let times = list("times")?;
        let mass_defect = list("mass_defect")?;
        let grid = Grid1D::new(num("x_min")?, num("x_max")?, n_x, times)?;
        let mut values = Vec::with_capacity(grid.times.len());
        let mut b8 = [0u8; 8];
        for _ in 0..grid.times.len() {
            let mut row = Vec::with_capacity(n_x);
            for _ in 0..n_x {
                r.read_exact(&mut b8)?;
                row.push(f64::from_le_bytes(b8));
            }
            values.push(row);
        }
        Ok(Self {
            grid,
            values,
            mass_defect,
        })
    }
}

fn trapezoid(v: &[f64], dx: f64) -> f64 {
    let n = v.len();
    dx * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

fn mass_defect(kernel: &Kernel1D, grid: &Grid1D, values: &[f64], elapsed: f64, x0: f64) -> f64 {
    let outside = kernel.survival(elapsed, grid.x_max - x0) + (1.0 - kernel.survival(elapsed, grid.x_min - x0));
    1.0 - trapezoid(values, grid.dx()) - outside
}

fn check_mass(defect: f64, t: f64) -> Result<()> {
    if defect.abs() > MASS_DEFECT_LIMIT || !defect.is_finite() {
        return Err(Error::MassDefect {
            time: t,
            defect,
            limit: MASS_DEFECT_LIMIT,
        });
    }
    Ok(())
}

/// Weight of node offset `v` in `∫ p(t, y - z) f(z) dz` for grid data `f`:
/// `dx p(t, v)` when the kernel is resolved, else the exact integral
/// against the hat basis function.
fn smoothing_weight(kernel: &Kernel1D, t: f64, v: f64, dx: f64) -> f64 {
    if kernel.scale(t) >= RESOLVED_CELLS * dx {
        dx * kernel.pdf(t, v)
    } else {
        kernel.hat_pdf(t, v, dx)
    }
}

/// Same for `∫ ∂_y p(t, y - z) f(z) dz`.
fn gradient_weight(kernel: &Kernel1D, t: f64, v: f64, dx: f64) -> f64 {
    if kernel.scale(t) >= RESOLVED_CELLS * dx {
        dx * kernel.dpdf(t, v)
    } else {
        kernel.hat_dpdf(t, v, dx)
    }
}

fn check_problem(spec: &StableSpec, drift: &DriftSpec, grid: &Grid1D, x0: f64) -> Result<Kernel1D> {
    if spec.dim() != 1 || drift.dim != 1 {
        return Err(invalid("dim", "grid solvers are one-dimensional"));
    }
    if !x0.is_finite() || x0 <= grid.x_min || x0 >= grid.x_max {
        return Err(invalid("x0", "initial point must lie inside the grid"));
    }
    Kernel1D::new(spec)
}

/// Moves mass `m` from node `i` to `x` with cubic Lagrange weights.
fn deposit(out: &mut [f64], grid_x_min: f64, dx: f64, x: f64, m: f64) {
    let s = (x - grid_x_min) / dx;
    let j = s.floor();
    let f = s - j;
    let j = j as isize;
    let w = [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ];
    let n = out.len() as isize;
    for (k, wk) in w.iter().enumerate() {
        let idx = j - 1 + k as isize;
        if idx >= 0 && idx < n {
            out[idx as usize] += m * wk;
        }
    }
}

/// Density of the Euler scheme on `grid` at the stored times, which must
/// be multiples of `h`.
pub fn propagate_scheme_density(
    drift: &DriftSpec,
    spec: &StableSpec,
    x0: f64,
    cfg: &SchemeConfig,
    grid: &Grid1D,
) -> Result<GridDensity> {
    cfg.validate()?;
    let kernel = check_problem(spec, drift, grid, x0)?;
    let h = cfg.h();
    let drift = drift.resolve(h);
    let mut stored_steps = Vec::with_capacity(grid.times.len());
    for &t in &grid.times {
        let k = (t / h).round();
        if (k * h - t).abs() > 1e-9 * t.max(1.0) || k < 1.0 || k as usize > cfg.steps {
            return Err(Error::GridMismatch(format!(
                "t = {t} is not a step time of the scheme with h = {h}"
            )));
        }
        stored_steps.push(k as usize);
    }
    let dx = grid.dx();
    let n = grid.n_x;
    let xs = grid.nodes();
    let nodes_for = |k: usize| -> Vec<(f64, f64)> {
        let t = cfg.time(k);
        if cfg.randomized {
            drift.time_average_nodes(t, t + h)
        } else {
            vec![(t, 1.0)]
        }
    };

    // first step from the point mass
    let first = nodes_for(0);
    let mut gamma: Vec<f64> = xs
        .iter()
        .map(|&y| {
            first
                .iter()
                .map(|&(u, w)| w * smoothing_weight(&kernel, h, y - x0 - h * drift.eval1(u, x0), dx) / dx)
                .sum()
        })
        .collect();

    let conv = Convolver::new(n);
    let k_hat = conv.kernel(|m| smoothing_weight(&kernel, h, m as f64 * dx, dx));
    let space: Vec<f64> = xs.iter().map(|&x| drift.cell_average_space_factor(x, dx)).collect();

    let mut values = Vec::with_capacity(stored_steps.len());
    let mut defects = Vec::with_capacity(stored_steps.len());
    let mut store = |k: usize, g: &[f64], values: &mut Vec<Vec<f64>>| -> Result<()> {
        if stored_steps.get(values.len()) == Some(&k) {
            let t = cfg.time(k);
            let defect = mass_defect(&kernel, grid, g, t, x0);
            check_mass(defect, t)?;
            defects.push(defect);
            values.push(g.to_vec());
        }
        Ok(())
    };
    store(1, &gamma, &mut values)?;
    let mut moved = vec![0.0; n];
    for k in 1..cfg.steps {
        moved.iter_mut().for_each(|v| *v = 0.0);
        let tau: Vec<(f64, f64)> = nodes_for(k)
            .into_iter()
            .map(|(u, w)| (drift.time_factor(u), w))
            .collect();
        for i in 0..n {
            let g = gamma[i];
            if g == 0.0 {
                continue;
            }
            for &(tf, w) in &tau {
                deposit(&mut moved, grid.x_min, dx, xs[i] + h * tf * space[i], w * g);
            }
        }
        gamma = conv.apply(&k_hat, &moved);
        store(k + 1, &gamma, &mut values)?;
    }
    Ok(GridDensity {
        grid: grid.clone(),
        values,
        mass_defect: defects,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuhamelOptions {
    /// Picard stopping tolerance (sup-norm of successive changes).
    pub tol: f64,
    pub max_iter: usize,
    /// Spacing of the time nodes.
    pub time_step: f64,
    /// Requested nodes per Picard block; halved until the iteration
    /// contracts.
    pub block_steps: usize,
    /// Largest accepted ratio of successive sup-changes on the first block.
    pub contraction_limit: f64,
    /// The initial layer ends once `r0^{1/α}` exceeds this many cells.
    pub initial_layer_cells: f64,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            time_step: 1.0 / 1024.0,
            block_steps: 32,
            contraction_limit: 0.75,
            initial_layer_cells: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    /// Certified block length `T*`.
    pub block_length: f64,
    pub block_steps: usize,
    pub blocks: usize,
    /// Sweeps used by each block.
    pub sweeps: Vec<usize>,
    /// Sup-changes of the first block's sweeps.
    pub first_block_changes: Vec<f64>,
    /// Ratios of successive entries of `first_block_changes`.
    pub contraction_ratios: Vec<f64>,
    /// End of the initial layer, relative to the start time.
    pub initial_layer: f64,
}

#[derive(Debug, Clone)]
pub struct DuhamelSolution {
    pub density: GridDensity,
    pub diagnostics: PicardDiagnostics,
}

/// Spectra of the block kernels for lags `1..=m`.
struct BlockKernels {
    free: Vec<Vec<Complex64>>,
    left: Vec<Vec<Complex64>>,
    right: Vec<Vec<Complex64>>,
}

fn lag_panels(lag: usize, delta: f64, split: f64) -> Vec<(f64, f64)> {
    let hi = lag as f64 * delta;
    let lo = hi - delta;
    let mut edges = if lag == 1 {
        // geometric grading towards τ = 0
        let mut e = vec![0.0];
        e.extend((0..=12).rev().map(|k| delta * 0.25f64.powi(k)));
        e
    } else {
        vec![lo, hi]
    };
    if split > lo && split < hi {
        edges.push(split);
        edges.sort_by(|a, b| a.total_cmp(b));
    }
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

fn build_kernels(kernel: &Kernel1D, conv: &Convolver, dx: f64, delta: f64, m: usize, with_drift: bool) -> BlockKernels {
    let n = conv.n();
    let split = (RESOLVED_CELLS * dx).powf(kernel.alpha());
    let rule: &GaussLegendre = gl16();
    let per_lag = par::map_indexed(m, |l| {
        let lag = l + 1;
        let free = conv.kernel(|o| smoothing_weight(kernel, lag as f64 * delta, o as f64 * dx, dx));
        if !with_drift {
            return (free, Vec::new(), Vec::new());
        }
        let panels = lag_panels(lag, delta, split);
        let nodes: Vec<(f64, f64)> = panels
            .iter()
            .flat_map(|&(a, b)| rule.mapped(a, b).collect::<Vec<_>>())
            .collect();
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for o in 0..n {
            let v = o as f64 * dx;
            let (mut a, mut b) = (0.0, 0.0);
            for &(tau, w) in &nodes {
                let k = gradient_weight(kernel, tau, v, dx);
                // r = t_i - τ lies at fraction s/δ = lag - τ/δ of its interval
                let frac = lag as f64 - tau / delta;
                a += w * (1.0 - frac) * k;
                b += w * frac * k;
            }
            left[o] = a;
            right[o] = b;
        }
        // odd in the offset
        let odd = |tab: &[f64], o: isize| {
            let v = tab[o.unsigned_abs()];
            if o < 0 {
                -v
            } else {
                v
            }
        };
        let l_spec = conv.kernel(|o| odd(&left, o));
        let r_spec = conv.kernel(|o| odd(&right, o));
        (free, l_spec, r_spec)
    });
    let mut out = BlockKernels {
        free: Vec::with_capacity(m),
        left: Vec::with_capacity(m),
        right: Vec::with_capacity(m),
    };
    for (f, l, r) in per_lag {
        out.free.push(f);
        out.left.push(l);
        out.right.push(r);
    }
    out
}

struct BlockOutcome {
    values: Vec<Vec<f64>>,
    changes: Vec<f64>,
}

/// Picard iteration on one block. `start` is `Γ` at the first node and
/// `tau_plus[i]`, `tau_minus[i]` are the one-sided time factors of the
/// drift at node `i`.
#[allow(clippy::too_many_arguments)]
fn picard_block(
    conv: &Convolver,
    kernels: &BlockKernels,
    start: &[f64],
    space: &[f64],
    tau_plus: &[f64],
    tau_minus: &[f64],
    steps: usize,
    opts: &DuhamelOptions,
    with_drift: bool,
) -> Result<BlockOutcome> {
    let start_spec = conv.signal(start);
    let free: Vec<Vec<f64>> = par::map_indexed(steps, |l| {
        let s: Vec<Complex64> = start_spec
            .iter()
            .zip(&kernels.free[l])
            .map(|(a, b)| a * b)
            .collect();
        conv.finish(s)
    });
    if !with_drift {
        return Ok(BlockOutcome {
            values: free,
            changes: vec![0.0],
        });
    }
    let weighted = |g: &[f64], tau: f64| -> Vec<f64> { g.iter().zip(space).map(|(a, b)| a * b * tau).collect() };
    let s0 = conv.signal(&weighted(start, tau_plus[0]));
    let mut current = free.clone();
    let mut changes = Vec::new();
    loop {
        // spectra of S^+ at nodes 1..steps-1 and S^- at nodes 1..steps
        let plus: Vec<Vec<Complex64>> = par::map_indexed(steps - 1, |i| conv.signal(&weighted(&current[i], tau_plus[i + 1])));
        let minus: Vec<Vec<Complex64>> = par::map_indexed(steps, |i| conv.signal(&weighted(&current[i], tau_minus[i + 1])));
        let next: Vec<Vec<f64>> = par::map_indexed(steps, |i| {
            // node i + 1; intervals m = 0..=i
            let mut acc = vec![Complex64::new(0.0, 0.0); start_spec.len()];
            for m in 0..=i {
                let lag = i - m; // kernel index (lag - 1)
                let sp = if m == 0 { &s0 } else { &plus[m - 1] };
                let sm = &minus[m];
                let (a, b) = (&kernels.left[lag], &kernels.right[lag]);
                for (((o, x), y), (ka, kb)) in acc.iter_mut().zip(sp).zip(sm).zip(a.iter().zip(b)) {
                    *o += ka * x + kb * y;
                }
            }
            let d = conv.finish(acc);
            free[i].iter().zip(&d).map(|(f, d)| f - d).collect()
        });
        let change = next
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        changes.push(change);
        current = next;
        if change < opts.tol {
            return Ok(BlockOutcome {
                values: current,
                changes,
            });
        }
        if changes.len() >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: changes.len(),
                last_change: change,
                tol: opts.tol,
                changes,
            });
        }
    }
}

/// Density `Γ(s, x0, t, ·)` of the SDE at the grid's stored times.
pub fn solve_sde_density(
    drift: &DriftSpec,
    spec: &StableSpec,
    x0: f64,
    start_time: f64,
    grid: &Grid1D,
    opts: &DuhamelOptions,
) -> Result<DuhamelSolution> {
    let kernel = check_problem(spec, drift, grid, x0)?;
    if drift.needs_step() {
        return Err(invalid("drift", "square-wave drift must be resolved to a step first"));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 || opts.block_steps == 0 || !(opts.time_step > 0.0) {
        return Err(invalid("options", "tol, max_iter, block_steps and time_step must be positive"));
    }
    let delta = opts.time_step;
    let end = *grid.times.last().expect("grid has times");
    let total = ((end - start_time) / delta).round() as usize;
    if total == 0 || ((end - start_time) - total as f64 * delta).abs() > 1e-9 {
        return Err(Error::GridMismatch(format!(
            "horizon {} is not a multiple of the time step {delta}",
            end - start_time
        )));
    }
    let node_time = |j: usize| start_time + j as f64 * delta;
    let mut stored = Vec::with_capacity(grid.times.len());
    for &t in &grid.times {
        let j = ((t - start_time) / delta).round();
        if j < 1.0 || (node_time(j as usize) - t).abs() > 1e-9 {
            return Err(Error::GridMismatch(format!("t = {t} is not a time node")));
        }
        stored.push(j as usize);
    }
    for b in drift.time_breakpoints(start_time, end) {
        let j = ((b - start_time) / delta).round();
        if (node_time(j as usize) - b).abs() > 1e-9 * delta.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "drift switches at t = {b}, between time nodes"
            )));
        }
    }
    let dx = grid.dx();
    let layer_target = (opts.initial_layer_cells * dx).powf(kernel.alpha());
    let layer = ((layer_target / delta).ceil() as usize).clamp(1, total);
    if stored[0] < layer {
        return Err(invalid(
            "times",
            format!(
                "first stored time must be at least {} after the start",
                layer as f64 * delta
            ),
        ));
    }
    let r0 = layer as f64 * delta;
    let xs = grid.nodes();
    // initial layer: one frozen (time-averaged) step from the point mass
    let avg = drift.time_average_nodes(start_time, start_time + r0);
    let mut gamma: Vec<f64> = xs
        .iter()
        .map(|&y| {
            avg.iter()
                .map(|&(u, w)| w * smoothing_weight(&kernel, r0, y - x0 - r0 * drift.eval1(u, x0), dx) / dx)
                .sum()
        })
        .collect();

    let n = grid.n_x;
    let conv = Convolver::new(n);
    let with_drift = !drift.is_zero();
    let space: Vec<f64> = xs.iter().map(|&x| drift.cell_average_space_factor(x, dx)).collect();
    let tau = |j: usize, side: f64| drift.time_factor_one_sided(node_time(j), side);

    let mut values = Vec::with_capacity(stored.len());
    let mut defects = Vec::with_capacity(stored.len());
    let mut push = |j: usize, g: &[f64], values: &mut Vec<Vec<f64>>| -> Result<()> {
        if stored.get(values.len()) == Some(&j) {
            let t = node_time(j);
            let defect = mass_defect(&kernel, grid, g, t - start_time, x0);
            check_mass(defect, t)?;
            defects.push(defect);
            values.push(g.to_vec());
        }
        Ok(())
    };
    push(layer, &gamma, &mut values)?;

    // certify the block length on the first block
    let mut steps = opts.block_steps.min(total - layer).max(1);
    let mut kernels;
    let mut first;
    loop {
        kernels = build_kernels(&kernel, &conv, dx, delta, steps, with_drift);
        let tp: Vec<f64> = (layer..=layer + steps).map(|j| tau(j, 1.0)).collect();
        let tm: Vec<f64> = (layer..=layer + steps).map(|j| tau(j, -1.0)).collect();
        let attempt = picard_block(&conv, &kernels, &gamma, &space, &tp, &tm, steps, opts, with_drift);
        let contracting = |c: &[f64]| {
            c.windows(2)
                .filter(|w| w[0] > 10.0 * opts.tol)
                .all(|w| w[1] <= opts.contraction_limit * w[0])
        };
        match attempt {
            Ok(out) if contracting(&out.changes) => {
                first = out;
                break;
            }
            Ok(_) | Err(Error::NonConvergence { .. }) if steps > 1 => {
                steps /= 2;
            }
            Ok(out) => {
                return Err(Error::NonConvergence {
                    iterations: out.changes.len(),
                    last_change: *out.changes.last().unwrap_or(&0.0),
                    tol: opts.tol,
                    changes: out.changes,
                })
            }
            Err(e) => return Err(e),
        }
    }
    let first_changes = first.changes.clone();
    let mut sweeps = vec![first.changes.len()];
    let mut j = layer;
    let mut block_out = std::mem::take(&mut first.values);
    loop {
        for (i, g) in block_out.iter().enumerate() {
            push(j + i + 1, g, &mut values)?;
        }
        j += block_out.len();
        gamma = block_out.pop().expect("block has nodes");
        if j >= total {
            break;
        }
        let len = steps.min(total - j);
        let tp: Vec<f64> = (j..=j + len).map(|k| tau(k, 1.0)).collect();
        let tm: Vec<f64> = (j..=j + len).map(|k| tau(k, -1.0)).collect();
        let out = picard_block(&conv, &kernels, &gamma, &space, &tp, &tm, len, opts, with_drift)?;
        sweeps.push(out.changes.len());
        block_out = out.values;
    }
    let contraction_ratios = first_changes
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    Ok(DuhamelSolution {
        density: GridDensity {
            grid: grid.clone(),
            values,
            mass_defect: defects,
        },
        diagnostics: PicardDiagnostics {
            block_length: steps as f64 * delta,
            block_steps: steps,
            blocks: sweeps.len(),
            sweeps,
            first_block_changes: first_changes,
            contraction_ratios,
            initial_layer: r0,
        },
    })
}

/// Cubic interpolation of grid data at fractional index `s` (zero
/// outside the grid).
fn interpolate(v: &[f64], s: f64) -> f64 {
    let j = s.floor();
    let f = s - j;
    let j = j as isize;
    let n = v.len() as isize;
    let at = |k: isize| if k >= 0 && k < n { v[k as usize] } else { 0.0 };
    let w = [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ];
    (0..4).map(|k| w[k] * at(j - 1 + k as isize)).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct ChapmanKolmogorovReport {
    pub defect: f64,
    /// Largest value of the direct solution, for scale.
    pub peak: f64,
    pub sub_points: Vec<f64>,
}

/// `sup_y |Γ(s,x0,t,y) - ∫ Γ(s,x0,r,z) Γ(r,z,t,y) dz|`.
///
/// The inner transitions are solved from `n_sub` start points on a grid
/// that is denser near `x0`; for other `z` the two neighbouring solutions
/// are translated to `z` and blended linearly, which is exact whenever
/// the drift is constant in space.
#[allow(clippy::too_many_arguments)]
pub fn chapman_kolmogorov_check(
    drift: &DriftSpec,
    spec: &StableSpec,
    x0: f64,
    s: f64,
    r: f64,
    t: f64,
    grid: &Grid1D,
    opts: &DuhamelOptions,
    n_sub: usize,
) -> Result<ChapmanKolmogorovReport> {
    if !(s < r && r < t) {
        return Err(invalid("s, r, t", "need s < r < t"));
    }
    if n_sub < 3 || n_sub.is_multiple_of(2) {
        return Err(invalid("n_sub", "need an odd number of at least three start points"));
    }
    let at = |times: Vec<f64>| Grid1D::new(grid.x_min, grid.x_max, grid.n_x, times);
    let outer = solve_sde_density(drift, spec, x0, s, &at(vec![r, t])?, opts)?;
    let mid = outer.density.slice(r)?.to_vec();
    let direct = outer.density.slice(t)?.to_vec();
    let half = (n_sub / 2) as f64;
    let radius = (8.0 * spec.scale(r - s)).min(0.5 * (grid.x_max - x0).min(x0 - grid.x_min));
    let sub: Vec<f64> = (0..n_sub)
        .map(|k| {
            let u = (k as f64 - half) / half;
            x0 + radius * u.signum() * u * u
        })
        .collect();
    let inner_grid = at(vec![t])?;
    let inner: Vec<Vec<f64>> = sub
        .iter()
        .map(|&z| Ok(solve_sde_density(drift, spec, z, r, &inner_grid, opts)?.density.values.remove(0)))
        .collect::<Result<_>>()?;
    let dx = grid.dx();
    let xs = grid.nodes();
    let n = grid.n_x;
    let peak_mid = mid.iter().cloned().fold(0.0, f64::max);
    // contributions of every z node, accumulated into the composed density
    let composed = par::map_indexed(n, |yi| {
        let mut acc = 0.0;
        for (zi, &z) in xs.iter().enumerate() {
            let w = mid[zi];
            if w.abs() <= 1e-14 * peak_mid {
                continue;
            }
            let weight = if zi == 0 || zi == n - 1 { 0.5 * dx } else { dx };
            let k = sub.partition_point(|&p| p <= z);
            let shifted = |idx: usize| interpolate(&inner[idx], yi as f64 - (z - sub[idx]) / dx);
            let g = if k == 0 {
                shifted(0)
            } else if k == sub.len() {
                shifted(sub.len() - 1)
            } else {
                let (a, b) = (sub[k - 1], sub[k]);
                let lam = (z - a) / (b - a);
                (1.0 - lam) * shifted(k - 1) + lam * shifted(k)
            };
            acc += weight * w * g;
        }
        acc
    });
    let defect = composed
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ChapmanKolmogorovReport {
        defect,
        peak: direct.iter().cloned().fold(0.0, f64::max),
        sub_points: sub,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{make_holder_drift, SpaceProfile, TimeProfile};

    #[test]
    fn grid_invariants() {
        assert!(Grid1D::new(-1.0, 1.0, 100, vec![1.0]).is_err());
        assert!(Grid1D::new(1.0, -1.0, 300, vec![1.0]).is_err());
        assert!(Grid1D::new(-1.0, 1.0, 300, vec![0.5, 0.5]).is_err());
        let g = Grid1D::centered(0.0, 10.0, 0.05, vec![1.0]).unwrap();
        assert_eq!(g.n_x, 401);
        assert!(g.check_truncation(1.5, 1.0, 0.0).is_ok());
        assert!(g.check_truncation(1.5, 1.1, 0.0).is_err());
    }

    #[test]
    fn deposit_preserves_low_moments() {
        let mut out = vec![0.0; 20];
        deposit(&mut out, 0.0, 0.5, 4.37, 2.0);
        let m: Vec<f64> = (0..4)
            .map(|p| out.iter().enumerate().map(|(i, v)| v * (i as f64 * 0.5).powi(p)).sum())
            .collect();
        assert!((m[0] - 2.0).abs() < 1e-14);
        assert!((m[1] - 2.0 * 4.37).abs() < 1e-12);
        assert!((m[2] - 2.0 * 4.37f64.powi(2)).abs() < 1e-11);
        assert!((m[3] - 2.0 * 4.37f64.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn binary_roundtrip() {
        let grid = Grid1D::centered(0.0, 5.0, 0.02, vec![0.5, 1.0]).unwrap();
        let values = vec![vec![0.25; grid.n_x], (0..grid.n_x).map(|i| i as f64).collect()];
        let gd = GridDensity {
            grid,
            values,
            mass_defect: vec![1e-5, -2e-6],
        };
        let mut buf = Vec::new();
        gd.write_binary(&mut buf).unwrap();
        assert_eq!(GridDensity::read_binary(&buf[..]).unwrap(), gd);
    }

    #[test]
    fn zero_drift_scheme_is_exact() {
        let spec = StableSpec::new(2.0, 1).unwrap();
        let kernel = Kernel1D::new(&spec).unwrap();
        let grid = Grid1D::centered(0.0, 8.0, 0.02, vec![0.5, 1.0]).unwrap();
        let cfg = SchemeConfig::new(1.0, 16, true, 0).unwrap();
        let gd = propagate_scheme_density(&DriftSpec::zero(1), &spec, 0.0, &cfg, &grid).unwrap();
        for (k, t) in grid.times.iter().enumerate() {
            for (i, y) in grid.nodes().iter().enumerate() {
                assert!((gd.values[k][i] - kernel.pdf(*t, *y)).abs() < 1e-10);
            }
            assert!(gd.mass_defect[k].abs() < 1e-9);
        }
    }

    #[test]
    fn constant_drift_duhamel_translates() {
        let spec = StableSpec::new(2.0, 1).unwrap();
        let kernel = Kernel1D::new(&spec).unwrap();
        let drift = make_holder_drift(0.5, 0.7, 1, SpaceProfile::Constant, TimeProfile::Constant).unwrap();
        let grid = Grid1D::centered(0.0, 8.0, 0.02, vec![0.25]).unwrap();
        let opts = DuhamelOptions {
            time_step: 1.0 / 256.0,
            ..Default::default()
        };
        let sol = solve_sde_density(&drift, &spec, 0.0, 0.0, &grid, &opts).unwrap();
        let err = grid
            .nodes()
            .iter()
            .zip(&sol.density.values[0])
            .map(|(y, g)| (g - kernel.pdf(0.25, y - 0.7 * 0.25)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }
}

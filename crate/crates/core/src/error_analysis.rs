//! Error functionals, log-log rate fits and Hölder quotients on tabulated
//! densities.

use crate::duhamel::GridDensity;
use crate::error::{invalid, Error, Result};
use crate::euler::Terminals;
use crate::proxy_kernel::ProxyKernel;
use crate::stats::least_squares;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityError {
    /// `sup_y |Γ_h - Γ| / p̄(t, y - x0)` over the window.
    pub weighted_sup: f64,
    pub sup: f64,
    pub l1: f64,
    /// Node attaining `weighted_sup`.
    pub argmax: f64,
}

/// Compares two densities at time `t`. The sup-norms run over nodes with
/// `|y - x0| <= window` (all nodes when `window` is `None`); the L¹ error
/// uses the whole grid.
pub fn weighted_density_error(
    reference: &GridDensity,
    approx: &GridDensity,
    pk: &ProxyKernel,
    t: f64,
    x0: f64,
    window: Option<f64>,
) -> Result<DensityError> {
    if !reference.grid.same_nodes(&approx.grid) {
        return Err(Error::GridMismatch(format!(
            "reference has {} nodes on [{}, {}], approximation {} on [{}, {}]",
            reference.grid.n_x,
            reference.grid.x_min,
            reference.grid.x_max,
            approx.grid.n_x,
            approx.grid.x_min,
            approx.grid.x_max
        )));
    }
    let a = reference.slice(t)?;
    let b = approx.slice(t)?;
    let grid = &reference.grid;
    let dx = grid.dx();
    let window = window.unwrap_or(f64::INFINITY);
    let mut out = DensityError {
        weighted_sup: 0.0,
        sup: 0.0,
        l1: 0.0,
        argmax: x0,
    };
    for (i, (u, v)) in a.iter().zip(b).enumerate() {
        let diff = (u - v).abs();
        let w = if i == 0 || i + 1 == grid.n_x { 0.5 } else { 1.0 };
        out.l1 += w * dx * diff;
        let y = grid.node(i);
        if (y - x0).abs() > window {
            continue;
        }
        out.sup = out.sup.max(diff);
        let weighted = diff / pk.eval_radial(t, y - x0);
        if weighted > out.weighted_sup {
            out.weighted_sup = weighted;
            out.argmax = y;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub half_width_95: f64,
    pub target: f64,
    pub h_values: Vec<f64>,
}

/// `max / min` of `error / h^exponent` over `(h, error)` pairs.
pub fn normalized_spread(pairs: &[(f64, f64)], exponent: f64) -> f64 {
    let q = pairs.iter().map(|(h, e)| e / h.powf(exponent));
    let (min, max) = q.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    max / min
}

/// Least-squares slope of `log error` against `log h`.
pub fn fit_rate(pairs: &[(f64, f64)], target: f64) -> Result<RateEstimate> {
    if pairs.len() < 4 {
        return Err(Error::Degenerate(format!(
            "need at least four (h, error) pairs, got {}",
            pairs.len()
        )));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Degenerate(format!("duplicate step h = {}", w[0].0)));
        }
    }
    for &(h, e) in &sorted {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Degenerate(format!("step h = {h} is not positive")));
        }
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Degenerate(format!("error {e} at h = {h} is not positive")));
        }
    }
    let xs: Vec<f64> = sorted.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.1.ln()).collect();
    let fit = least_squares(&xs, &ys)?;
    let dof = (xs.len() - 2) as f64;
    let quantile = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        residual_rms: fit.residual_rms,
        half_width_95: quantile * fit.slope_stderr,
        target,
        h_values: sorted.iter().map(|p| p.0).collect(),
    })
}

/// A test function with its declared Hölder exponent.
pub struct TestFunction<'a> {
    pub f: &'a (dyn Fn(f64) -> f64 + Sync),
    pub delta: f64,
}

impl TestFunction<'_> {
    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta", "Hölder exponent must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// `min(|y|, cap)^δ`.
pub fn capped_power_test_function(cap: f64, delta: f64) -> impl Fn(f64) -> f64 + Sync {
    move |y: f64| y.abs().min(cap).powf(delta)
}

fn trapezoid_against(f: &(dyn Fn(f64) -> f64 + Sync), density: &GridDensity, k: usize) -> f64 {
    let grid = &density.grid;
    let n = grid.n_x;
    let mut s = 0.0;
    for (i, v) in density.values[k].iter().enumerate() {
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        s += w * f(grid.node(i)) * v;
    }
    s * grid.dx()
}

/// `|∫ f (Γ_h - Γ)(t, y) dy|` by the trapezoid rule on the common grid.
pub fn weak_error_grid(
    test: &TestFunction<'_>,
    reference: &GridDensity,
    approx: &GridDensity,
    t: f64,
) -> Result<f64> {
    test.check()?;
    if !reference.grid.same_nodes(&approx.grid) {
        return Err(Error::GridMismatch("test-function error needs a common grid".into()));
    }
    let a = trapezoid_against(test.f, reference, reference.time_index(t)?);
    let b = trapezoid_against(test.f, approx, approx.time_index(t)?);
    Ok((a - b).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloWeakError {
    pub error: f64,
    /// 95% half-width of the sample mean.
    pub half_width_95: f64,
}

/// `|mean f(X_T^h) - ∫ f Γ(t, ·)|` from simulated terminal values (first
/// coordinate).
pub fn weak_error_monte_carlo(
    test: &TestFunction<'_>,
    reference: &GridDensity,
    terminals: &Terminals,
    t: f64,
) -> Result<MonteCarloWeakError> {
    test.check()?;
    if terminals.len() < 2 {
        return Err(invalid("terminals", "need at least two samples"));
    }
    let exact = trapezoid_against(test.f, reference, reference.time_index(t)?);
    let vals: Vec<f64> = (0..terminals.len())
        .map(|i| (test.f)(terminals.row(i)[0]))
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloWeakError {
        error: (mean - exact).abs(),
        half_width_95: 1.96 * (var / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotientKind {
    ForwardTime,
    ForwardSpace,
    /// Space quotient for a scheme density with step `h`.
    ForwardSpaceScheme { steps: usize },
}

impl QuotientKind {
    pub fn label(&self) -> &'static str {
        match self {
            QuotientKind::ForwardTime => "forward-time",
            QuotientKind::ForwardSpace => "forward-space",
            QuotientKind::ForwardSpaceScheme { .. } => "forward-space-scheme",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub kind: QuotientKind,
    pub exponent: f64,
    /// Quotient at the finest scale.
    pub max_quotient: f64,
    /// `(smallest sampled gap, max quotient)`, coarse to fine.
    pub trace: Vec<(f64, f64)>,
    pub pairs: usize,
}

impl RegularityReport {
    /// `(max - min) / min` over the trace.
    pub fn variation(&self) -> f64 {
        let q: Vec<f64> = self.trace.iter().map(|p| p.1).collect();
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / min
    }

    /// Finest over coarsest quotient.
    pub fn growth(&self) -> f64 {
        self.trace.last().unwrap().1 / self.trace[0].1
    }

    /// Quotient increases at every refinement and by more than
    /// `threshold` overall.
    pub fn diverges(&self, threshold: f64) -> bool {
        self.trace.windows(2).all(|w| w[1].1 > w[0].1) && self.growth() > 1.0 + threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientOptions {
    /// Sub-lattice strides, coarse to fine. Stride `k` keeps every `k`-th
    /// node (space quotients) or stored time (time quotient).
    pub strides: Vec<usize>,
    /// Admissible gaps relative to `(t-s)` or `(t-s)^{1/α}`.
    pub min_gap_ratio: f64,
    pub max_gap_ratio: f64,
    /// Nodes with `|y - x0| > window · (t-s)^{1/α}` are skipped.
    pub window: f64,
    /// Stored times below `s + min_time` are skipped.
    pub min_time: f64,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        Self {
            strides: vec![4, 2, 1],
            min_gap_ratio: 1e-2,
            max_gap_ratio: 1.0,
            window: 10.0,
            min_time: 0.0,
        }
    }
}

/// Largest sampled Hölder quotient of `Γ(s, x0, ·, ·)` at each stride.
pub fn holder_quotient(
    density: &GridDensity,
    kind: QuotientKind,
    exponent: f64,
    pk: &ProxyKernel,
    x0: f64,
    s: f64,
    opts: &QuotientOptions,
) -> Result<RegularityReport> {
    if !(exponent > 0.0) {
        return Err(invalid("exponent", "must be positive"));
    }
    if opts.strides.is_empty() || opts.strides.contains(&0) {
        return Err(invalid("strides", "need at least one positive stride"));
    }
    if !(opts.min_gap_ratio > 0.0 && opts.min_gap_ratio <= opts.max_gap_ratio) {
        return Err(invalid("gap ratios", "need 0 < min <= max"));
    }
    let alpha = pk.spec().alpha();
    let mut trace = Vec::with_capacity(opts.strides.len());
    let mut pairs = 0;
    for &stride in &opts.strides {
        let (scale, q, n) = match kind {
            QuotientKind::ForwardTime => time_quotient(density, exponent, pk, x0, s, stride, opts),
            QuotientKind::ForwardSpace => space_quotient(density, exponent, pk, x0, s, stride, 0.0, opts),
            QuotientKind::ForwardSpaceScheme { steps } => {
                let horizon = *density.grid.times.last().unwrap();
                let h = horizon / steps as f64;
                space_quotient(density, exponent, pk, x0, s, stride, h.powf(1.0 / alpha), opts)
            }
        };
        if n == 0 {
            return Err(Error::NoAdmissiblePairs(format!(
                "{} quotient at stride {stride}",
                kind.label()
            )));
        }
        pairs += n;
        trace.push((scale, q));
    }
    Ok(RegularityReport {
        kind,
        exponent,
        max_quotient: trace.last().unwrap().1,
        trace,
        pairs,
    })
}

fn time_quotient(
    density: &GridDensity,
    exponent: f64,
    pk: &ProxyKernel,
    x0: f64,
    s: f64,
    stride: usize,
    opts: &QuotientOptions,
) -> (f64, f64, usize) {
    let alpha = pk.spec().alpha();
    let times = &density.grid.times;
    let last = times.len() - 1;
    // sub-lattice anchored at the final time
    let idx: Vec<usize> = (0..=last)
        .rev()
        .step_by(stride)
        .filter(|&k| times[k] - s >= opts.min_time && times[k] > s)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let mut smallest = f64::INFINITY;
    let mut best = 0.0f64;
    let mut count = 0;
    for (a, &i) in idx.iter().enumerate() {
        let t = times[i];
        let lag = t - s;
        for &j in &idx[a + 1..] {
            let t2 = times[j];
            let gap = t2 - t;
            let ratio = gap / lag;
            if ratio > opts.max_gap_ratio {
                break;
            }
            if ratio < opts.min_gap_ratio {
                continue;
            }
            smallest = smallest.min(gap);
            let reach = opts.window * (t2 - s).powf(1.0 / alpha);
            let norm = ratio.powf(-exponent);
            for (k, (u, v)) in density.values[i].iter().zip(&density.values[j]).enumerate() {
                let y = density.grid.node(k);
                if (y - x0).abs() > reach {
                    continue;
                }
                let q = (u - v).abs() * norm / pk.eval_radial(t2 - s, y - x0);
                best = best.max(q);
                count += 1;
            }
        }
    }
    (smallest, best, count)
}

#[allow(clippy::too_many_arguments)]
fn space_quotient(
    density: &GridDensity,
    exponent: f64,
    pk: &ProxyKernel,
    x0: f64,
    s: f64,
    stride: usize,
    offset: f64,
    opts: &QuotientOptions,
) -> (f64, f64, usize) {
    let alpha = pk.spec().alpha();
    let grid = &density.grid;
    let dx = grid.dx();
    let step = stride as f64 * dx;
    // sub-lattice anchored at the node closest to x0
    let anchor = ((x0 - grid.x_min) / dx).round() as isize;
    let first = anchor.rem_euclid(stride as isize) as usize;
    let mut best = 0.0f64;
    let mut count = 0;
    for (k, &t) in grid.times.iter().enumerate() {
        let lag = t - s;
        if lag <= 0.0 || lag < opts.min_time {
            continue;
        }
        let scale = lag.powf(1.0 / alpha);
        let m_min = ((opts.min_gap_ratio * scale / step).ceil() as usize).max(1);
        let m_max = (opts.max_gap_ratio * scale / step * (1.0 + 1e-12)).floor() as usize;
        if m_max < m_min {
            continue;
        }
        let vals = &density.values[k];
        let reach = opts.window * scale;
        let nodes: Vec<usize> = (first..grid.n_x).step_by(stride).collect();
        for (a, &i) in nodes.iter().enumerate() {
            let y = grid.node(i);
            if (y - x0).abs() > reach {
                continue;
            }
            for m in m_min..=m_max {
                let Some(&j) = nodes.get(a + m) else { break };
                let w = grid.node(j);
                let gap = (w - y).abs();
                let norm = ((gap + offset) / scale).powf(exponent);
                let weight = pk.eval_radial(lag, w - x0).min(pk.eval_radial(lag, y - x0));
                let q = (vals[i] - vals[j]).abs() / (norm * weight);
                best = best.max(q);
                count += 1;
            }
        }
    }
    (step, best, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duhamel::Grid1D;
    use crate::stable_noise::StableSpec;

    #[test]
    fn exact_power_law_is_recovered() {
        let pairs: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|n: &f64| (1.0 / n, 3.0 * (1.0 / n).powf(0.6)))
            .collect();
        let r = fit_rate(&pairs, 0.6).unwrap();
        assert!((r.slope - 0.6).abs() < 1e-12);
        assert!(r.half_width_95 < 1e-10);
        assert!((normalized_spread(&pairs, 0.6) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        let ok = [(0.5, 1.0), (0.25, 0.5), (0.125, 0.25), (0.0625, 0.125)];
        assert!(fit_rate(&ok[..3], 1.0).is_err());
        let mut dup = ok;
        dup[1].0 = 0.5;
        assert!(matches!(fit_rate(&dup, 1.0), Err(Error::Degenerate(_))));
        let mut neg = ok;
        neg[2].1 = 0.0;
        assert!(matches!(fit_rate(&neg, 1.0), Err(Error::Degenerate(_))));
    }

    fn gaussian_density(times: Vec<f64>) -> GridDensity {
        let grid = Grid1D::centered(0.0, 10.0, 0.02, times).unwrap();
        let values = grid
            .times
            .iter()
            .map(|&t| {
                grid.nodes()
                    .iter()
                    .map(|x| (-0.5 * x * x / t).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
                    .collect()
            })
            .collect();
        let n = grid.times.len();
        GridDensity {
            grid,
            values,
            mass_defect: vec![0.0; n],
        }
    }

    #[test]
    fn identical_densities_have_zero_error() {
        let g = gaussian_density(vec![1.0]);
        let pk = ProxyKernel::new(StableSpec::new(2.0, 1).unwrap());
        let e = weighted_density_error(&g, &g, &pk, 1.0, 0.0, None).unwrap();
        assert_eq!(e.weighted_sup, 0.0);
        assert_eq!(e.l1, 0.0);
        let f = capped_power_test_function(2.0, 0.5);
        let test = TestFunction { f: &f, delta: 0.5 };
        assert_eq!(weak_error_grid(&test, &g, &g, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = gaussian_density(vec![1.0]);
        let mut b = a.clone();
        b.grid.x_max += 1.0;
        let pk = ProxyKernel::new(StableSpec::new(2.0, 1).unwrap());
        assert!(matches!(
            weighted_density_error(&a, &b, &pk, 1.0, 0.0, None),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn gaussian_quotients_behave() {
        let times: Vec<f64> = (1..=32).map(|k| k as f64 / 32.0).collect();
        let g = gaussian_density(times);
        let pk = ProxyKernel::new(StableSpec::new(2.0, 1).unwrap());
        let opts = QuotientOptions::default();
        let time = holder_quotient(&g, QuotientKind::ForwardTime, 1.0, &pk, 0.0, 0.0, &opts).unwrap();
        assert!(time.max_quotient.is_finite() && time.variation() < 0.25, "{time:?}");
        let space = holder_quotient(&g, QuotientKind::ForwardSpace, 0.9, &pk, 0.0, 0.0, &opts).unwrap();
        assert!(space.variation() < 0.25, "{space:?}");
        let bad = holder_quotient(&g, QuotientKind::ForwardSpace, 1.3, &pk, 0.0, 0.0, &opts).unwrap();
        assert!(bad.diverges(0.25), "{bad:?}");
    }
}

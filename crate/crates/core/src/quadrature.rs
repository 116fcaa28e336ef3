//! Gauss–Legendre rules and a small adaptive integrator.
//!
//! Everything here is deterministic: the adaptive routine bisects panels
//! in a fixed order, so repeated calls return bit-identical results.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 16- and 24-point rules.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl24() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// Value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive bisection on `[a, b]`. Each panel carries the
/// difference between its 16-point value and the sum over its halves; the
/// worst panel is split until the summed difference drops below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let rule = gl16();
    let panel = |lo: f64, hi: f64, coarse: f64| {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &f);
        let right = rule.integrate(mid, hi, &f);
        Panel {
            lo,
            hi,
            left,
            right,
            error: (left + right - coarse).abs(),
        }
    };
    let mut heap = BinaryHeap::new();
    heap.push(panel(a, b, rule.integrate(a, b, &f)));
    loop {
        let value: f64 = heap.iter().map(|p| p.left + p.right).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        let tol = abs_tol.max(rel_tol * value.abs());
        let roundoff = 64.0 * f64::EPSILON * heap.iter().map(|p| (p.left + p.right).abs()).sum::<f64>();
        if error <= tol || error <= roundoff {
            return Ok(Estimate { value, error });
        }
        let worst = heap.peek().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if heap.len() >= MAX_PANELS || mid <= worst.lo.min(worst.hi) || mid >= worst.lo.max(worst.hi) {
            return Err(Error::QuadratureFailure {
                estimate: error,
                tolerance: tol,
                context: format!("adaptive quadrature on [{a}, {b}]"),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        heap.push(panel(worst.lo, mid, worst.left));
        heap.push(panel(mid, worst.hi, worst.right));
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    // ties broken by position so the refinement order is deterministic
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .total_cmp(&other.error)
            .then(other.lo.total_cmp(&self.lo))
    }
}

/// Integral over `[a, ∞)` through `z = a + s / (1 - s)`.
pub fn semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - s;
        let z = a + s / one_minus;
        let v = f(z) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Integral over the whole line, split at the supplied breakpoints.
pub fn whole_line<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    let mut pts: Vec<f64> = breakpoints.to_vec();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    if pts.is_empty() {
        pts.push(0.0);
    }
    let first = pts[0];
    let last = *pts.last().unwrap();
    let left = semi_infinite(|z| f(2.0 * first - z), first, abs_tol, rel_tol)?;
    let right = semi_infinite(&f, last, abs_tol, rel_tol)?;
    let mut value = left.value + right.value;
    let mut error = left.error + right.error;
    for w in pts.windows(2) {
        let e = adaptive(&f, w[0], w[1], abs_tol, rel_tol)?;
        value += e.value;
        error += e.error;
    }
    Ok(Estimate { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 16, 24] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
            assert!((s - 2.0).abs() < 1e-14, "n = {n}");
            let deg = 2 * n - 1;
            let exact = 1.0 / (deg as f64 + 1.0);
            let got = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let e = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 1e-12).unwrap();
        assert!((e.value - 2.0).abs() < 1e-8, "{e:?}");
    }

    #[test]
    fn whole_line_gaussian() {
        let e = whole_line(
            |x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            &[0.0],
            1e-13,
            1e-13,
        )
        .unwrap();
        assert!((e.value - 1.0).abs() < 1e-11);
    }
}

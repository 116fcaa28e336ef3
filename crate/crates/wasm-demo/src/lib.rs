//! wasm-bindgen exports for the static demo page in `www/`.
//!
//! Every function returns a flat `Float64Array`; the layout is given in
//! each doc comment. Errors surface as JS exceptions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use stable_euler::drift::{make_holder_drift, SpaceProfile, TimeProfile};
use stable_euler::duhamel::{propagate_scheme_density, Grid1D};
use stable_euler::euler::SchemeConfig;
use stable_euler::kernel1d::Kernel1D;
use stable_euler::proxy_kernel::ProxyKernel;
use stable_euler::rng::{substream, StreamKind};
use stable_euler::stable_noise::{sample_isotropic_increment, StableSpec};
use wasm_bindgen::prelude::*;

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Stable density against its proxy bound on `[0, x_max]`.
///
/// Layout: `n` rows of `[x, p(t, x), p̄(t, x)]`.
#[wasm_bindgen]
pub fn kernel_vs_proxy(alpha: f64, t: f64, x_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    if n < 2 || !(x_max > 0.0) || !(t > 0.0) {
        return Err(JsError::new("need n >= 2, x_max > 0 and t > 0"));
    }
    let spec = StableSpec::new(alpha, 1).map_err(js)?;
    let kernel = Kernel1D::new(&spec).map_err(js)?;
    let proxy = ProxyKernel::new(spec);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let x = x_max * i as f64 / (n - 1) as f64;
        out.extend([x, kernel.pdf(t, x), proxy.eval(t, &[x])]);
    }
    Ok(out)
}

/// Histogram of `samples` unit-time increments on `[-range, range]`.
///
/// Layout: `bins` rows of `[center, empirical density, exact bin average]`.
#[wasm_bindgen]
pub fn sampler_histogram(alpha: f64, seed: u64, samples: usize, bins: usize, range: f64) -> Result<Vec<f64>, JsError> {
    if samples == 0 || bins == 0 || !(range > 0.0) {
        return Err(JsError::new("need samples > 0, bins > 0 and range > 0"));
    }
    let spec = StableSpec::new(alpha, 1).map_err(js)?;
    let kernel = Kernel1D::new(&spec).map_err(js)?;
    let mut rng = substream(seed, StreamKind::Aux, 0);
    let width = 2.0 * range / bins as f64;
    let mut counts = vec![0usize; bins];
    for _ in 0..samples {
        let x = sample_isotropic_increment(&spec, 1.0, &mut rng).map_err(js)?[0];
        let k = ((x + range) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    let mut out = Vec::with_capacity(3 * bins);
    for (k, &c) in counts.iter().enumerate() {
        let lo = -range + k as f64 * width;
        // 8-point midpoint average of the density over the bin
        let exact = (0..8).map(|j| kernel.pdf(1.0, lo + (j as f64 + 0.5) * width / 8.0)).sum::<f64>() / 8.0;
        out.extend([lo + 0.5 * width, c as f64 / (samples as f64 * width), exact]);
    }
    Ok(out)
}

/// Time-1 density of the Euler scheme with `n` steps for the capped-power
/// drift `sign(x) min(|x|, 1)^β`, optionally modulated by a square wave
/// flipping mid-step.
///
/// Layout: rows of `[x, randomized, left point, driftless]`.
#[wasm_bindgen]
pub fn scheme_density(
    alpha: f64,
    beta: f64,
    amplitude: f64,
    steps: usize,
    square_wave: bool,
    dx: f64,
) -> Result<Vec<f64>, JsError> {
    let spec = StableSpec::new(alpha, 1).map_err(js)?;
    let time = if square_wave {
        TimeProfile::SquareWave {
            period_steps: 2.0,
            phase: 0.25,
            period: None,
        }
    } else {
        TimeProfile::Constant
    };
    let drift = make_holder_drift(beta, amplitude, 1, SpaceProfile::CappedPower, time).map_err(js)?;
    let grid = Grid1D::centered(0.0, 20.0, dx, vec![1.0]).map_err(js)?;
    let density = |randomized: bool| -> Result<Vec<f64>, JsError> {
        let cfg = SchemeConfig::new(1.0, steps, randomized, 0).map_err(js)?;
        let mut d = propagate_scheme_density(&drift, &spec, 0.0, &cfg, &grid).map_err(js)?;
        Ok(d.values.remove(0))
    };
    let randomized = density(true)?;
    let left = density(false)?;
    let kernel = Kernel1D::new(&spec).map_err(js)?;
    let window = 6.0;
    let mut out = Vec::new();
    for (i, x) in grid.nodes().into_iter().enumerate() {
        if x.abs() <= window {
            out.extend([x, randomized[i], left[i], kernel.pdf(1.0, x)]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let k = kernel_vs_proxy(1.5, 1.0, 5.0, 11).unwrap();
        assert_eq!(k.len(), 33);
        assert!(k.chunks(3).all(|r| r[1] > 0.0 && r[2] > 0.0));
        let h = sampler_histogram(1.5, 3, 20_000, 40, 5.0).unwrap();
        assert_eq!(h.len(), 120);
        let mass: f64 = h.chunks(3).map(|r| r[1] * 0.25).sum();
        assert!(mass > 0.8 && mass <= 1.0);
        let s = scheme_density(1.5, 0.5, 1.0, 8, true, 0.05).unwrap();
        assert_eq!(s.len() % 4, 0);
        assert!(s.chunks(4).all(|r| r[1].is_finite() && r[2].is_finite()));
    }
}

//! Config-driven experiment pipelines and their artifacts.
//!
//! [`execute`] runs a pipeline and returns everything it produced;
//! [`write_outcome`] puts it on disk as `results.csv`, `plot.svg`,
//! `manifest.toml` plus optional density and terminal files.

mod config;
pub mod plot;

pub use config::{
    CheckSection, DriftSection, ExperimentConfig, ExperimentKind, Format, ModelSection, OutputSection,
    ReferenceSection, SchemeSection,
};

use crate::drift::DriftSpec;
use crate::duhamel::{
    propagate_scheme_density, solve_sde_density, DuhamelOptions, DuhamelSolution, Grid1D, GridDensity,
};
use crate::error::{Error, Result};
use crate::error_analysis::{
    capped_power_test_function, fit_rate, holder_quotient, normalized_spread, weak_error_grid, weak_error_monte_carlo,
    weighted_density_error, QuotientKind, QuotientOptions, RateEstimate, TestFunction,
};
use crate::euler::{batch_terminals, SchemeConfig, Terminals};
use crate::kernel1d::Kernel1D;
use crate::par;
use crate::proxy_kernel::ProxyKernel;
use crate::quadrature::gl16;
use crate::rng::{substream, StreamKind};
use crate::stable_noise::{density, sample_isotropic_increment_into, StableSpec};
use crate::stats::empirical_cf;
use plot::{guide_line, Axis, Plot, Series};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "STABLE_EULER_OUT";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `<= 0.01`.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!("<= {limit}"),
            passed: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!(">= {limit}"),
            passed: value >= limit,
        }
    }

    fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            rule: format!("in [{lo}, {hi}]"),
            passed: value >= lo && value <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardSummary {
    pub block_length: f64,
    pub block_steps: usize,
    pub blocks: usize,
    pub max_sweeps: usize,
    pub contraction_ratios: Vec<f64>,
    pub initial_layer: f64,
    pub mass_defect: f64,
}

impl PicardSummary {
    fn of(sol: &DuhamelSolution) -> Self {
        let d = &sol.diagnostics;
        Self {
            block_length: d.block_length,
            block_steps: d.block_steps,
            blocks: d.blocks,
            max_sweeps: d.sweeps.iter().copied().max().unwrap_or(0),
            contraction_ratios: d.contraction_ratios.clone(),
            initial_layer: d.initial_layer,
            mass_defect: sol.density.mass_defect.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub library_version: String,
    pub seed: u64,
    pub passed: bool,
    pub wall_time_seconds: f64,
    pub created_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSummary>,
    pub checks: Vec<Check>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: Manifest,
    pub results_csv: String,
    pub plot_svg: String,
    /// Extra files: `(file name, contents)`.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

/// Output directory: the environment override, then `output_dir` from
/// the config, then `runs/<config stem>`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, config_path: Option<&Path>) -> PathBuf {
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    if let Some(dir) = &cfg.output_dir {
        return dir.clone();
    }
    let stem = config_path
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.kind.label().to_string());
    PathBuf::from("runs").join(stem)
}

pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), &outcome.results_csv)?;
    std::fs::write(dir.join("plot.svg"), &outcome.plot_svg)?;
    std::fs::write(dir.join("manifest.toml"), outcome.manifest.to_toml())?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Runs the configured pipeline.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = match cfg.kind {
        ExperimentKind::SamplerCheck => sampler_check(cfg)?,
        ExperimentKind::KernelCheck => kernel_check(cfg)?,
        ExperimentKind::Convergence => convergence(cfg)?,
        ExperimentKind::Regularity => regularity(cfg)?,
        ExperimentKind::RandomizationAblation => ablation(cfg)?,
    };
    let m = &mut out.manifest;
    m.passed = m.checks.iter().all(|c| c.passed);
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    m.created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(out)
}

fn manifest(cfg: &ExperimentConfig) -> Manifest {
    Manifest {
        kind: cfg.kind.label().into(),
        library_version: VERSION.into(),
        seed: cfg.seed,
        passed: false,
        wall_time_seconds: 0.0,
        created_unix: 0,
        degenerate: None,
        metrics: BTreeMap::new(),
        picard: None,
        checks: Vec::new(),
        config: cfg.clone(),
    }
}

fn duhamel_options(cfg: &ExperimentConfig) -> DuhamelOptions {
    let r = &cfg.reference;
    DuhamelOptions {
        tol: r.tol,
        max_iter: r.max_iter,
        time_step: r.time_step,
        block_steps: r.block_steps,
        ..DuhamelOptions::default()
    }
}

fn grid_at(cfg: &ExperimentConfig, times: Vec<f64>) -> Result<Grid1D> {
    let grid = Grid1D::centered(cfg.model.x0, cfg.half_width(), cfg.reference.dx, times)?;
    grid.check_truncation(cfg.model.alpha, cfg.model.horizon, cfg.model.x0)?;
    Ok(grid)
}

fn density_artifacts(cfg: &ExperimentConfig, name: &str, density: &GridDensity, out: &mut Vec<(String, Vec<u8>)>) -> Result<()> {
    if cfg.output.density.binary() {
        let mut buf = Vec::new();
        density.write_binary(&mut buf)?;
        out.push((format!("{name}.bin"), buf));
    }
    if cfg.output.density.csv() {
        let mut buf = Vec::new();
        density.write_csv(&mut buf)?;
        out.push((format!("{name}.csv"), buf));
    }
    Ok(())
}

fn terminal_artifacts(cfg: &ExperimentConfig, name: &str, t: &Terminals, out: &mut Vec<(String, Vec<u8>)>) -> Result<()> {
    if cfg.output.terminals.binary() {
        let mut buf = Vec::new();
        t.write_binary(&mut buf)?;
        out.push((format!("{name}.bin"), buf));
    }
    if cfg.output.terminals.csv() {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        out.push((format!("{name}.csv"), buf));
    }
    Ok(())
}

fn fit_metrics(prefix: &str, fit: &RateEstimate, metrics: &mut BTreeMap<String, f64>) {
    metrics.insert(format!("{prefix}slope"), fit.slope);
    metrics.insert(format!("{prefix}intercept"), fit.intercept);
    metrics.insert(format!("{prefix}half_width_95"), fit.half_width_95);
    metrics.insert(format!("{prefix}residual_rms"), fit.residual_rms);
}

/// At most one step up the ladder may increase the error, by no more
/// than `slack`.
fn monotone_refinement(errors: &[f64], slack: f64) -> bool {
    let ups: Vec<f64> = errors.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] - w[0]).collect();
    ups.is_empty() || (ups.len() == 1 && ups[0] <= slack)
}

// ---------------------------------------------------------------------------

const SAMPLE_CHUNK: usize = 4096;

fn draw_increments(spec: &StableSpec, n: usize, seed: u64) -> Vec<f64> {
    let d = spec.dim();
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    par::map_indexed(chunks, |c| {
        let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
        let mut rng = substream(seed, StreamKind::Aux, c as u64);
        let mut buf = vec![0.0; len * d];
        for row in buf.chunks_mut(d) {
            sample_isotropic_increment_into(spec, 1.0, &mut rng, row);
        }
        buf
    })
    .concat()
}

/// `λ` grid: 9 points with `|λ| <= 2`, rotated away from the axes when
/// `d > 1`.
fn lambda_grid(dim: usize) -> Vec<Vec<f64>> {
    (0..9)
        .map(|k| {
            let r = -2.0 + 0.5 * k as f64;
            let theta = std::f64::consts::PI * k as f64 / 9.0;
            let mut l = vec![0.0; dim];
            if dim == 1 {
                l[0] = r;
            } else {
                l[0] = r * theta.cos();
                l[1] = r * theta.sin();
            }
            l
        })
        .collect()
}

fn sampler_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let d = spec.dim();
    let n = cfg.scheme.paths;
    let draws = draw_increments(&spec, n, cfg.seed);
    let mut m = manifest(cfg);
    let mut csv = String::new();
    let cols: Vec<String> = (1..=d).map(|i| format!("lambda_{i}")).collect();
    let _ = writeln!(csv, "{},ecf_re,ecf_im,exact,abs_error", cols.join(","));
    let mut worst = 0.0f64;
    let mut cf_points = Vec::new();
    for (k, lambda) in lambda_grid(d).iter().enumerate() {
        let proj: Vec<f64> = draws
            .chunks(d)
            .map(|row| row.iter().zip(lambda).map(|(z, l)| z * l).sum())
            .collect();
        let (re, im) = empirical_cf(&proj, 1.0);
        let norm = lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
        let exact = (-spec.char_exponent(norm)).exp();
        let err = ((re - exact).powi(2) + im * im).sqrt();
        worst = worst.max(err);
        cf_points.push((k as f64, err));
        let lam: Vec<String> = lambda.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(csv, "{},{re},{im},{exact},{err}", lam.join(","));
    }
    m.metrics.insert("cf_max_error".into(), worst);
    m.checks.push(Check::at_most("characteristic_function", worst, cfg.checks.cf_tol));

    let mut artifacts = Vec::new();
    let mut series = vec![Series::new("|ECF - exp(-ψ)|", cf_points)];
    if d == 1 {
        let c = &cfg.checks;
        let kernel = Kernel1D::new(&spec)?;
        let width = 2.0 * c.histogram_range / c.histogram_bins as f64;
        let mut counts = vec![0usize; c.histogram_bins];
        for &z in &draws {
            let b = ((z + c.histogram_range) / width).floor();
            if b >= 0.0 && (b as usize) < c.histogram_bins {
                counts[b as usize] += 1;
            }
        }
        let mut hist = String::from("bin_center,empirical,density,abs_error\n");
        let mut sup = 0.0f64;
        let mut pts = Vec::new();
        for (b, &count) in counts.iter().enumerate() {
            let lo = -c.histogram_range + b as f64 * width;
            let exact = gl16().integrate(lo, lo + width, |x| kernel.pdf(1.0, x)) / width;
            let emp = count as f64 / (n as f64 * width);
            let err = (emp - exact).abs();
            sup = sup.max(err);
            let centre = lo + 0.5 * width;
            pts.push((centre, emp));
            let _ = writeln!(hist, "{centre},{emp},{exact},{err}");
        }
        artifacts.push(("histogram.csv".to_string(), hist.into_bytes()));
        m.metrics.insert("histogram_sup_error".into(), sup);
        m.checks.push(Check::at_most("histogram", sup, c.histogram_tol));
        series = vec![Series::new("histogram", pts)];
    }
    let plot = Plot {
        title: format!("sampler check, alpha = {}, d = {d}, N = {n}", spec.alpha()),
        x_label: if d == 1 { "x".into() } else { "lambda index".into() },
        y_label: if d == 1 { "density".into() } else { "CF error".into() },
        x_axis: Axis::Linear,
        y_axis: Axis::Linear,
        series,
    };
    Ok(Outcome {
        manifest: m,
        results_csv: csv,
        plot_svg: plot.render(),
        artifacts,
    })
}

fn kernel_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let c = &cfg.checks;
    let pk = ProxyKernel::new(spec);
    let mut m = manifest(cfg);
    let mut csv = String::from("check,value,reference,abs_error\n");
    let alpha = spec.alpha();
    let origin = vec![0.0; spec.dim()];

    if spec.dim() == 1 {
        let p0 = density(&spec, 1.0, &origin)?;
        let exact = if spec.is_gaussian() {
            1.0 / (2.0 * std::f64::consts::PI).sqrt()
        } else {
            libm::tgamma(1.0 + 1.0 / alpha) / std::f64::consts::PI
        };
        let _ = writeln!(csv, "density_at_origin,{p0},{exact},{}", (p0 - exact).abs());
        m.checks.push(Check::at_most("density_at_origin", (p0 - exact).abs(), c.density_tol));
    }

    let times = [0.25, 1.0, 4.0];
    let coarse = pk.check_sandwich(&times, 10.0, c.sandwich_points)?;
    let fine = pk.check_sandwich(&times, 10.0, 2 * c.sandwich_points - 1)?;
    let _ = writeln!(csv, "sandwich_constant,{},{},", coarse.constant, fine.constant);
    let _ = writeln!(csv, "sandwich_min_ratio,{},{},", coarse.min_ratio, fine.min_ratio);
    let _ = writeln!(csv, "sandwich_max_ratio,{},{},", coarse.max_ratio, fine.max_ratio);
    m.metrics.insert("sandwich_constant".into(), fine.constant);
    m.checks.push(Check::at_most("sandwich_constant", fine.constant, c.sandwich_max));
    let drift = (fine.constant / coarse.constant - 1.0).abs();
    m.checks.push(Check::at_most("sandwich_refinement", drift, c.refinement_tol));

    let mut moment_points = Vec::new();
    if spec.dim() == 1 {
        let half = 0.5 * cfg.model.horizon;
        let conv = pk.check_convolution(half, half, c.convolution_points)?;
        let conv_fine = pk.check_convolution(half, half, 2 * c.convolution_points - 1)?;
        let _ = writeln!(csv, "convolution_constant,{},{},", conv.constant, conv_fine.constant);
        m.metrics.insert("convolution_constant".into(), conv_fine.constant);
        m.checks.push(Check {
            name: "convolution_finite".into(),
            value: conv_fine.constant,
            rule: "finite".into(),
            passed: conv_fine.constant.is_finite(),
        });
        let rel = (conv_fine.constant / conv.constant - 1.0).abs();
        m.checks.push(Check::at_most("convolution_refinement", rel, 0.01));
        if spec.is_gaussian() {
            m.checks.push(Check::at_most("convolution_exact", (conv_fine.constant - 1.0).abs(), 1e-8));
        }
    }
    let v_list = [0.5, 1.0, 2.0, 4.0];
    for delta in [0.5, 1.0] {
        let r = pk.check_moments(delta, &v_list)?;
        let target = if spec.is_gaussian() { delta / 2.0 } else { delta / alpha };
        let _ = writeln!(csv, "moment_slope_{delta},{},{target},{}", r.slope, (r.slope - target).abs());
        m.metrics.insert(format!("moment_slope_{delta}"), r.slope);
        m.checks.push(Check::at_most(&format!("moment_slope_{delta}"), (r.slope - target).abs(), c.moment_tol));
        moment_points.push(Series::new(
            format!("delta = {delta}"),
            r.times.iter().copied().zip(r.moments.iter().copied()).collect(),
        ));
    }
    let plot = Plot {
        title: format!("proxy moments, alpha = {alpha}"),
        x_label: "v".into(),
        y_label: "moment".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: moment_points,
    };
    Ok(Outcome {
        manifest: m,
        results_csv: csv,
        plot_svg: plot.render(),
        artifacts: Vec::new(),
    })
}

struct LadderPoint {
    n: usize,
    h: f64,
    weighted: f64,
    sup: f64,
    l1: f64,
    argmax: f64,
    test_function: f64,
    monte_carlo: Option<(f64, f64)>,
}

fn convergence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let drift = cfg.drift_spec()?;
    let pk = ProxyKernel::new(spec);
    let (x0, horizon) = (cfg.model.x0, cfg.model.horizon);
    let target = cfg.target_rate();
    let window = Some(cfg.window());
    let grid = grid_at(cfg, vec![horizon])?;
    let reference = solve_sde_density(&drift, &spec, x0, 0.0, &grid, &duhamel_options(cfg))?;
    let mut m = manifest(cfg);
    m.picard = Some(PicardSummary::of(&reference));
    let mut artifacts = Vec::new();
    density_artifacts(cfg, "reference", &reference.density, &mut artifacts)?;

    let f = capped_power_test_function(cfg.checks.test_function_cap, cfg.checks.test_function_exponent);
    let test = TestFunction {
        f: &f,
        delta: cfg.checks.test_function_exponent,
    };
    let mut points = Vec::new();
    for &n in &cfg.scheme.steps {
        let scheme = SchemeConfig::new(horizon, n, cfg.scheme.randomized, cfg.seed)?;
        let approx = propagate_scheme_density(&drift, &spec, x0, &scheme, &grid)?;
        let e = weighted_density_error(&reference.density, &approx, &pk, horizon, x0, window)?;
        let tf = weak_error_grid(&test, &reference.density, &approx, horizon)?;
        let monte_carlo = if cfg.scheme.paths > 0 {
            let t = batch_terminals(&drift, &spec, &scheme, &[x0], cfg.scheme.paths)?;
            terminal_artifacts(cfg, &format!("terminals_n{n}"), &t, &mut artifacts)?;
            let mc = weak_error_monte_carlo(&test, &reference.density, &t, horizon)?;
            Some((mc.error, mc.half_width_95))
        } else {
            None
        };
        points.push(LadderPoint {
            n,
            h: scheme.h(),
            weighted: e.weighted_sup,
            sup: e.sup,
            l1: e.l1,
            argmax: e.argmax,
            test_function: tf,
            monte_carlo,
        });
    }

    if let Some(n) = cfg.reference.cross_check_steps {
        let scheme = SchemeConfig::new(horizon, n, cfg.scheme.randomized, cfg.seed)?;
        let fine = propagate_scheme_density(&drift, &spec, x0, &scheme, &grid)?;
        let e = weighted_density_error(&reference.density, &fine, &pk, horizon, x0, window)?;
        m.metrics.insert("cross_check_weighted_error".into(), e.weighted_sup);
        if e.weighted_sup > cfg.reference.cross_check_tol {
            return Err(Error::Degenerate(format!(
                "reference and the n = {n} scheme disagree by {:.3e} (tolerance {:.1e})",
                e.weighted_sup, cfg.reference.cross_check_tol
            )));
        }
    }

    let mut csv = String::from(
        "n,h,weighted_error,sup_error,l1_error,argmax,normalized_error,test_function_error",
    );
    if cfg.scheme.paths > 0 {
        csv.push_str(",mc_test_function_error,mc_half_width_95");
    }
    csv.push('\n');
    for p in &points {
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{},{}",
            p.n,
            p.h,
            p.weighted,
            p.sup,
            p.l1,
            p.argmax,
            p.weighted / p.h.powf(target),
            p.test_function
        );
        if let Some((e, hw)) = p.monte_carlo {
            let _ = write!(csv, ",{e},{hw}");
        }
        csv.push('\n');
    }

    m.metrics.insert("target".into(), target);
    m.metrics.insert("gamma".into(), cfg.gamma());
    let half = 0.5 * horizon;
    if spec.dim() == 1 {
        let conv = pk.check_convolution(half, half, cfg.checks.convolution_points)?;
        m.metrics.insert("convolution_constant".into(), conv.constant);
    }
    let weighted: Vec<f64> = points.iter().map(|p| p.weighted).collect();
    let c = &cfg.checks;
    if drift.is_zero() {
        m.degenerate = Some("degenerate: exact scheme".into());
        let worst = weighted.iter().cloned().fold(0.0, f64::max);
        m.metrics.insert("max_weighted_error".into(), worst);
        m.checks.push(Check::at_most("exact_scheme_error", worst, c.degenerate_tol));
    } else {
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.weighted)).collect();
        let fit = fit_rate(&pairs, target)?;
        fit_metrics("", &fit, &mut m.metrics);
        let spread = normalized_spread(&pairs, target);
        m.metrics.insert("normalized_spread".into(), spread);
        m.checks.push(Check::within(
            "slope",
            fit.slope,
            target - c.slope_below,
            target + c.slope_above,
        ));
        m.checks.push(Check::at_most("normalized_spread", spread, c.max_spread));
        m.checks.push(Check {
            name: "monotone_refinement".into(),
            value: weighted.windows(2).filter(|w| w[1] > w[0]).count() as f64,
            rule: "at most one increase of at most 1e-4".into(),
            passed: monotone_refinement(&weighted, 1e-4),
        });
        let tf_pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.test_function)).collect();
        match fit_rate(&tf_pairs, target) {
            Ok(tf_fit) => {
                fit_metrics("test_function_", &tf_fit, &mut m.metrics);
                m.checks.push(Check::at_least("test_function_slope", tf_fit.slope, target - c.slope_below));
            }
            Err(e) => m.checks.push(Check {
                name: format!("test_function_slope ({e})"),
                value: f64::NAN,
                rule: format!(">= {}", target - c.slope_below),
                passed: false,
            }),
        }
    }

    let err_pts: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.weighted)).collect();
    let tf_pts: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.test_function)).collect();
    let mut series = vec![
        Series::new("weighted density error", err_pts.clone()),
        Series::new("test-function error", tf_pts),
    ];
    if !drift.is_zero() {
        series.push(Series::new(format!("h^{target:.3}"), guide_line(&err_pts, target)).dashed());
    }
    let plot = Plot {
        title: format!(
            "{} drift, alpha = {}, beta = {}",
            drift.name, cfg.model.alpha, cfg.model.beta
        ),
        x_label: "h".into(),
        y_label: "error".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series,
    };
    Ok(Outcome {
        manifest: m,
        results_csv: csv,
        plot_svg: plot.render(),
        artifacts,
    })
}

/// Stored times `k T / samples` that lie past the solver's initial layer.
fn regularity_times(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let horizon = cfg.model.horizon;
    let samples = cfg.reference.time_samples;
    let delta = cfg.reference.time_step;
    let per = horizon / samples as f64 / delta;
    if samples == 0 || (per - per.round()).abs() > 1e-9 || per.round() < 1.0 {
        return Err(Error::Config {
            key: "reference.time_samples".into(),
            reason: "the sample spacing must be a multiple of the time step".into(),
        });
    }
    let layer = (DuhamelOptions::default().initial_layer_cells * cfg.reference.dx).powf(cfg.model.alpha);
    let layer = (layer / delta).ceil() * delta;
    Ok((1..=samples)
        .map(|k| k as f64 * horizon / samples as f64)
        .filter(|&t| t >= layer - 1e-12)
        .collect())
}

fn regularity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let drift = cfg.drift_spec()?;
    let pk = ProxyKernel::new(spec);
    let x0 = cfg.model.x0;
    let grid = grid_at(cfg, regularity_times(cfg)?)?;
    let sol = solve_sde_density(&drift, &spec, x0, 0.0, &grid, &duhamel_options(cfg))?;
    let mut m = manifest(cfg);
    m.picard = Some(PicardSummary::of(&sol));
    let mut artifacts = Vec::new();
    density_artifacts(cfg, "reference", &sol.density, &mut artifacts)?;
    let c = &cfg.checks;
    let opts = QuotientOptions::default();
    let time_exp = c.time_exponent.unwrap_or(cfg.target_rate());
    let time = holder_quotient(&sol.density, QuotientKind::ForwardTime, time_exp, &pk, x0, 0.0, &opts)?;
    let space = holder_quotient(&sol.density, QuotientKind::ForwardSpace, c.space_exponent, &pk, x0, 0.0, &opts)?;
    let negative = holder_quotient(&sol.density, QuotientKind::ForwardSpace, c.negative_exponent, &pk, x0, 0.0, &opts)?;

    let n = *cfg.scheme.steps.last().expect("validated ladder");
    let scheme_cfg = SchemeConfig::new(cfg.model.horizon, n, cfg.scheme.randomized, cfg.seed)?;
    let scheme_grid = grid_at(cfg, vec![cfg.model.horizon])?;
    let scheme = propagate_scheme_density(&drift, &spec, x0, &scheme_cfg, &scheme_grid)?;
    let scheme_q = holder_quotient(
        &scheme,
        QuotientKind::ForwardSpaceScheme { steps: n },
        c.space_exponent,
        &pk,
        x0,
        0.0,
        &opts,
    )?;

    let mut csv = String::from("kind,exponent,gap,max_quotient\n");
    let mut series = Vec::new();
    for (label, r) in [
        ("forward-time", &time),
        ("forward-space", &space),
        ("forward-space (negative control)", &negative),
        ("forward-space-scheme", &scheme_q),
    ] {
        for &(gap, q) in &r.trace {
            let _ = writeln!(csv, "{},{},{gap},{q}", r.kind.label(), r.exponent);
        }
        series.push(Series::new(format!("{label}, exponent {:.3}", r.exponent), r.trace.clone()));
    }
    m.metrics.insert("time_quotient".into(), time.max_quotient);
    m.metrics.insert("time_variation".into(), time.variation());
    m.metrics.insert("space_quotient".into(), space.max_quotient);
    m.metrics.insert("space_variation".into(), space.variation());
    m.metrics.insert("negative_growth".into(), negative.growth());
    m.metrics.insert("scheme_space_quotient".into(), scheme_q.max_quotient);
    m.metrics.insert("scheme_space_variation".into(), scheme_q.variation());
    m.checks.push(Check::at_most("time_quotient_stable", time.variation(), c.quotient_variation));
    m.checks.push(Check::at_most("space_quotient_stable", space.variation(), c.quotient_variation));
    m.checks.push(Check {
        name: "negative_control_diverges".into(),
        value: negative.growth(),
        rule: format!("increasing, growth > {}", 1.0 + c.quotient_variation),
        passed: negative.diverges(c.quotient_variation),
    });
    let plot = Plot {
        title: format!("Hölder quotients, alpha = {}, beta = {}", cfg.model.alpha, cfg.model.beta),
        x_label: "smallest gap".into(),
        y_label: "max quotient".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series,
    };
    Ok(Outcome {
        manifest: m,
        results_csv: csv,
        plot_svg: plot.render(),
        artifacts,
    })
}

/// Time step for a reference of the step-`h` square-wave drift: switch
/// times must fall on nodes.
fn ablation_time_step(drift: &DriftSpec, base: f64, horizon: f64) -> f64 {
    let mut delta = base;
    let on_grid = |d: f64| {
        drift
            .time_breakpoints(0.0, horizon)
            .iter()
            .all(|b| ((b / d) - (b / d).round()).abs() < 1e-9)
    };
    while !on_grid(delta) && delta > base / 64.0 {
        delta *= 0.5;
    }
    delta
}

fn ablation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec()?;
    let drift = cfg.drift_spec()?;
    let pk = ProxyKernel::new(spec);
    let (x0, horizon) = (cfg.model.x0, cfg.model.horizon);
    let target = cfg.target_rate();
    let window = Some(cfg.window());
    let grid = grid_at(cfg, vec![horizon])?;
    let mut m = manifest(cfg);
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut block_length = f64::INFINITY;
    for &n in &cfg.scheme.steps {
        let h = horizon / n as f64;
        let resolved = drift.resolve(h);
        let mut opts = duhamel_options(cfg);
        opts.time_step = ablation_time_step(&resolved, opts.time_step, horizon);
        let reference = solve_sde_density(&resolved, &spec, x0, 0.0, &grid, &opts)?;
        block_length = block_length.min(reference.diagnostics.block_length);
        let mut errs = [(0.0, 0.0); 2];
        let mut mc = [None, None];
        for (k, randomized) in [true, false].into_iter().enumerate() {
            let scheme = SchemeConfig::new(horizon, n, randomized, cfg.seed)?;
            let approx = propagate_scheme_density(&drift, &spec, x0, &scheme, &grid)?;
            let e = weighted_density_error(&reference.density, &approx, &pk, horizon, x0, window)?;
            errs[k] = (e.weighted_sup, e.sup);
            if cfg.scheme.paths > 0 {
                // same seed: both schemes see identical noise increments
                let t = batch_terminals(&drift, &spec, &scheme, &[x0], cfg.scheme.paths)?;
                let label = if randomized { "randomized" } else { "left_point" };
                terminal_artifacts(cfg, &format!("terminals_{label}_n{n}"), &t, &mut artifacts)?;
                let mean = t.first_coordinates().iter().sum::<f64>() / t.len() as f64;
                mc[k] = Some(mean);
            }
        }
        rows.push((n, h, errs, mc));
    }
    m.metrics.insert("target".into(), target);
    m.metrics.insert("gamma".into(), cfg.gamma());
    m.metrics.insert("min_block_length".into(), block_length);

    let mut csv = String::from("n,h,randomized_error,left_point_error,randomized_sup,left_point_sup");
    if cfg.scheme.paths > 0 {
        csv.push_str(",randomized_mean,left_point_mean");
    }
    csv.push('\n');
    for (n, h, e, mc) in &rows {
        let _ = write!(csv, "{n},{h},{},{},{},{}", e[0].0, e[1].0, e[0].1, e[1].1);
        if let [Some(a), Some(b)] = mc {
            let _ = write!(csv, ",{a},{b}");
        }
        csv.push('\n');
    }
    let rand_pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2[0].0)).collect();
    let left_pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.1, r.2[1].0)).collect();
    let rand_fit = fit_rate(&rand_pairs, target)?;
    fit_metrics("randomized_", &rand_fit, &mut m.metrics);
    match fit_rate(&left_pairs, target) {
        Ok(fit) => fit_metrics("left_point_", &fit, &mut m.metrics),
        Err(_) => {
            m.metrics.insert("left_point_slope".into(), f64::NAN);
        }
    }
    m.checks.push(Check::at_least(
        "randomized_slope",
        rand_fit.slope,
        target - cfg.checks.slope_below,
    ));
    let plot = Plot {
        title: format!("square-wave drift, alpha = {}, beta = {}", cfg.model.alpha, cfg.model.beta),
        x_label: "h".into(),
        y_label: "weighted density error".into(),
        x_axis: Axis::Log,
        y_axis: Axis::Log,
        series: vec![
            Series::new("randomized", rand_pairs.clone()),
            Series::new("left point", left_pairs),
            Series::new(format!("h^{target:.3}"), guide_line(&rand_pairs, target)).dashed(),
        ],
    };
    Ok(Outcome {
        manifest: m,
        results_csv: csv,
        plot_svg: plot.render(),
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refinement_monotonicity_allows_one_small_bump() {
        assert!(monotone_refinement(&[1.0, 0.5, 0.25], 1e-4));
        assert!(monotone_refinement(&[1.0, 0.5, 0.50005, 0.2], 1e-4));
        assert!(!monotone_refinement(&[1.0, 0.5, 0.6, 0.2], 1e-4));
        assert!(!monotone_refinement(&[1.0, 1.00001, 0.5, 0.50001], 1e-4));
    }

    #[test]
    fn lambda_grid_has_nine_points_within_radius_two() {
        for d in [1, 2, 3] {
            let g = lambda_grid(d);
            assert_eq!(g.len(), 9);
            for l in g {
                assert!(l.iter().map(|v| v * v).sum::<f64>().sqrt() <= 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn small_sampler_check_runs() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"sampler-check\"\nseed = 3\n[model]\nalpha = 1.5\nbeta = 0.5\n[scheme]\npaths = 20000\n",
        )
        .unwrap();
        let out = execute(&cfg).unwrap();
        assert_eq!(out.results_csv.lines().count(), 10);
        assert!(out.manifest.metrics["cf_max_error"] < 0.05);
        assert!(out.manifest.to_toml().contains("[config.model]"));
    }
}

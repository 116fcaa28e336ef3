use crate::drift::{lookup, make_holder_drift, DriftSpec, TimeProfile};
use crate::error::{Error, Result};
use crate::stable_noise::StableSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SamplerCheck,
    KernelCheck,
    Convergence,
    Regularity,
    RandomizationAblation,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::SamplerCheck => "sampler-check",
            ExperimentKind::KernelCheck => "kernel-check",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Regularity => "regularity",
            ExperimentKind::RandomizationAblation => "randomization-ablation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub checks: CheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub name: String,
    pub amplitude: f64,
    /// `constant`, `smooth-oscillating` or `square-wave`.
    pub time: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_steps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            name: "capped-power".into(),
            amplitude: 1.0,
            time: "constant".into(),
            omega: None,
            period_steps: None,
            phase: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub steps: Vec<usize>,
    pub randomized: bool,
    /// Monte Carlo paths (increments for `sampler-check`); zero disables
    /// the Monte Carlo layer of density experiments.
    pub paths: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            steps: vec![8, 16, 32, 64, 128, 256],
            randomized: true,
            paths: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    pub dx: f64,
    /// Defaults to `40 T^{1/α}` (`10 √T` when `α = 2`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    pub time_step: f64,
    pub block_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Sup-norms are taken over `|y - x0| <= window`; defaults to
    /// `10 T^{1/α}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    /// Step count of an optional fine scheme compared with the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check_steps: Option<usize>,
    pub cross_check_tol: f64,
    /// Stored time slices per unit horizon for `regularity`.
    pub time_samples: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            dx: 0.01,
            half_width: None,
            time_step: 1.0 / 512.0,
            block_steps: 32,
            tol: 1e-6,
            max_iter: 50,
            window: None,
            cross_check_steps: None,
            cross_check_tol: 5e-3,
            time_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Accepted slope band `[target - slope_below, target + slope_above]`.
    pub slope_below: f64,
    pub slope_above: f64,
    /// Largest accepted `max/min` of `error / h^target`.
    pub max_spread: f64,
    pub test_function_cap: f64,
    pub test_function_exponent: f64,
    /// Error bound when the scheme is exact (zero drift).
    pub degenerate_tol: f64,
    pub cf_tol: f64,
    pub histogram_tol: f64,
    pub histogram_bins: usize,
    pub histogram_range: f64,
    pub density_tol: f64,
    pub sandwich_max: f64,
    pub sandwich_points: usize,
    pub refinement_tol: f64,
    pub convolution_points: usize,
    pub moment_tol: f64,
    pub space_exponent: f64,
    pub negative_exponent: f64,
    /// Defaults to `γ/α`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_exponent: Option<f64>,
    pub quotient_variation: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            slope_below: 0.15,
            slope_above: 0.20,
            max_spread: 3.0,
            test_function_cap: 2.0,
            test_function_exponent: 0.5,
            degenerate_tol: 1e-4,
            cf_tol: 0.01,
            histogram_tol: 0.01,
            histogram_bins: 200,
            histogram_range: 5.0,
            density_tol: 1e-6,
            sandwich_max: 100.0,
            sandwich_points: 201,
            refinement_tol: 0.2,
            convolution_points: 41,
            moment_tol: 0.02,
            space_exponent: 0.9,
            negative_exponent: 1.3,
            time_exponent: None,
            quotient_variation: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    None,
    Binary,
    Csv,
    Both,
}

impl Format {
    pub fn binary(self) -> bool {
        matches!(self, Format::Binary | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub density: Format,
    pub terminals: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            density: Format::Binary,
            terminals: Format::None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

/// Cells per kernel scale below which the scheme density smears.
const MIN_STEP_CELLS: f64 = 2.25;

fn config_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde reports unknown and missing fields by name
            let key = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            config_error(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spec(&self) -> Result<StableSpec> {
        StableSpec::new(self.model.alpha, self.model.dim)
            .map_err(|e| config_error("model.alpha", e.to_string()))
    }

    /// `γ = α + β - 1`.
    pub fn gamma(&self) -> f64 {
        self.model.alpha + self.model.beta - 1.0
    }

    /// `γ / α`.
    pub fn target_rate(&self) -> f64 {
        self.gamma() / self.model.alpha
    }

    pub fn time_profile(&self) -> Result<TimeProfile> {
        let d = &self.drift;
        match d.time.as_str() {
            "constant" => Ok(TimeProfile::Constant),
            "smooth-oscillating" => Ok(TimeProfile::SmoothOscillating {
                omega: d
                    .omega
                    .ok_or_else(|| config_error("drift.omega", "required for smooth-oscillating"))?,
            }),
            "square-wave" => Ok(TimeProfile::SquareWave {
                period_steps: d.period_steps.unwrap_or(2.0),
                phase: d.phase.unwrap_or(0.25),
                period: None,
            }),
            other => Err(config_error(
                "drift.time",
                format!("unknown time profile `{other}`"),
            )),
        }
    }

    pub fn drift_spec(&self) -> Result<DriftSpec> {
        let space = lookup(&self.drift.name)?;
        make_holder_drift(
            self.model.beta,
            self.drift.amplitude,
            self.model.dim,
            space,
            self.time_profile()?,
        )
        .map_err(|e| config_error("drift", e.to_string()))
    }

    pub fn half_width(&self) -> f64 {
        let t = self.model.horizon;
        self.reference.half_width.unwrap_or(if self.model.alpha == 2.0 {
            10.0 * t.sqrt()
        } else {
            40.0 * t.powf(1.0 / self.model.alpha)
        })
    }

    pub fn window(&self) -> f64 {
        self.reference
            .window
            .unwrap_or(10.0 * self.model.horizon.powf(1.0 / self.model.alpha))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        self.spec()?;
        if !(m.beta > 0.0 && m.beta < 1.0) {
            return Err(config_error("model.beta", format!("{} is outside (0, 1)", m.beta)));
        }
        if !(self.gamma() > 0.0) {
            return Err(config_error(
                "model.beta",
                format!("gamma = alpha + beta - 1 = {} must be positive", self.gamma()),
            ));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(config_error("model.horizon", "must be positive"));
        }
        if !m.x0.is_finite() {
            return Err(config_error("model.x0", "must be finite"));
        }
        self.drift_spec()?;
        let steps = &self.scheme.steps;
        if steps.is_empty() {
            return Err(config_error("scheme.steps", "ladder is empty"));
        }
        if let Some(n) = steps.iter().find(|n| !n.is_power_of_two()) {
            return Err(config_error("scheme.steps", format!("{n} is not a power of two")));
        }
        if steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("scheme.steps", "ladder must be strictly increasing"));
        }
        let density_kind = matches!(
            self.kind,
            ExperimentKind::Convergence | ExperimentKind::Regularity | ExperimentKind::RandomizationAblation
        );
        if density_kind {
            if m.dim != 1 {
                return Err(config_error("model.dim", "density experiments run in dimension 1"));
            }
            let r = &self.reference;
            if !(r.dx > 0.0) || !(r.time_step > 0.0) || r.block_steps == 0 || r.max_iter == 0 || !(r.tol > 0.0) {
                return Err(config_error(
                    "reference",
                    "dx, time_step, block_steps, tol and max_iter must be positive",
                ));
            }
            let need = 10.0 * m.horizon.powf(1.0 / m.alpha);
            if self.half_width() < need {
                return Err(config_error(
                    "reference.half_width",
                    format!("must be at least {need}"),
                ));
            }
            // finest scheme step must spread over a few cells
            if let Some(&n_max) = steps.last() {
                let scale = (m.horizon / n_max as f64).powf(1.0 / m.alpha);
                if scale < MIN_STEP_CELLS * r.dx {
                    return Err(config_error(
                        "reference.dx",
                        format!("must be at most {:.4} to resolve n = {n_max}", scale / MIN_STEP_CELLS),
                    ));
                }
            }
            let steps_per_node = m.horizon / r.time_step;
            if (steps_per_node - steps_per_node.round()).abs() > 1e-9 {
                return Err(config_error("reference.time_step", "must divide the horizon"));
            }
        }
        if matches!(self.kind, ExperimentKind::Convergence | ExperimentKind::RandomizationAblation) && steps.len() < 4 {
            return Err(config_error("scheme.steps", "rate fits need at least four step counts"));
        }
        if self.kind == ExperimentKind::RandomizationAblation && !matches!(self.time_profile()?, TimeProfile::SquareWave { .. }) {
            return Err(config_error("drift.time", "the ablation needs a square-wave drift"));
        }
        if self.kind == ExperimentKind::SamplerCheck && self.scheme.paths < 1000 {
            return Err(config_error("scheme.paths", "sampler check needs at least 1000 draws"));
        }
        if let Some(n) = self.reference.cross_check_steps {
            if !n.is_power_of_two() {
                return Err(config_error("reference.cross_check_steps", "must be a power of two"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "convergence"
seed = 7

[model]
alpha = 1.5
beta = 0.5
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.scheme.steps, vec![8, 16, 32, 64, 128, 256]);
        assert!((cfg.target_rate() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cfg.half_width(), 40.0);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    fn key_of(text: &str) -> String {
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(&format!("{BASE}\n[scheme]\nsteps = [8, 12, 16, 32]\nrandomized = true\npaths = 0\n")), "scheme.steps");
        assert_eq!(key_of(&BASE.replace("beta = 0.5", "beta = 0.5\nbogus = 1")), "bogus");
        assert_eq!(key_of(&BASE.replace("beta = 0.5", "")), "beta");
        assert_eq!(key_of(&BASE.replace("alpha = 1.5", "alpha = 0.9")), "model.alpha");
        assert_eq!(key_of(&BASE.replace("beta = 0.5", "beta = 1.5")), "model.beta");
        assert_eq!(key_of(&format!("{BASE}\n[drift]\nname = \"wiggle\"\namplitude = 1.0\ntime = \"constant\"\n")), "drift.name");
    }

    #[test]
    fn ladder_must_increase() {
        let text = format!("{BASE}\n[scheme]\nsteps = [16, 8, 32, 64]\nrandomized = true\npaths = 0\n");
        assert_eq!(key_of(&text), "scheme.steps");
    }

    #[test]
    fn coarse_grid_is_rejected() {
        assert_eq!(key_of(&format!("{BASE}\n[reference]\ndx = 0.05\n")), "reference.dx");
    }
}

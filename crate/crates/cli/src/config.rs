//! JSON experiment configuration. Unknown keys are rejected so a typo in a
//! sweep file fails loudly instead of silently running defaults.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GlmRiskCurve,
    ReluWellspec,
    ReluMisspec,
    Twolayer,
    MlpClipSweep,
    MlpWidthSweep,
    MlpIterSweep,
    MlpNSweep,
    NtrfFit,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::GlmRiskCurve => "glm-risk-curve",
            ExperimentKind::ReluWellspec => "relu-wellspec",
            ExperimentKind::ReluMisspec => "relu-misspec",
            ExperimentKind::Twolayer => "twolayer",
            ExperimentKind::MlpClipSweep => "mlp-clip-sweep",
            ExperimentKind::MlpWidthSweep => "mlp-width-sweep",
            ExperimentKind::MlpIterSweep => "mlp-iter-sweep",
            ExperimentKind::MlpNSweep => "mlp-n-sweep",
            ExperimentKind::NtrfFit => "ntrf-fit",
        }
    }

    /// The algorithm name reported in result rows.
    pub fn algorithm(&self) -> &'static str {
        match self {
            ExperimentKind::GlmRiskCurve => "dp_glm",
            ExperimentKind::ReluWellspec => "dp_projected_gd_relu",
            ExperimentKind::ReluMisspec => "adaptive_dp_batched_gd",
            ExperimentKind::Twolayer => "dp_twolayer",
            ExperimentKind::NtrfFit => "ntrf_fit",
            _ => "dp_sgd",
        }
    }
}

/// Which scalar the sweep varies; one row is emitted per (value, seed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knob {
    N,
    Clip,
    Width,
    Iterations,
    RadiusScale,
    EtaMult,
    Epsilon,
    Degree,
}

impl Knob {
    pub fn as_str(&self) -> &'static str {
        match self {
            Knob::N => "n",
            Knob::Clip => "clip",
            Knob::Width => "width",
            Knob::Iterations => "iterations",
            Knob::RadiusScale => "radius-scale",
            Knob::EtaMult => "eta-mult",
            Knob::Epsilon => "epsilon",
            Knob::Degree => "degree",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub knob: Knob,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSpec {
    pub images: String,
    pub labels: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub n: usize,
    pub d: usize,
    #[serde(default = "one")]
    pub w_norm: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub bias_amplitude: f64,
    /// Hidden units of the planted two-layer teacher.
    #[serde(default = "three")]
    pub teacher_units: usize,
    #[serde(default)]
    pub mnist: Option<MnistSpec>,
}

fn one() -> f64 {
    1.0
}

fn three() -> usize {
    3
}

/// Algorithm knobs; anything unset falls back to the solver defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Knobs {
    pub eta: Option<f64>,
    pub eta_mult: f64,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub clip: f64,
    pub radius: f64,
    pub iterations: Option<usize>,
    pub width: usize,
    pub depth: usize,
    pub batch: f64,
    pub c2: f64,
    pub strict: bool,
    pub degree: usize,
    pub radius_scale: f64,
    pub steps: usize,
    pub alpha_target: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs {
            eta: None,
            eta_mult: 1.0,
            theta: None,
            beta: None,
            gamma: None,
            clip: 4.0,
            radius: 8.0,
            iterations: None,
            width: 128,
            depth: 3,
            batch: 100.0,
            c2: 1.0,
            strict: false,
            degree: 3,
            radius_scale: 1.0,
            steps: 4000,
            alpha_target: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Row identifier; defaults to the experiment kind.
    #[serde(default)]
    pub id: Option<String>,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub epsilon: f64,
    /// Fixed delta; when absent, delta = 1/n^2 for the cell's n.
    #[serde(default)]
    pub delta: Option<f64>,
    pub sweep: Sweep,
    #[serde(default)]
    pub knobs: Knobs,
    pub data: DataSpec,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn id(&self) -> &str {
        self.id.as_deref().unwrap_or(self.experiment.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must be non-empty".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(CliError::Config("sweep.values must be non-empty".into()));
        }
        if self.n_test < 100 {
            return Err(CliError::Config("n_test must be at least 100".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(CliError::Config("epsilon must be positive".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(CliError::Config("delta must lie in (0, 1)".into()));
            }
        }
        if self.data.n < 2 || self.data.d == 0 {
            return Err(CliError::Config("data.n must be >= 2 and data.d >= 1".into()));
        }
        if self.data.w_norm <= 0.0 || self.data.noise_std < 0.0 || self.data.bias_amplitude < 0.0
        {
            return Err(CliError::Config("invalid data spec".into()));
        }
        let k = &self.knobs;
        if k.eta_mult <= 0.0
            || k.clip <= 0.0
            || k.radius <= 0.0
            || k.width == 0
            || k.depth < 2
            || k.batch < 1.0
            || k.c2 <= 0.0
            || k.radius_scale < 0.0
            || k.alpha_target <= 0.0
        {
            return Err(CliError::Config("invalid algorithm knobs".into()));
        }
        for &v in &self.sweep.values {
            let ok = match self.sweep.knob {
                Knob::N | Knob::Width | Knob::Iterations | Knob::Degree => {
                    v >= 1.0 && v.fract() == 0.0
                }
                Knob::RadiusScale => v >= 0.0,
                _ => v > 0.0,
            };
            if !ok {
                return Err(CliError::Config(format!(
                    "sweep value {v} is invalid for knob {}",
                    self.sweep.knob.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Delta for a cell with the given sample count.
    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or_else(|| 1.0 / (n as f64 * n as f64))
    }
}

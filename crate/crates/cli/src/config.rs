//! Versioned JSON run configuration and the shipped presets.

use deconv_erm::diagnostics::DiagnosticsPlan;
use deconv_erm::kernels::NoiseSpec;
use deconv_erm::simulation::{BackendSpec, ClassSpec, ExperimentPlan, SmoothingLevel};
use deconv_erm::{BaseKernelKind, ExponentMode, Grid, LossSpec, RateConfig, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level config: a schema version and one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub run: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Kernel(KernelJob),
    Fit(FitJob),
    Rates(ExperimentPlan),
    Diagnose(DiagnosticsPlan),
    Exponent(ExponentJob),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Fit(_) => "fit",
            Command::Rates(_) => "rates",
            Command::Diagnose(_) => "diagnose",
            Command::Exponent(_) => "exponent",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Fit(j) => Some(j.seed),
            Command::Rates(p) => Some(p.seed),
            Command::Diagnose(p) => Some(p.seed),
            Command::Kernel(_) | Command::Exponent(_) => None,
        }
    }

    /// Replaces the seed of seeded commands; a no-op for the others.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Command::Fit(j) => j.seed = seed,
            Command::Rates(p) => p.seed = seed,
            Command::Diagnose(p) => p.seed = seed,
            Command::Kernel(_) | Command::Exponent(_) => {}
        }
    }
}

fn default_base_kernel() -> BaseKernelKind {
    BaseKernelKind::OrderMFlatTop
}

fn default_loss() -> LossSpec {
    LossSpec::HARD
}

/// Tabulate a (deconvolution) kernel on offsets spanning `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelJob {
    #[serde(default = "default_base_kernel")]
    pub base_kernel: BaseKernelKind,
    pub noise: NoiseSpec,
    pub bandwidth: Vec<f64>,
    pub grid: Grid,
}

/// One λ-ERM fit on a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitJob {
    pub scenario: ScenarioSpec,
    pub class: ClassSpec,
    pub backend: BackendSpec,
    #[serde(default = "default_loss")]
    pub loss: LossSpec,
    pub rate: RateConfig,
    pub n: usize,
    pub seed: u64,
    /// Overrides the rate rule when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentJob {
    pub rate: RateConfig,
    #[serde(default)]
    pub mode: ExponentMode,
}

/// Parses and version-checks a config; every failure here is a schema error.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Schema(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub const PRESETS: &[(&str, &str)] = &[
    ("dirac-linear", include_str!("../presets/dirac-linear.json")),
    (
        "laplace-linear",
        include_str!("../presets/laplace-linear.json"),
    ),
    ("svd-linear", include_str!("../presets/svd-linear.json")),
];

pub fn preset(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Schema(format!(
                "unknown preset '{name}' (known: {})",
                known.join(", ")
            ))
        })
}

//! Config-driven runner for kernels, fits, rate experiments, diagnostics and
//! exponents. Every run writes its artifacts plus `config.json` (the exact input)
//! and `manifest.json` into one output directory.

pub mod config;
pub mod error;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use deconv_erm::diagnostics::run_diagnostics;
use deconv_erm::hypotheses::bayes_in_class_on;
use deconv_erm::kernels::{build_base_kernel, NoiseModel};
use deconv_erm::operators::rng_from_seed;
use deconv_erm::simulation::{
    build_smoother, smoothing_for, write_point_row, Experiment, ObservationModel, RATES_CSV_HEADER,
};
use deconv_erm::{
    build_deconvolution_kernel, minimize, rate_exponent, run_rate_experiment_with, Classifier,
    Scenario, Smoothing,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{parse_config, preset, Command, RunConfig, PRESETS, SCHEMA_VERSION};
use error::schema;
pub use error::CliError;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: PathBuf,
    /// Replaces the config's seed for seeded commands.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses rayon's default pool.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Text for standard output.
    pub stdout: String,
    /// File names written into the output directory.
    pub artifacts: Vec<String>,
}

/// `fit.json`: the fit without wall-clock fields, so reruns are byte-identical.
#[derive(Debug, Serialize)]
struct FitArtifact {
    index: usize,
    classifier: Classifier,
    empirical_risk: f64,
    smoothing: Smoothing,
    counts: Vec<usize>,
    risks: Vec<f64>,
    true_risk: f64,
    oracle_index: usize,
    oracle_risk: f64,
    excess_risk: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn artifacts_of(cmd: &Command) -> &'static [&'static str] {
    match cmd {
        Command::Kernel(_) => &["kernel.csv", "summary.json"],
        Command::Fit(_) => &["fit.json"],
        Command::Rates(_) => &["rates.csv", "summary.json"],
        Command::Diagnose(_) => &["diagnostics.json", "diagnostics.csv"],
        Command::Exponent(_) => &["summary.json"],
    }
}

/// Checks everything that can be checked without computing; failures are schema errors.
fn validate(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Kernel(job) => {
            job.grid.validate().map_err(schema)?;
            NoiseModel::from_spec(job.noise.clone()).map_err(schema)?;
            let steps = job.grid.spacing();
            if job.bandwidth.len() != steps.len() {
                return Err(CliError::Schema(format!(
                    "bandwidth has {} entries for a {}-dimensional grid",
                    job.bandwidth.len(),
                    steps.len()
                )));
            }
            for (l, h) in job.bandwidth.iter().zip(&steps) {
                if !(l.is_finite() && l > h) {
                    return Err(CliError::Schema(format!(
                        "bandwidth {l} must exceed the grid spacing {h}"
                    )));
                }
            }
        }
        Command::Fit(job) => {
            job.rate.validate().map_err(schema)?;
            if job.n == 0 {
                return Err(CliError::Schema("n must be >= 1".into()));
            }
            let scenario = Scenario::from_spec(&job.scenario).map_err(schema)?;
            job.class.build().map_err(schema)?;
            if job.smoothing.is_none() {
                smoothing_for(&scenario, &job.rate, job.n).map_err(schema)?;
            }
        }
        Command::Rates(plan) => {
            Experiment::new(plan).map_err(schema)?;
            rate_exponent(&plan.rate, plan.exponent_mode).map_err(schema)?;
        }
        Command::Diagnose(plan) => {
            plan.rate.validate().map_err(schema)?;
            Scenario::from_spec(&plan.scenario).map_err(schema)?;
            plan.class.build().map_err(schema)?;
            if plan.levels.is_empty() || plan.mc_n == 0 {
                return Err(CliError::Schema(
                    "diagnostics need at least one smoothing level and mc_n >= 1".into(),
                ));
            }
        }
        Command::Exponent(job) => {
            rate_exponent(&job.rate, job.mode).map_err(schema)?;
        }
    }
    Ok(())
}

/// Parses, validates and executes a config given as text.
///
/// Nothing is written unless the config passes validation. Once the output
/// directory exists, a failure leaves `error.json` next to any partial artifacts.
pub fn run_text(text: &str, opts: &Options) -> Result<Outcome, CliError> {
    let mut cfg = parse_config(text)?;
    if let Some(seed) = opts.seed {
        cfg.run.set_seed(seed);
    }
    validate(&cfg.run)?;
    match opts.threads {
        Some(0) => Err(CliError::Schema("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Schema(e.to_string()))?
            .install(|| execute(text, &cfg, opts)),
        None => execute(text, &cfg, opts),
    }
}

pub fn run_file(path: &Path, opts: &Options) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    run_text(&text, opts)
}

fn execute(text: &str, cfg: &RunConfig, opts: &Options) -> Result<Outcome, CliError> {
    let out = &opts.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_bytes(&out.join("config.json"), text.as_bytes())?;
    let config_value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    let artifacts: Vec<String> = artifacts_of(&cfg.run)
        .iter()
        .map(|s| s.to_string())
        .collect();
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": cfg.schema_version,
        "command": cfg.run.name(),
        "config_sha256": sha256_hex(text.as_bytes()),
        "seed": cfg.run.seed(),
        "seed_override": opts.seed,
        "artifacts": artifacts,
        "config": config_value,
    });
    write_json(&out.join("manifest.json"), &manifest)?;

    match compute(&cfg.run, out) {
        Ok(stdout) => {
            let _ = fs::remove_file(out.join("error.json"));
            Ok(Outcome { stdout, artifacts })
        }
        Err(e) => {
            // best effort: the original error matters more than a failed report
            let _ = write_json(&out.join("error.json"), &e.report());
            Err(e)
        }
    }
}

fn compute(cmd: &Command, out: &Path) -> Result<String, CliError> {
    match cmd {
        Command::Kernel(job) => {
            let noise = NoiseModel::from_spec(job.noise.clone())?;
            let base = build_base_kernel(job.base_kernel, &job.grid)?;
            let kernel = build_deconvolution_kernel(&base, &noise, &job.bandwidth)?;
            let path = out.join("kernel.csv");
            let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            let mut w = BufWriter::new(file);
            kernel
                .write_csv(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
            let sup = kernel
                .axes
                .iter()
                .map(|a| a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .product::<f64>();
            let summary = serde_json::json!({
                "base_kernel": job.base_kernel,
                "bandwidth": job.bandwidth,
                "integral": kernel.integral(),
                "sup_abs": sup,
                "half_len": kernel.axes.iter().map(|a| a.half_len).collect::<Vec<_>>(),
                "step": kernel.axes.iter().map(|a| a.step).collect::<Vec<_>>(),
            });
            write_json(&out.join("summary.json"), &summary)?;
            Ok(format!("kernel integral {}\n", kernel.integral()))
        }
        Command::Fit(job) => {
            let scenario = Scenario::from_spec(&job.scenario)?;
            let class = job.class.build()?;
            let level = match job.smoothing {
                Some(level) => level,
                None => smoothing_for(&scenario, &job.rate, job.n)?,
            };
            let smoother = build_smoother(&scenario, &job.backend, level)?;
            let sample =
                ObservationModel::new(&scenario)?.draw(job.n, &mut rng_from_seed(job.seed))?;
            let window = job.backend.window();
            let fit = minimize(&class, &sample, &smoother, &job.loss, window)?;
            log::info!("tables built in {:.3}s", fit.table_build_seconds);
            let oracle = bayes_in_class_on(
                &class,
                &scenario,
                &job.loss,
                window.unwrap_or(scenario.domain()),
            );
            let artifact = FitArtifact {
                index: fit.index,
                classifier: fit.classifier,
                empirical_risk: fit.empirical_risk,
                smoothing: fit.smoothing,
                counts: fit.counts,
                risks: fit.risks,
                true_risk: oracle.risks[fit.index],
                oracle_index: oracle.index,
                oracle_risk: oracle.risk,
                excess_risk: oracle.risks[fit.index] - oracle.risk,
            };
            write_json(&out.join("fit.json"), &artifact)?;
            Ok(format!(
                "chosen index {} (excess risk {})\n",
                artifact.index, artifact.excess_risk
            ))
        }
        Command::Rates(plan) => {
            let path = out.join("rates.csv");
            let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{RATES_CSV_HEADER}")
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(&path, e))?;
            // rows are flushed as each n finishes so an interrupted run keeps them
            let mut io_error = None;
            let result = run_rate_experiment_with(plan, |point| {
                if io_error.is_none() {
                    if let Err(e) = write_point_row(point, &mut w).and_then(|_| w.flush()) {
                        io_error = Some(e);
                    }
                }
            });
            if let Some(e) = io_error {
                return Err(CliError::io(&path, e));
            }
            let report = result?;
            write_json(&out.join("summary.json"), &report.summary_json())?;
            Ok(format!(
                "slope {} ± {} (theory {})\n",
                report.fit.slope, report.fit.half_width, -report.theory_exponent
            ))
        }
        Command::Diagnose(plan) => {
            let report = run_diagnostics(plan)?;
            write_json(&out.join("diagnostics.json"), &report)?;
            let path = out.join("diagnostics.csv");
            let mut csv = String::from("quantity,parameter,value\n");
            for (name, series) in [
                ("lipschitz", &report.lipschitz),
                ("sup", &report.sup),
                ("bias", &report.bias),
            ] {
                for (p, v) in series.parameter.iter().zip(&series.values) {
                    csv.push_str(&format!("{name},{p},{v}\n"));
                }
            }
            for m in &report.modulus {
                csv.push_str(&format!("modulus,{},{}\n", m.delta, m.value));
            }
            write_bytes(&path, csv.as_bytes())?;
            let slope = |s: Option<f64>| s.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            Ok(format!(
                "slopes: lipschitz {}, sup {}, bias {}; bernstein {}\n",
                slope(report.lipschitz.slope),
                slope(report.sup.slope),
                slope(report.bias.slope),
                report.bernstein
            ))
        }
        Command::Exponent(job) => {
            let e = rate_exponent(&job.rate, job.mode)?;
            write_json(
                &out.join("summary.json"),
                &serde_json::json!({ "exponent": e, "mode": job.mode, "rate": job.rate }),
            )?;
            Ok(format!("{e}\n"))
        }
    }
}

//! Monte-Carlo experiments: draw contaminated samples, fit λ-ERM, measure the
//! excess risk by quadrature and fit the convergence rate across sample sizes.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_rate_slope, rate_exponent, ExponentMode, SlopeFit};
use crate::erm::{minimize_tables, select_bandwidth, select_cutoff, RateConfig};
use crate::error::{config, Error, Result};
use crate::hypotheses::{
    bayes_in_class_on, Classifier, Contamination, HypothesisClass, InClassOracle, LossSpec,
    Scenario, ScenarioSpec,
};
use crate::kernels::BaseKernelKind;
use crate::noisy_risk::{
    DeconvolutionSmoother, ModifiedLossTable, NoisySample, Smoother, SvdSmoother,
};
use crate::operators::{apply_operator, rng_from_seed, DensitySampler};

/// The finite hypothesis class of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSpec {
    /// Upper thresholds `1{x > t}` equally spaced over `[lo, hi]`.
    Thresholds { lo: f64, hi: f64, count: usize },
    Explicit {
        classifiers: Vec<Classifier>,
        #[serde(default = "two")]
        num_labels: usize,
    },
}

fn two() -> usize {
    2
}

impl ClassSpec {
    pub fn build(&self) -> Result<HypothesisClass> {
        match self {
            ClassSpec::Thresholds { lo, hi, count } => {
                HypothesisClass::thresholds(*lo, *hi, *count)
            }
            ClassSpec::Explicit {
                classifiers,
                num_labels,
            } => HypothesisClass::new(classifiers.clone(), *num_labels),
        }
    }
}

fn default_base_kernel() -> BaseKernelKind {
    BaseKernelKind::OrderMFlatTop
}

/// How the modified loss is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Deconvolution {
        #[serde(default = "default_base_kernel")]
        base_kernel: BaseKernelKind,
    },
    Svd,
    /// Integral restricted to `window`; uses the deconvolution kernel for additive
    /// noise and the spectral cutoff for the operator.
    Restricted {
        window: (f64, f64),
        #[serde(default = "default_base_kernel")]
        base_kernel: BaseKernelKind,
    },
}

impl BackendSpec {
    pub fn window(&self) -> Option<(f64, f64)> {
        match self {
            BackendSpec::Restricted { window, .. } => Some(*window),
            _ => None,
        }
    }

    fn base_kernel(&self) -> BaseKernelKind {
        match self {
            BackendSpec::Deconvolution { base_kernel }
            | BackendSpec::Restricted { base_kernel, .. } => *base_kernel,
            BackendSpec::Svd => default_base_kernel(),
        }
    }
}

/// Smoothing level: a bandwidth for kernels, a cutoff for the spectral backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingLevel {
    Bandwidth(f64),
    Cutoff(usize),
}

/// Smoother for `scenario` at the given smoothing level.
pub fn build_smoother(
    scenario: &Scenario,
    backend: &BackendSpec,
    level: SmoothingLevel,
) -> Result<Smoother> {
    match (&scenario.contamination, backend, level) {
        (
            Contamination::Noise(noise),
            BackendSpec::Deconvolution { .. } | BackendSpec::Restricted { .. },
            SmoothingLevel::Bandwidth(l),
        ) => Ok(Smoother::Deconvolution(DeconvolutionSmoother::new(
            backend.base_kernel(),
            noise,
            l,
            &scenario.grid,
        )?)),
        (
            Contamination::Operator(op),
            BackendSpec::Svd | BackendSpec::Restricted { .. },
            SmoothingLevel::Cutoff(n),
        ) => Ok(Smoother::Svd(SvdSmoother::new(
            op.clone(),
            n,
            &scenario.grid,
        )?)),
        _ => config(format!(
            "backend {backend:?} with {level:?} does not fit the scenario's contamination"
        )),
    }
}

/// Smoothing level prescribed by the rate rules for sample size `n`.
pub fn smoothing_for(scenario: &Scenario, rate: &RateConfig, n: usize) -> Result<SmoothingLevel> {
    match scenario.contamination {
        Contamination::Noise(_) => Ok(SmoothingLevel::Bandwidth(select_bandwidth(rate, n)?[0])),
        Contamination::Operator(_) => Ok(SmoothingLevel::Cutoff(select_cutoff(rate, n)?)),
    }
}

/// Sampler for `(Z, Y)` under the contaminated law.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    priors: Vec<f64>,
    samplers: Vec<DensitySampler>,
    contamination: Contamination,
}

impl ObservationModel {
    /// For additive noise the samplers draw `X ~ f_y` and noise is added; for the
    /// operator they draw `Z ~ A f_y` directly.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let axis = scenario.grid.axis_1d()?;
        let samplers = match &scenario.contamination {
            Contamination::Noise(_) => scenario
                .densities
                .iter()
                .map(|f| DensitySampler::new(f, axis))
                .collect::<Result<Vec<_>>>()?,
            Contamination::Operator(op) => {
                let Some(coeffs) = &scenario.coefficients else {
                    return Err(Error::Model(
                        "spectral scenario has no density coefficients".into(),
                    ));
                };
                coeffs
                    .iter()
                    .map(|c| {
                        let image: Vec<f64> = apply_operator(c, op, &scenario.grid)?
                            .into_iter()
                            .map(|v| v.max(0.0))
                            .collect();
                        DensitySampler::new(&image, axis)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(ObservationModel {
            priors: scenario.priors.clone(),
            samplers,
            contamination: scenario.contamination.clone(),
        })
    }

    fn label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        for (y, p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        self.priors.len() - 1
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<NoisySample> {
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let label = self.label(rng);
            let mut v = self.samplers[label].sample(rng);
            if let Contamination::Noise(noise) = &self.contamination {
                if !noise.is_dirac() {
                    v += noise.sample(rng)[0];
                }
            }
            z.push(v);
            y.push(label);
        }
        NoisySample::new(z, y, self.priors.len())
    }
}

/// SplitMix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replicate `r` at sample size `n`; independent of the rest of the n-grid.
pub fn trial_seed(base: u64, n: usize, replicate: usize) -> u64 {
    mix(mix(mix(base) ^ n as u64) ^ replicate as u64)
}

fn default_loss() -> LossSpec {
    LossSpec::HARD
}

/// A complete rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSpec,
    pub class: ClassSpec,
    pub backend: BackendSpec,
    #[serde(default = "default_loss")]
    pub loss: LossSpec,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub rate: RateConfig,
    /// Which exponent the report compares against.
    #[serde(default)]
    pub exponent_mode: ExponentMode,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 2 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return config("n_grid must be strictly increasing with at least two sizes");
        }
        if self.n_grid[0] == 0 {
            return config("sample sizes must be >= 1");
        }
        if self.replications == 0 {
            return config("replications must be >= 1");
        }
        self.rate.validate()
    }
}

/// Scenario, class, oracle and sampler resolved from a plan.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub plan: ExperimentPlan,
    pub scenario: Scenario,
    pub class: HypothesisClass,
    /// True (possibly restricted) risk of every classifier and the in-class minimizer.
    pub oracle: InClassOracle,
    pub model: ObservationModel,
}

impl Experiment {
    pub fn new(plan: &ExperimentPlan) -> Result<Self> {
        plan.validate()?;
        let scenario = Scenario::from_spec(&plan.scenario)?;
        let class = plan.class.build()?;
        let window = plan.backend.window().unwrap_or(scenario.domain());
        let oracle = bayes_in_class_on(&class, &scenario, &plan.loss, window);
        let model = ObservationModel::new(&scenario)?;
        Ok(Experiment {
            plan: plan.clone(),
            scenario,
            class,
            oracle,
            model,
        })
    }

    pub fn smoother(&self, n: usize) -> Result<Smoother> {
        let level = smoothing_for(&self.scenario, &self.plan.rate, n)?;
        build_smoother(&self.scenario, &self.plan.backend, level)
    }

    /// Loss tables for sample size `n`; they depend on `n` only through the smoothing level.
    pub fn tables(&self, n: usize) -> Result<Vec<ModifiedLossTable>> {
        self.smoother(n)?
            .tables(&self.class, &self.plan.loss, self.plan.backend.window())
    }

    /// Excess risk `R(ĝ) - R(g*)` of one fit on a fresh sample of size `n`.
    pub fn trial(&self, tables: &[ModifiedLossTable], n: usize, seed: u64) -> Result<f64> {
        let mut rng = rng_from_seed(seed);
        let sample = self.model.draw(n, &mut rng)?;
        let (index, _) = minimize_tables(tables, &sample)?;
        Ok(self.oracle.risks[index] - self.oracle.risk)
    }
}

/// Excess risk of a single trial; builds everything from scratch.
pub fn run_trial(plan: &ExperimentPlan, n: usize, seed: u64) -> Result<f64> {
    let exp = Experiment::new(plan)?;
    exp.trial(&exp.tables(n)?, n, seed)
}

/// Aggregated excess risk at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub replications: usize,
    pub smoothing: SmoothingLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub fit: SlopeFit,
    /// Predicted exponent; the fitted slope should be close to its negative.
    pub theory_exponent: f64,
    pub exponent_mode: ExponentMode,
}

impl RateReport {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_points_csv(&self.points, out)
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.fit.slope,
            "half_width": self.fit.half_width,
            "ci": [self.fit.slope - self.fit.half_width, self.fit.slope + self.fit.half_width],
            "theory": self.theory_exponent,
            "theory_slope": -self.theory_exponent,
            "exponent_mode": self.exponent_mode,
            "dropped_points": self.fit.dropped,
            "points": self.points,
        })
    }
}

pub const RATES_CSV_HEADER: &str = "n,mean,se,R";

/// One `n,mean,se,R` row, so callers can stream points as they finish.
pub fn write_point_row<W: Write>(point: &RatePoint, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{},{},{}",
        point.n, point.mean, point.se, point.replications
    )
}

/// Header plus one row per point.
pub fn write_points_csv<W: Write>(points: &[RatePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RATES_CSV_HEADER}")?;
    for p in points {
        write_point_row(p, &mut out)?;
    }
    Ok(())
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

pub fn run_rate_experiment(plan: &ExperimentPlan) -> Result<RateReport> {
    run_rate_experiment_with(plan, |_| {})
}

/// Runs every replicate at every `n`; `on_point` sees each finished size in order,
/// so callers can persist partial results before a later failure.
pub fn run_rate_experiment_with(
    plan: &ExperimentPlan,
    mut on_point: impl FnMut(&RatePoint),
) -> Result<RateReport> {
    let exp = Experiment::new(plan)?;
    let theory_exponent = rate_exponent(&plan.rate, plan.exponent_mode)?;
    let mut points = Vec::with_capacity(plan.n_grid.len());
    for &n in &plan.n_grid {
        let level = smoothing_for(&exp.scenario, &plan.rate, n)?;
        let tables = build_smoother(&exp.scenario, &plan.backend, level)?.tables(
            &exp.class,
            &plan.loss,
            plan.backend.window(),
        )?;
        let outcomes: Vec<Result<f64>> = (0..plan.replications)
            .into_par_iter()
            .map(|r| exp.trial(&tables, n, trial_seed(plan.seed, n, r)))
            .collect();
        let mut excess = Vec::with_capacity(outcomes.len());
        for (replicate, outcome) in outcomes.into_iter().enumerate() {
            excess.push(outcome.map_err(|e| Error::Trial {
                n,
                replicate,
                source: Box::new(e),
            })?);
        }
        let (mean, se) = mean_se(&excess);
        let point = RatePoint {
            n,
            mean,
            se,
            replications: plan.replications,
            smoothing: level,
        };
        log::info!("n={n}: mean excess {mean:.4e} (se {se:.2e}), {level:?}");
        on_point(&point);
        points.push(point);
    }
    let triples: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean, p.se)).collect();
    let fit = fit_rate_slope(&triples)?;
    Ok(RateReport {
        points,
        fit,
        theory_exponent,
        exponent_mode: plan.exponent_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::{ContaminationSpec, DensitySpec};

    pub(crate) fn plan(noise: ContaminationSpec, class: ClassSpec) -> ExperimentPlan {
        ExperimentPlan {
            scenario: ScenarioSpec {
                priors: None,
                density: DensitySpec::Linear { crossing: 0.5 },
                noise,
                alpha: 1.0,
                gamma: 2.0,
                lipschitz: 1.0,
                grid_points: 256,
            },
            class,
            backend: BackendSpec::Deconvolution {
                base_kernel: BaseKernelKind::OrderMFlatTop,
            },
            loss: LossSpec::HARD,
            n_grid: vec![64, 128],
            replications: 3,
            seed: 7,
            rate: RateConfig::new(2.0, 0.5, 2.0, 0.0).unwrap(),
            exponent_mode: ExponentMode::Deconv,
        }
    }

    fn thresholds(count: usize) -> ClassSpec {
        ClassSpec::Thresholds {
            lo: 0.0,
            hi: 1.0,
            count,
        }
    }

    #[test]
    fn singleton_class_has_zero_excess() {
        let p = plan(
            ContaminationSpec::Dirac,
            ClassSpec::Explicit {
                classifiers: vec![Classifier::Threshold {
                    t: 0.5,
                    upper: true,
                }],
                num_labels: 2,
            },
        );
        assert_eq!(run_trial(&p, 100, 3).unwrap(), 0.0);
    }

    #[test]
    fn trials_are_deterministic_and_nonnegative() {
        let p = plan(
            ContaminationSpec::Laplace { beta: vec![2.0] },
            thresholds(21),
        );
        let exp = Experiment::new(&p).unwrap();
        let s = exp.tables(200).unwrap();
        for seed in 0..5 {
            let a = exp.trial(&s, 200, seed).unwrap();
            assert!(a >= -1e-9);
            assert_eq!(a, exp.trial(&s, 200, seed).unwrap());
        }
    }

    #[test]
    fn minimal_report_has_two_points() {
        let mut p = plan(ContaminationSpec::Dirac, thresholds(11));
        p.replications = 1;
        let r = run_rate_experiment(&p).unwrap();
        assert_eq!(r.points.len(), 2);
        assert!(r.fit.slope.is_finite() || !r.fit.dropped.is_empty());
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("n,mean,se,R\n"));
    }

    #[test]
    fn plan_validation() {
        let mut p = plan(ContaminationSpec::Dirac, thresholds(11));
        p.n_grid = vec![128, 64];
        assert!(Experiment::new(&p).is_err());
        p.n_grid = vec![64];
        assert!(Experiment::new(&p).is_err());
        p.n_grid = vec![64, 128];
        p.replications = 0;
        assert!(Experiment::new(&p).is_err());
    }

    #[test]
    fn seeds_depend_on_all_inputs() {
        let s = trial_seed(1, 100, 0);
        assert_ne!(s, trial_seed(2, 100, 0));
        assert_ne!(s, trial_seed(1, 200, 0));
        assert_ne!(s, trial_seed(1, 100, 1));
        assert_eq!(s, trial_seed(1, 100, 0));
    }

    #[test]
    fn spectral_model_draws_inside_unit_interval() {
        let mut p = plan(
            ContaminationSpec::Spectral {
                beta: 1.0,
                k_max: 32,
            },
            thresholds(11),
        );
        p.backend = BackendSpec::Svd;
        let exp = Experiment::new(&p).unwrap();
        let mut rng = rng_from_seed(1);
        let s = exp.model.draw(500, &mut rng).unwrap();
        assert!(s.z.iter().all(|z| (0.0..=1.0).contains(z)));
        assert!(exp.trial(&exp.tables(500).unwrap(), 500, 4).unwrap() >= 0.0);
    }
}

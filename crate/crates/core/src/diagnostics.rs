//! Rate exponents, the log-log slope fitter and Monte-Carlo estimates of the
//! structural constants: Lipschitz factor `c(λ)`, sup bound `K(λ)`, bias
//! `a(λ)`, Bernstein constant and the indirect modulus of continuity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erm::{BiasVariant, RateConfig};
use crate::error::{config, Error, Result};
use crate::grid::{integrate_piecewise, Axis};
use crate::hypotheses::{
    bayes_in_class_on, true_risk_on, Classifier, Contamination, HypothesisClass, LossSpec,
    Scenario, ScenarioSpec,
};
use crate::noisy_risk::{empirical_risk, ModifiedLossTable, NoisySample, Smoother};
use crate::operators::rng_from_seed;
use crate::simulation::{build_smoother, BackendSpec, ClassSpec, ObservationModel, SmoothingLevel};

/// Which excess-risk bound to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentMode {
    /// General bound `(c(λ)/√n)^{2κ/(2κ+ρ-1)}` with `c(λ) ≍ λ^{-β̄}` at the
    /// prescribed bandwidth.
    Theorem1,
    #[default]
    Deconv,
    Svd,
    /// Hard loss with margin `α` on a boxed `d`-dimensional discriminant.
    HardLoss {
        alpha: f64,
        d: usize,
    },
}

/// Exponent `e` of the bound `n^{-e}` on the expected excess risk.
pub fn rate_exponent(cfg: &RateConfig, mode: ExponentMode) -> Result<f64> {
    match mode {
        ExponentMode::Theorem1 => {
            cfg.validate()?;
            let k = cfg.kappa;
            let growth = cfg.beta_bar * cfg.smoothing_exponent();
            Ok(2.0 * k / (2.0 * k + cfg.rho - 1.0) * (0.5 - growth))
        }
        ExponentMode::Deconv | ExponentMode::Svd => {
            cfg.validate()?;
            let k = cfg.kappa;
            let g = cfg.gamma;
            Ok(k * g / (g * (2.0 * k + cfg.rho - 1.0) + (2.0 * k - 1.0) * cfg.beta_bar))
        }
        ExponentMode::HardLoss { alpha, d } => {
            if !(alpha > 0.0 && alpha.is_finite()) || d == 0 {
                return config("hard-loss mode needs alpha > 0 and d >= 1");
            }
            if !(cfg.gamma > 0.0) || !(cfg.beta_bar >= 0.0) {
                return config("hard-loss mode needs gamma > 0 and beta_bar >= 0");
            }
            let g = cfg.gamma;
            Ok((alpha + 1.0) * g / (g * (alpha + 2.0) + d as f64 + 2.0 * cfg.beta_bar))
        }
    }
}

/// Weighted least-squares fit of `log mean` on `log n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% normal half-width of the slope.
    pub half_width: f64,
    /// Indices of points dropped for a nonpositive mean.
    pub dropped: Vec<usize>,
    pub weighted: bool,
}

/// Fits `(n, mean, se)` triples. Weights are `(mean/se)²`, the inverse variance
/// of `log mean`; if any standard error is zero the fit is unweighted.
pub fn fit_rate_slope(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for (i, &(n, mean, se)) in points.iter().enumerate() {
        if mean > 0.0 && n > 0.0 {
            kept.push((n.ln(), mean.ln(), mean, se));
        } else {
            log::warn!("dropping point n={n}: nonpositive mean {mean}");
            dropped.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Data(format!(
            "slope fit needs two points with positive means, got {}",
            kept.len()
        )));
    }
    let weighted = kept.iter().all(|p| p.3 > 0.0);
    let w: Vec<f64> = kept
        .iter()
        .map(|p| if weighted { (p.2 / p.3).powi(2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let mx = kept.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = kept.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = kept
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.0 - mx).powi(2))
        .sum();
    let sxy: f64 = kept
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.0 - mx) * (p.1 - my))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Data("slope fit needs distinct sample sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if weighted {
        (1.0 / sxx).sqrt()
    } else if kept.len() > 2 {
        let rss: f64 = kept
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (kept.len() - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        half_width: 1.96 * se,
        dropped,
        weighted,
    })
}

/// Unweighted least-squares slope of `ln y` on `ln x`, ignoring nonpositive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Reference measure for loss distances: `ν ⊗ P_Y`, or the joint law `P` of `(X, Y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    NuY,
    P,
}

/// `‖ℓ(g) - ℓ(g')‖_{L2(μ)}` by quadrature over `window`.
pub fn loss_distance(
    g: &Classifier,
    h: &Classifier,
    scenario: &Scenario,
    loss: &LossSpec,
    measure: Measure,
    window: (f64, f64),
) -> f64 {
    let axis = scenario.axis();
    let mut bps = g.breakpoints();
    bps.extend(h.breakpoints());
    let sq: f64 = (0..scenario.num_labels())
        .map(|y| {
            scenario.priors[y]
                * integrate_piecewise(&axis, window.0, window.1, &bps, |x| {
                    let d = loss.value(g.predict(x), y) - loss.value(h.predict(x), y);
                    let weight = match measure {
                        Measure::NuY => 1.0,
                        Measure::P => scenario.density_at(y, x),
                    };
                    d * d * weight
                })
        })
        .sum();
    sq.sqrt()
}

/// Densities of `Z | Y = y` on a table axis, for exact expectations of tables.
#[derive(Debug, Clone)]
pub struct ContaminatedLaw {
    priors: Vec<f64>,
    axis: Axis,
    values: Vec<Vec<f64>>,
    /// `b_k θ_{y,k}` when the contamination is spectral.
    image_coefficients: Option<Vec<Vec<f64>>>,
}

impl ContaminatedLaw {
    pub fn new(scenario: &Scenario, axis: Axis) -> Result<Self> {
        let domain = scenario.grid.axis_1d()?;
        let weights = domain.weights();
        let (values, image_coefficients) = match &scenario.contamination {
            Contamination::Noise(noise) if noise.is_dirac() => (
                scenario
                    .densities
                    .iter()
                    .map(|f| {
                        axis.nodes()
                            .iter()
                            .map(|&z| domain.interpolate(f, z))
                            .collect()
                    })
                    .collect(),
                None,
            ),
            Contamination::Noise(noise) => (
                scenario
                    .densities
                    .iter()
                    .map(|f| {
                        axis.nodes()
                            .par_iter()
                            .map(|&z| {
                                (0..domain.len)
                                    .map(|i| {
                                        weights[i] * f[i] * noise.density(0, z - domain.node(i))
                                    })
                                    .sum()
                            })
                            .collect()
                    })
                    .collect(),
                None,
            ),
            Contamination::Operator(op) => {
                let Some(coeffs) = &scenario.coefficients else {
                    return Err(Error::Model("spectral scenario has no coefficients".into()));
                };
                let images: Vec<Vec<f64>> = coeffs
                    .iter()
                    .map(|c| {
                        c.theta
                            .iter()
                            .enumerate()
                            .map(|(k, t)| op.singular_value(k) * t)
                            .collect()
                    })
                    .collect();
                let values = images
                    .iter()
                    .map(|th| {
                        let cv = crate::operators::CoefficientVector { theta: th.clone() };
                        cv.tabulate(&axis)
                    })
                    .collect();
                (values, Some(images))
            }
        };
        Ok(ContaminatedLaw {
            priors: scenario.priors.clone(),
            axis,
            values,
            image_coefficients,
        })
    }

    /// `E ℓ_λ(g, (Z, Y)) = Σ_y p_y ∫ table_y(z) h_y(z) dz`.
    pub fn expected_loss(&self, table: &ModifiedLossTable) -> Result<f64> {
        let mut acc = 0.0;
        for (y, p) in self.priors.iter().enumerate() {
            let row = table
                .values
                .get(y)
                .ok_or_else(|| Error::Data(format!("no modified-loss table for label {y}")))?;
            let term = match (&table.spectral, &self.image_coefficients) {
                // orthonormality: ∫ ℓ_N A f_y = Σ_k (b_k^{-1} c_k)(b_k θ_k)
                (Some(coefs), Some(images)) => {
                    coefs[y].iter().zip(&images[y]).map(|(a, b)| a * b).sum()
                }
                _ => {
                    if table.axis != self.axis {
                        return config("table axis differs from the law's axis");
                    }
                    let prod: Vec<f64> = row
                        .iter()
                        .zip(&self.values[y])
                        .map(|(a, b)| a * b)
                        .collect();
                    self.axis.trapezoid(&prod)
                }
            };
            acc += p * term;
        }
        Ok(acc)
    }
}

/// Values of every table at every observation: `out[g][i] = ℓ_λ(g, (z_i, y_i))`.
fn table_values(tables: &[ModifiedLossTable], sample: &NoisySample) -> Result<Vec<Vec<f64>>> {
    tables
        .par_iter()
        .map(|t| {
            sample
                .z
                .iter()
                .zip(&sample.y)
                .map(|(&z, &y)| t.value(z, y))
                .collect()
        })
        .collect()
}

/// Ratios `‖ℓ_λ(g) - ℓ_λ(g')‖_{L2(P̃)} / ‖ℓ(g) - ℓ(g')‖_{L2(μ)}` over `pairs`; the
/// numerator is a Monte-Carlo norm over `mc_n` contaminated draws.
#[allow(clippy::too_many_arguments)]
pub fn empirical_lipschitz(
    scenario: &Scenario,
    smoother: &Smoother,
    class: &HypothesisClass,
    loss: &LossSpec,
    pairs: &[(usize, usize)],
    mc_n: usize,
    seed: u64,
    measure: Measure,
) -> Result<Vec<f64>> {
    let tables = smoother.tables(class, loss, None)?;
    let sample = ObservationModel::new(scenario)?.draw(mc_n, &mut rng_from_seed(seed))?;
    let vals = table_values(&tables, &sample)?;
    let domain = scenario.domain();
    let ratios = pairs
        .par_iter()
        .filter_map(|&(a, b)| {
            let den = loss_distance(
                &class.classifiers[a],
                &class.classifiers[b],
                scenario,
                loss,
                measure,
                domain,
            );
            if den <= 1e-8 {
                log::debug!("skipping degenerate pair ({a}, {b})");
                return None;
            }
            let num = vals[a]
                .iter()
                .zip(&vals[b])
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
                / mc_n as f64;
            Some(num.sqrt() / den)
        })
        .collect();
    Ok(ratios)
}

/// `max_g sup_z |ℓ_λ(g, (z, y))|` over the tabulated range.
pub fn empirical_sup(smoother: &Smoother, class: &HypothesisClass, loss: &LossSpec) -> Result<f64> {
    Ok(smoother
        .tables(class, loss, None)?
        .iter()
        .map(|t| t.sup_norm())
        .fold(0.0, f64::max))
}

/// `r` in the bias definition: `1/κ` when the loss difference equals its square,
/// `1/(2κ)` otherwise.
pub fn bias_slack(cfg: &RateConfig) -> f64 {
    match cfg.bias_variant {
        BiasVariant::SquaredLoss => 1.0 / cfg.kappa,
        BiasVariant::General => 1.0 / (2.0 * cfg.kappa),
    }
}

/// `max_g [(R - R^λ)(g) - (R - R^λ)(g*) - r (R(g) - R(g*))]`, floored at 0, with
/// `R^λ` computed exactly against the contaminated law.
pub fn empirical_bias(
    scenario: &Scenario,
    smoother: &Smoother,
    class: &HypothesisClass,
    loss: &LossSpec,
    oracle_index: usize,
    slack: f64,
) -> Result<f64> {
    let law = ContaminatedLaw::new(scenario, smoother.observation_axis())?;
    let tables = smoother.tables(class, loss, None)?;
    let domain = scenario.domain();
    let gaps = tables
        .par_iter()
        .map(|t| {
            let r = true_risk_on(&t.classifier, scenario, loss, domain);
            Ok((r, r - law.expected_loss(t)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (r_star, gap_star) = gaps[oracle_index];
    Ok(gaps
        .iter()
        .map(|(r, gap)| gap - gap_star - slack * (r - r_star))
        .fold(0.0, f64::max))
}

/// Empirical Bernstein constant `max_g ‖ℓ(g) - ℓ(g*)‖²_{L2(μ)} / (R(g) - R(g*))^{1/κ}`
/// over classifiers with excess above 1e-8 (0 if there are none).
pub fn bernstein_ratio(
    scenario: &Scenario,
    class: &HypothesisClass,
    oracle_index: usize,
    loss: &LossSpec,
    kappa: f64,
    measure: Measure,
) -> Result<f64> {
    if !(kappa > 1.0) {
        return config(format!("kappa must be > 1, got {kappa}"));
    }
    let domain = scenario.domain();
    let oracle = bayes_in_class_on(class, scenario, loss, domain);
    let star = &class.classifiers[oracle_index];
    Ok(class
        .classifiers
        .par_iter()
        .zip(&oracle.risks)
        .filter_map(|(g, r)| {
            let excess = r - oracle.risks[oracle_index];
            (excess > 1e-8).then(|| {
                loss_distance(g, star, scenario, loss, measure, domain).powi(2)
                    / excess.powf(1.0 / kappa)
            })
        })
        .reduce(|| 0.0, f64::max))
}

/// `ω̃_n(δ)`: Monte-Carlo mean over `reps` samples of size `n` of
/// `sup |(P̃_n - P̃)(ℓ_λ(g) - ℓ_λ(g'))|` over pairs within `δ` in `L2(μ)`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_modulus(
    scenario: &Scenario,
    smoother: &Smoother,
    class: &HypothesisClass,
    loss: &LossSpec,
    delta: f64,
    n: usize,
    reps: usize,
    seed: u64,
    measure: Measure,
) -> Result<f64> {
    if !(delta >= 0.0) || reps == 0 || n == 0 {
        return config("modulus needs delta >= 0, n >= 1 and reps >= 1");
    }
    let law = ContaminatedLaw::new(scenario, smoother.observation_axis())?;
    let tables = smoother.tables(class, loss, None)?;
    let truth = tables
        .iter()
        .map(|t| law.expected_loss(t))
        .collect::<Result<Vec<f64>>>()?;
    let domain = scenario.domain();
    let m = class.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            loss_distance(
                &class.classifiers[a],
                &class.classifiers[b],
                scenario,
                loss,
                measure,
                domain,
            ) <= delta
        })
        .collect();
    if pairs.is_empty() {
        log::warn!("no distinct pair within delta = {delta}; modulus is 0");
        return Ok(0.0);
    }
    let model = ObservationModel::new(scenario)?;
    let sups = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sample = model.draw(
                n,
                &mut rng_from_seed(crate::simulation::trial_seed(seed, n, r)),
            )?;
            let gaps = tables
                .iter()
                .zip(&truth)
                .map(|(t, e)| Ok(empirical_risk(t, &sample)? - e))
                .collect::<Result<Vec<f64>>>()?;
            Ok(pairs
                .iter()
                .map(|&(a, b)| (gaps[a] - gaps[b]).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sups.iter().sum::<f64>() / reps as f64)
}

fn default_mc_n() -> usize {
    20_000
}

fn default_modulus_n() -> usize {
    1_000
}

fn default_modulus_reps() -> usize {
    50
}

fn default_loss() -> LossSpec {
    LossSpec::HARD
}

/// Inputs of a diagnostics sweep over smoothing levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsPlan {
    pub scenario: ScenarioSpec,
    pub class: ClassSpec,
    pub backend: BackendSpec,
    #[serde(default = "default_loss")]
    pub loss: LossSpec,
    pub rate: RateConfig,
    /// Bandwidths or cutoffs to sweep.
    pub levels: Vec<SmoothingLevel>,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    pub seed: u64,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_modulus_n")]
    pub modulus_n: usize,
    #[serde(default = "default_modulus_reps")]
    pub modulus_reps: usize,
}

/// A quantity measured at each smoothing level, with its log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    /// `λ` or `N`.
    pub parameter: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: Option<f64>,
}

impl ScalingSeries {
    fn new(parameter: Vec<f64>, values: Vec<f64>) -> Self {
        let slope = log_log_slope(&parameter, &values);
        ScalingSeries {
            parameter,
            values,
            slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusPoint {
    pub delta: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Max Lipschitz ratio `ĉ`.
    pub lipschitz: ScalingSeries,
    /// `K̂`.
    pub sup: ScalingSeries,
    /// `â`.
    pub bias: ScalingSeries,
    pub bernstein: f64,
    /// Modulus at the first smoothing level.
    pub modulus: Vec<ModulusPoint>,
}

fn level_value(level: SmoothingLevel) -> f64 {
    match level {
        SmoothingLevel::Bandwidth(l) => l,
        SmoothingLevel::Cutoff(n) => n as f64,
    }
}

pub fn run_diagnostics(plan: &DiagnosticsPlan) -> Result<DiagnosticsReport> {
    plan.rate.validate()?;
    if plan.levels.is_empty() || plan.mc_n == 0 {
        return config("diagnostics need at least one smoothing level and mc_n >= 1");
    }
    let scenario = Scenario::from_spec(&plan.scenario)?;
    let class = plan.class.build()?;
    let oracle = bayes_in_class_on(&class, &scenario, &plan.loss, scenario.domain());
    let m = class.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let slack = bias_slack(&plan.rate);
    let mut params = Vec::new();
    let (mut lip, mut sup, mut bias) = (Vec::new(), Vec::new(), Vec::new());
    let mut smoothers = Vec::new();
    for &level in &plan.levels {
        let smoother = build_smoother(&scenario, &plan.backend, level)?;
        let ratios = empirical_lipschitz(
            &scenario,
            &smoother,
            &class,
            &plan.loss,
            &pairs,
            plan.mc_n,
            plan.seed,
            plan.measure,
        )?;
        params.push(level_value(level));
        lip.push(ratios.iter().copied().fold(0.0, f64::max));
        sup.push(empirical_sup(&smoother, &class, &plan.loss)?);
        bias.push(empirical_bias(
            &scenario,
            &smoother,
            &class,
            &plan.loss,
            oracle.index,
            slack,
        )?);
        log::info!(
            "level {level:?}: c={:.4e} K={:.4e} a={:.4e}",
            lip.last().unwrap(),
            sup.last().unwrap(),
            bias.last().unwrap()
        );
        smoothers.push(smoother);
    }
    let bernstein = bernstein_ratio(
        &scenario,
        &class,
        oracle.index,
        &plan.loss,
        plan.rate.kappa,
        plan.measure,
    )?;
    let modulus = plan
        .deltas
        .iter()
        .map(|&delta| {
            Ok(ModulusPoint {
                delta,
                value: empirical_modulus(
                    &scenario,
                    &smoothers[0],
                    &class,
                    &plan.loss,
                    delta,
                    plan.modulus_n,
                    plan.modulus_reps,
                    plan.seed,
                    plan.measure,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        lipschitz: ScalingSeries::new(params.clone(), lip),
        sup: ScalingSeries::new(params.clone(), sup),
        bias: ScalingSeries::new(params, bias),
        bernstein,
        modulus,
    })
}

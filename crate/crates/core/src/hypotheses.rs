//! Classifiers, bounded losses, synthetic scenarios and the true risk
//! `R(g) = Σ_y p(y) ∫ ℓ(g(x), y) f_y(x) dx`.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::{hat_moments, Axis, Grid};
use crate::kernels::{NoiseModel, NoiseSpec};
use crate::operators::{CoefficientVector, SpectralOperator, DEFAULT_K_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `|y - g(x)|`
    Hard,
    /// `min(max(0, 1 - s u), clip)` with `s = 2y - 1`, `u = 2g(x) - 1`.
    HingeClipped,
    /// `min((y - g(x))², clip)`
    QuadraticClipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Upper clip for the convex losses, in `(0, 1]`.
    #[serde(default = "unit_clip")]
    pub clip: f64,
}

fn unit_clip() -> f64 {
    1.0
}

impl LossSpec {
    pub const HARD: LossSpec = LossSpec {
        kind: LossKind::Hard,
        clip: 1.0,
    };

    pub fn new(kind: LossKind, clip: f64) -> Result<Self> {
        if !(clip > 0.0 && clip <= 1.0) {
            return config(format!("loss clip must lie in (0, 1], got {clip}"));
        }
        Ok(LossSpec { kind, clip })
    }

    /// Loss value without label validation.
    pub fn value(&self, prediction: f64, label: usize) -> f64 {
        let y = label as f64;
        match self.kind {
            LossKind::Hard => (y - prediction).abs().min(1.0),
            LossKind::HingeClipped => {
                let s = 2.0 * y - 1.0;
                let u = 2.0 * prediction - 1.0;
                (1.0 - s * u).max(0.0).min(self.clip)
            }
            LossKind::QuadraticClipped => (y - prediction).powi(2).min(self.clip),
        }
    }
}

/// `ℓ(prediction, label)` in `[0, 1]`; labels must lie in `0..num_labels`.
pub fn loss_eval(loss: &LossSpec, prediction: f64, label: usize, num_labels: usize) -> Result<f64> {
    if label >= num_labels {
        return Err(Error::Data(format!(
            "label {label} outside 0..{num_labels}"
        )));
    }
    Ok(loss.value(prediction, label))
}

/// Binary classifiers on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Constant {
        label: u8,
    },
    /// Predicts 1 iff `x > t` (`upper`) or iff `x <= t` (otherwise).
    Threshold {
        t: f64,
        upper: bool,
    },
    /// Predicts 1 iff `lo < x <= hi` (`inside`), or the complement.
    Interval {
        lo: f64,
        hi: f64,
        inside: bool,
    },
    /// Soft threshold: prediction rises linearly from 0 to 1 across `center ± width/2`.
    Ramp {
        center: f64,
        width: f64,
        upper: bool,
    },
}

impl Classifier {
    pub fn predict(&self, x: f64) -> f64 {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        match *self {
            Classifier::Constant { label } => label as f64,
            Classifier::Threshold { t, upper } => b((x > t) == upper),
            Classifier::Interval { lo, hi, inside } => b((x > lo && x <= hi) == inside),
            Classifier::Ramp {
                center,
                width,
                upper,
            } => {
                let p = ((x - center) / width + 0.5).clamp(0.0, 1.0);
                if upper {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }

    /// Points where the prediction is discontinuous or not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Classifier::Constant { .. } => Vec::new(),
            Classifier::Threshold { t, .. } => vec![t],
            Classifier::Interval { lo, hi, .. } => vec![lo, hi],
            Classifier::Ramp { center, width, .. } => {
                vec![center - 0.5 * width, center, center + 0.5 * width]
            }
        }
    }
}

/// Finite ordered hypothesis class over labels `0..num_labels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisClass {
    pub classifiers: Vec<Classifier>,
    pub num_labels: usize,
}

impl HypothesisClass {
    pub fn new(classifiers: Vec<Classifier>, num_labels: usize) -> Result<Self> {
        if classifiers.is_empty() {
            return config("hypothesis class must be nonempty");
        }
        if num_labels < 2 {
            return config("at least two labels are required");
        }
        Ok(HypothesisClass {
            classifiers,
            num_labels,
        })
    }

    /// `count` upper thresholds equally spaced over `[lo, hi]` (both included).
    pub fn thresholds(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 || !(hi >= lo) {
            return config("threshold class needs count >= 1 and hi >= lo");
        }
        let classifiers = (0..count)
            .map(|j| {
                let t = if count == 1 {
                    lo
                } else {
                    lo + (hi - lo) * j as f64 / (count - 1) as f64
                };
                Classifier::Threshold { t, upper: true }
            })
            .collect();
        Self::new(classifiers, 2)
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }
}

/// Moments of `x ↦ ℓ(g(x), y)` against the hat basis of `axis`, restricted to `window`.
pub fn loss_moments(
    g: &Classifier,
    label: usize,
    loss: &LossSpec,
    axis: &Axis,
    window: (f64, f64),
) -> Vec<f64> {
    hat_moments(axis, window.0, window.1, &g.breakpoints(), |x| {
        loss.value(g.predict(x), label)
    })
}

/// Density families for the class conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// `f_1(x) = 2x`, `f_0(x) = 2(1 - x)` on `[0, 1]`, with priors chosen so the
    /// regression function crosses 1/2 at `crossing`.
    Linear {
        #[serde(default = "half")]
        crossing: f64,
    },
}

fn half() -> f64 {
    0.5
}

/// Contamination: additive noise or the spectral operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContaminationSpec {
    Dirac,
    Laplace {
        beta: Vec<f64>,
    },
    Spectral {
        beta: f64,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_grid_points() -> usize {
    1024
}

fn default_lipschitz() -> f64 {
    1.0
}

/// JSON description of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<f64>>,
    pub density: DensitySpec,
    pub noise: ContaminationSpec,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Contamination {
    Noise(NoiseModel),
    Operator(SpectralOperator),
}

/// Class priors, class-conditional densities on a grid, the contamination model
/// and the declared regularity parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: Grid,
    pub priors: Vec<f64>,
    /// Nodal values of `f_y` (piecewise-linear between nodes).
    pub densities: Vec<Vec<f64>>,
    pub contamination: Contamination,
    /// Cosine coefficients of each `f_y` when the contamination is spectral.
    pub coefficients: Option<Vec<CoefficientVector>>,
    /// Margin parameter α; `None` stands for α = ∞.
    pub alpha: Option<f64>,
    pub gamma: f64,
    pub lipschitz: f64,
    pub spec: Option<ScenarioSpec>,
}

impl Scenario {
    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self> {
        let DensitySpec::Linear { crossing } = spec.density;
        let mut scenario =
            make_margin_scenario(spec.alpha, &spec.noise, crossing, spec.grid_points)?;
        if let Some(p) = &spec.priors {
            scenario.priors = p.clone();
        }
        scenario.gamma = spec.gamma;
        scenario.lipschitz = spec.lipschitz;
        scenario.spec = Some(spec.clone());
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let axis = self.grid.axis_1d()?;
        if self.priors.len() != self.densities.len() || self.priors.len() < 2 {
            return config("priors and densities must describe the same >= 2 labels");
        }
        let total: f64 = self.priors.iter().sum();
        if self.priors.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return config(format!(
                "priors must be nonnegative and sum to 1, got {total}"
            ));
        }
        for (y, f) in self.densities.iter().enumerate() {
            if f.len() != axis.len || f.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Model(format!(
                    "density f_{y} is not a nonnegative grid function"
                )));
            }
            let mass = axis.trapezoid(f);
            if (mass - 1.0).abs() > 1e-6 {
                return Err(Error::Model(format!("density f_{y} integrates to {mass}")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return config("margin parameter alpha must be positive");
            }
        }
        if !(self.gamma > 0.0) {
            return config("gamma must be positive");
        }
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        self.priors.len()
    }

    pub fn axis(&self) -> Axis {
        self.grid.axis(0)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid.lower[0], self.grid.upper[0])
    }

    /// `κ = (α + 1) / α`.
    pub fn kappa(&self) -> Option<f64> {
        self.alpha.map(|a| (a + 1.0) / a)
    }

    /// Decay exponents of the contamination (`β_i` or the operator's `β`).
    pub fn beta(&self) -> Vec<f64> {
        match &self.contamination {
            Contamination::Noise(n) => n.decay_exponents.clone(),
            Contamination::Operator(op) => vec![op.beta],
        }
    }

    pub fn density_at(&self, label: usize, x: f64) -> f64 {
        self.axis().interpolate(&self.densities[label], x)
    }

    /// `P(Y = 1 | X = x)` for binary scenarios.
    pub fn regression(&self, x: f64) -> f64 {
        let a = self.priors[1] * self.density_at(1, x);
        let b = self.priors[0] * self.density_at(0, x);
        if a + b > 0.0 {
            a / (a + b)
        } else {
            0.5
        }
    }
}

/// Linear α = 1 scenario: `f_1 = 2x`, `f_0 = 2(1 - x)` and priors `p_1 = 1 - x*`,
/// `p_0 = x*`, so that `P(Y=1|X=x)` crosses 1/2 at `x*` with a linear slope.
pub fn make_margin_scenario(
    alpha: f64,
    contamination: &ContaminationSpec,
    crossing: f64,
    grid_points: usize,
) -> Result<Scenario> {
    if alpha != 1.0 {
        return config(format!(
            "only alpha = 1 margin scenarios are available, got {alpha}"
        ));
    }
    if !(crossing > 0.0 && crossing < 1.0) {
        return config(format!("crossing {crossing} must be interior to (0, 1)"));
    }
    let grid = Grid::unit(grid_points)?;
    let axis = grid.axis(0);
    let (densities, contamination, coefficients) = match contamination {
        ContaminationSpec::Dirac => (
            linear_densities(&axis),
            Contamination::Noise(NoiseModel::dirac(1)),
            None,
        ),
        ContaminationSpec::Laplace { beta } => {
            if beta.len() != 1 {
                return config("the linear scenario is one-dimensional");
            }
            (
                linear_densities(&axis),
                Contamination::Noise(NoiseModel::from_spec(NoiseSpec::Laplace {
                    beta: beta.clone(),
                })?),
                None,
            )
        }
        ContaminationSpec::Spectral { beta, k_max } => {
            let op = SpectralOperator::new(*beta, *k_max)?;
            let coeffs = vec![
                CoefficientVector::linear_density(false, *k_max),
                CoefficientVector::linear_density(true, *k_max),
            ];
            let dens = coeffs
                .iter()
                .map(|c| c.tabulate(&axis).into_iter().map(|v| v.max(0.0)).collect())
                .collect();
            (dens, Contamination::Operator(op), Some(coeffs))
        }
    };
    let scenario = Scenario {
        grid,
        priors: vec![crossing, 1.0 - crossing],
        densities,
        contamination,
        coefficients,
        alpha: Some(alpha),
        gamma: 1.0,
        lipschitz: 1.0,
        spec: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn linear_densities(axis: &Axis) -> Vec<Vec<f64>> {
    let nodes = axis.nodes();
    vec![
        nodes.iter().map(|x| 2.0 * (1.0 - x)).collect(),
        nodes.iter().map(|x| 2.0 * x).collect(),
    ]
}

/// True risk over the whole domain.
pub fn true_risk(g: &Classifier, scenario: &Scenario, loss: &LossSpec) -> f64 {
    true_risk_on(g, scenario, loss, scenario.domain())
}

/// True risk with the integral restricted to `window` (`R_{ℓ,K}`).
pub fn true_risk_on(
    g: &Classifier,
    scenario: &Scenario,
    loss: &LossSpec,
    window: (f64, f64),
) -> f64 {
    let axis = scenario.axis();
    (0..scenario.num_labels())
        .map(|y| {
            let m = loss_moments(g, y, loss, &axis, window);
            scenario.priors[y]
                * m.iter()
                    .zip(&scenario.densities[y])
                    .map(|(a, f)| a * f)
                    .sum::<f64>()
        })
        .sum()
}

/// The in-class risk minimizer `g*`.
#[derive(Debug, Clone, PartialEq)]
pub struct InClassOracle {
    pub index: usize,
    pub risk: f64,
    pub risks: Vec<f64>,
}

/// Exhaustive argmin of the true risk; ties go to the lowest index.
pub fn bayes_in_class(
    class: &HypothesisClass,
    scenario: &Scenario,
    loss: &LossSpec,
) -> InClassOracle {
    bayes_in_class_on(class, scenario, loss, scenario.domain())
}

pub fn bayes_in_class_on(
    class: &HypothesisClass,
    scenario: &Scenario,
    loss: &LossSpec,
    window: (f64, f64),
) -> InClassOracle {
    let risks: Vec<f64> = class
        .classifiers
        .iter()
        .map(|g| true_risk_on(g, scenario, loss, window))
        .collect();
    let index = argmin(&risks);
    InClassOracle {
        index,
        risk: risks[index],
        risks,
    }
}

/// Lowest index attaining the minimum.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> Scenario {
        make_margin_scenario(1.0, &ContaminationSpec::Dirac, 0.5, 1024).unwrap()
    }

    #[test]
    fn hard_loss_values() {
        let l = LossSpec::HARD;
        assert_eq!(loss_eval(&l, 1.0, 1, 2).unwrap(), 0.0);
        assert_eq!(loss_eval(&l, 0.0, 1, 2).unwrap(), 1.0);
        assert!(loss_eval(&l, 0.0, 2, 2).is_err());
    }

    #[test]
    fn convex_losses_are_clipped() {
        let hinge = LossSpec::new(LossKind::HingeClipped, 1.0).unwrap();
        assert_eq!(hinge.value(0.0, 1), 1.0);
        assert_eq!(hinge.value(1.0, 1), 0.0);
        assert!((hinge.value(0.75, 1) - 0.5).abs() < 1e-15);
        let quad = LossSpec::new(LossKind::QuadraticClipped, 0.5).unwrap();
        assert_eq!(quad.value(0.0, 1), 0.5);
        assert!(LossSpec::new(LossKind::Hard, 1.5).is_err());
        for p in [0.0, 0.3, 0.5, 1.0] {
            for y in [0, 1] {
                for l in [LossSpec::HARD, hinge, quad] {
                    let v = l.value(p, y);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn hard_loss_difference_identity() {
        let g = Classifier::Threshold {
            t: 0.3,
            upper: true,
        };
        let h = Classifier::Interval {
            lo: 0.2,
            hi: 0.6,
            inside: true,
        };
        for i in 0..50 {
            let x = i as f64 / 49.0;
            for y in [0, 1] {
                let lhs = (LossSpec::HARD.value(g.predict(x), y)
                    - LossSpec::HARD.value(h.predict(x), y))
                .abs();
                assert_eq!(lhs, (g.predict(x) - h.predict(x)).abs());
            }
        }
    }

    #[test]
    fn uniform_scenario_risk_is_half() {
        let mut s = linear();
        s.densities = vec![vec![1.0; 1024]; 2];
        for g in [
            Classifier::Threshold {
                t: 0.37,
                upper: true,
            },
            Classifier::Constant { label: 1 },
            Classifier::Interval {
                lo: 0.1,
                hi: 0.2,
                inside: false,
            },
        ] {
            assert!((true_risk(&g, &s, &LossSpec::HARD) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_scenario_threshold_risk() {
        let s = linear();
        for t in [0.0, 0.13, 0.5, 0.777, 1.0] {
            let g = Classifier::Threshold { t, upper: true };
            let expected = (t * t + (1.0 - t) * (1.0 - t)) / 2.0;
            assert!((true_risk(&g, &s, &LossSpec::HARD) - expected).abs() < 1e-6);
        }
        let always_one = Classifier::Constant { label: 1 };
        assert!((true_risk(&always_one, &s, &LossSpec::HARD) - s.priors[0]).abs() < 1e-6);
    }

    #[test]
    fn bayes_in_class_examples() {
        let s = linear();
        let class = HypothesisClass::thresholds(0.0, 1.0, 101).unwrap();
        let oracle = bayes_in_class(&class, &s, &LossSpec::HARD);
        assert_eq!(oracle.index, 50);
        assert!((oracle.risk - 0.25).abs() < 1e-6);

        let single = HypothesisClass::thresholds(0.3, 0.3, 1).unwrap();
        assert_eq!(bayes_in_class(&single, &s, &LossSpec::HARD).index, 0);

        let g = Classifier::Threshold {
            t: 0.5,
            upper: true,
        };
        let dup = HypothesisClass::new(
            vec![
                Classifier::Threshold {
                    t: 0.2,
                    upper: true,
                },
                g,
                g,
            ],
            2,
        )
        .unwrap();
        assert_eq!(bayes_in_class(&dup, &s, &LossSpec::HARD).index, 1);
    }

    #[test]
    fn margin_scenario_properties() {
        let s = linear();
        assert_eq!(s.kappa(), Some(2.0));
        for f in &s.densities {
            assert!((s.axis().trapezoid(f) - 1.0).abs() < 1e-6);
        }
        assert!(make_margin_scenario(2.0, &ContaminationSpec::Dirac, 0.5, 64).is_err());
        assert!(make_margin_scenario(1.0, &ContaminationSpec::Dirac, 1.0, 64).is_err());

        let shifted = make_margin_scenario(1.0, &ContaminationSpec::Dirac, 0.3, 1024).unwrap();
        assert!((shifted.regression(0.3) - 0.5).abs() < 1e-9);
        let class = HypothesisClass::thresholds(0.0, 1.0, 101).unwrap();
        let oracle = bayes_in_class(&class, &shifted, &LossSpec::HARD);
        assert_eq!(oracle.index, 30);
        assert!((oracle.risk - 0.3 * 0.7).abs() < 1e-6);
    }

    #[test]
    fn scenario_json_round_trip() {
        let json = r#"{"density":{"kind":"linear","crossing":0.5},
                       "noise":{"kind":"laplace","beta":[2.0]},
                       "alpha":1.0,"gamma":2.0}"#;
        let spec: ScenarioSpec = serde_json::from_str(json).unwrap();
        let s = Scenario::from_spec(&spec).unwrap();
        assert_eq!(s.beta(), vec![2.0]);
        assert_eq!(s.gamma, 2.0);
        let back: ScenarioSpec =
            serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"density":{"kind":"linear"},"noise":{"kind":"dirac"},"alpha":1,"gamma":1,"extra":3}"#;
        assert!(serde_json::from_str::<ScenarioSpec>(bad).is_err());
    }
}

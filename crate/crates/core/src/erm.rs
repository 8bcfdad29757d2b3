//! λ-ERM over a finite hypothesis class and the smoothing-parameter rules.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::hypotheses::{argmin, Classifier, HypothesisClass, LossSpec};
use crate::noisy_risk::{empirical_risk, ModifiedLossTable, NoisySample, Smoother, Smoothing};

/// Which bias bound drives the bandwidth: the general one, or the sharper one
/// available when the loss difference equals its square.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasVariant {
    #[default]
    General,
    SquaredLoss,
}

/// Regularity parameters that set the bandwidth, the cutoff and the predicted rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub kappa: f64,
    pub rho: f64,
    pub gamma: f64,
    /// `β̄ = Σ β_i` for deconvolution, or the operator's `β` for the spectral backend.
    pub beta_bar: f64,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default)]
    pub bias_variant: BiasVariant,
}

fn one() -> usize {
    1
}

impl RateConfig {
    pub fn new(kappa: f64, rho: f64, gamma: f64, beta_bar: f64) -> Result<Self> {
        let cfg = RateConfig {
            kappa,
            rho,
            gamma,
            beta_bar,
            d: 1,
            bias_variant: BiasVariant::General,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return config(format!("kappa must be > 1, got {}", self.kappa));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return config(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return config(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.beta_bar >= 0.0 && self.beta_bar.is_finite()) {
            return config(format!("beta_bar must be >= 0, got {}", self.beta_bar));
        }
        if self.d == 0 {
            return config("d must be >= 1");
        }
        Ok(())
    }

    /// `(2κ-1) / (2γ(2κ+ρ-1) + 2(2κ-1)β̄)`, shared by the bandwidth and the cutoff.
    pub fn smoothing_exponent(&self) -> f64 {
        let k = self.kappa;
        (2.0 * k - 1.0)
            / (2.0 * self.gamma * (2.0 * k + self.rho - 1.0)
                + 2.0 * (2.0 * k - 1.0) * self.beta_bar)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return config("sample size must be >= 1");
    }
    Ok(())
}

/// `λ_i = n^{-(2κ-1)/(2γ(2κ+ρ-1)+2(2κ-1)β̄)}` in every dimension.
pub fn select_bandwidth(cfg: &RateConfig, n: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_n(n)?;
    Ok(vec![(n as f64).powf(-cfg.smoothing_exponent()); cfg.d])
}

/// `N = n^{(2κ-1)/(2γ(2κ+ρ-1)+2(2κ-1)β)}`, rounded to nearest and at least 1.
pub fn select_cutoff(cfg: &RateConfig, n: usize) -> Result<usize> {
    cfg.validate()?;
    check_n(n)?;
    Ok(((n as f64).powf(cfg.smoothing_exponent()).round() as usize).max(1))
}

/// Outcome of an exhaustive λ-ERM scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub index: usize,
    pub classifier: Classifier,
    pub empirical_risk: f64,
    pub smoothing: Smoothing,
    /// Empirical risk of every classifier, in class order.
    pub risks: Vec<f64>,
    pub table_build_seconds: f64,
    pub counts: Vec<usize>,
}

/// Index and value of the smallest empirical risk (lowest index on ties), plus all risks.
pub fn minimize_tables(
    tables: &[ModifiedLossTable],
    sample: &NoisySample,
) -> Result<(usize, Vec<f64>)> {
    if tables.is_empty() {
        return config("hypothesis class is empty");
    }
    let risks = tables
        .par_iter()
        .map(|t| empirical_risk(t, sample))
        .collect::<Result<Vec<f64>>>()?;
    Ok((argmin(&risks), risks))
}

/// `ĝ = argmin_g (1/n) Σ ℓ_λ(g, (Z_i, Y_i))` over the whole class.
///
/// `window = Some(K)` minimizes the restricted risk built on `ℓ_{λ,K}`.
pub fn minimize(
    class: &HypothesisClass,
    sample: &NoisySample,
    smoother: &Smoother,
    loss: &LossSpec,
    window: Option<(f64, f64)>,
) -> Result<FitResult> {
    if class.is_empty() {
        return config("hypothesis class is empty");
    }
    let started = Instant::now();
    let tables = smoother.tables(class, loss, window)?;
    let table_build_seconds = started.elapsed().as_secs_f64();
    let (index, risks) = minimize_tables(&tables, sample)?;
    Ok(FitResult {
        index,
        classifier: class.classifiers[index],
        empirical_risk: risks[index],
        smoothing: smoother.smoothing(),
        risks,
        table_build_seconds,
        counts: sample.counts(),
    })
}

//! Empirical risk minimization from indirect observations.
//!
//! The inputs `X` of a classification problem are only seen through a known
//! contamination: additive noise `Z = X + ε`, or a compact operator `A` with
//! polynomially decaying singular values. The empirical risk is built by
//! replacing the class-conditional densities with deconvolution kernel or
//! spectral cut-off estimators, which turns every loss `ℓ(g(x), y)` into a
//! modified loss `ℓ_λ(g, (z, y))` evaluated directly at the observations.
//!
//! Modules, bottom-up:
//! - [`grid`]: uniform grids and quadrature,
//! - [`kernels`]: base kernels, noise models and deconvolution kernels,
//! - [`operators`]: forward models and projection estimators,
//! - [`hypotheses`]: classifiers, losses, scenarios and true risks,
//! - [`noisy_risk`]: modified-loss tables and empirical risks,
//! - [`erm`]: bandwidth/cut-off rules and the exhaustive minimizer,
//! - [`simulation`]: Monte-Carlo excess-risk experiments,
//! - [`diagnostics`]: rate exponents and measured structural constants.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod erm;
pub mod error;
pub mod grid;
pub mod hypotheses;
pub mod kernels;
pub mod noisy_risk;
pub mod operators;
pub mod simulation;

pub use diagnostics::{rate_exponent, DiagnosticsPlan, DiagnosticsReport, ExponentMode, SlopeFit};
pub use erm::{minimize, select_bandwidth, select_cutoff, FitResult, RateConfig};
pub use error::{Error, Result};
pub use grid::Grid;
pub use hypotheses::{
    bayes_in_class, loss_eval, make_margin_scenario, true_risk, Classifier, ContaminationSpec,
    HypothesisClass, LossKind, LossSpec, Scenario, ScenarioSpec,
};
pub use kernels::{
    build_base_kernel, build_deconvolution_kernel, kernel_fourier_sup, BaseKernelKind, NoiseModel,
    TabulatedKernel,
};
pub use noisy_risk::{empirical_risk, ModifiedLossTable, NoisySample, Smoother, Smoothing};
pub use operators::{CoefficientVector, SpectralOperator};
pub use simulation::{
    run_rate_experiment, run_rate_experiment_with, ExperimentPlan, RatePoint, RateReport,
};

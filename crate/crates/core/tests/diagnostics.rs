use deconv_erm::diagnostics::{
    bernstein_ratio, empirical_bias, empirical_lipschitz, empirical_modulus, log_log_slope,
    rate_exponent, run_diagnostics, DiagnosticsPlan, ExponentMode, Measure,
};
use deconv_erm::erm::RateConfig;
use deconv_erm::hypotheses::{bayes_in_class, DensitySpec};
use deconv_erm::kernels::NoiseModel;
use deconv_erm::noisy_risk::{DeconvolutionSmoother, Smoother};
use deconv_erm::simulation::{BackendSpec, ClassSpec, SmoothingLevel};
use deconv_erm::{
    make_margin_scenario, BaseKernelKind, ContaminationSpec, HypothesisClass, LossSpec, Scenario,
    ScenarioSpec,
};

const FLAT: BaseKernelKind = BaseKernelKind::OrderMFlatTop;

fn dirac_scenario() -> Scenario {
    make_margin_scenario(1.0, &ContaminationSpec::Dirac, 0.5, 1024).unwrap()
}

fn sharp_smoother(scenario: &Scenario) -> Smoother {
    let h = scenario.grid.spacing()[0];
    Smoother::Deconvolution(
        DeconvolutionSmoother::new(FLAT, &NoiseModel::dirac(1), 2.0 * h, &scenario.grid).unwrap(),
    )
}

#[test]
fn bernstein_ratio_is_stable_under_refinement() {
    let scenario = dirac_scenario();
    let ratio = |count: usize| {
        let class = HypothesisClass::thresholds(0.0, 1.0, count).unwrap();
        let oracle = bayes_in_class(&class, &scenario, &LossSpec::HARD);
        bernstein_ratio(
            &scenario,
            &class,
            oracle.index,
            &LossSpec::HARD,
            2.0,
            Measure::NuY,
        )
        .unwrap()
    };
    let (coarse, fine) = (ratio(11), ratio(101));
    assert!(coarse.is_finite() && fine.is_finite() && coarse > 0.0);
    assert!(
        fine / coarse < 2.0 && coarse / fine < 2.0,
        "{coarse} vs {fine}"
    );
}

#[test]
fn bernstein_ratio_edge_cases() {
    let scenario = dirac_scenario();
    let single = HypothesisClass::thresholds(0.5, 0.5, 1).unwrap();
    let r = bernstein_ratio(&scenario, &single, 0, &LossSpec::HARD, 2.0, Measure::NuY).unwrap();
    assert_eq!(r, 0.0);
    let class = HypothesisClass::thresholds(0.0, 1.0, 11).unwrap();
    assert!(bernstein_ratio(&scenario, &class, 5, &LossSpec::HARD, 1.0, Measure::NuY).is_err());
}

#[test]
fn dirac_lipschitz_ratios_are_near_one() {
    let scenario = dirac_scenario();
    let class = HypothesisClass::thresholds(0.1, 0.9, 5).unwrap();
    let pairs: Vec<(usize, usize)> = (0..5)
        .flat_map(|a| (a + 1..5).map(move |b| (a, b)))
        .collect();
    let smoother = sharp_smoother(&scenario);
    for measure in [Measure::NuY, Measure::P] {
        let ratios = empirical_lipschitz(
            &scenario,
            &smoother,
            &class,
            &LossSpec::HARD,
            &pairs,
            20_000,
            3,
            measure,
        )
        .unwrap();
        assert_eq!(ratios.len(), pairs.len());
        // the marginal of X is uniform when the crossing is 1/2, so ν_Y and P agree
        for r in &ratios {
            assert!((r - 1.0).abs() < 0.1, "{measure:?} ratio {r}");
        }
    }
}

#[test]
fn degenerate_pairs_are_skipped() {
    let scenario = dirac_scenario();
    let class = HypothesisClass::thresholds(0.3, 0.3, 2).unwrap();
    let ratios = empirical_lipschitz(
        &scenario,
        &sharp_smoother(&scenario),
        &class,
        &LossSpec::HARD,
        &[(0, 1)],
        100,
        1,
        Measure::NuY,
    )
    .unwrap();
    assert!(ratios.is_empty());
}

#[test]
fn dirac_bias_vanishes_at_grid_scale() {
    let scenario = dirac_scenario();
    let class = HypothesisClass::thresholds(0.0, 1.0, 101).unwrap();
    let oracle = bayes_in_class(&class, &scenario, &LossSpec::HARD);
    let a = empirical_bias(
        &scenario,
        &sharp_smoother(&scenario),
        &class,
        &LossSpec::HARD,
        oracle.index,
        0.25,
    )
    .unwrap();
    assert!((0.0..=0.02).contains(&a), "bias {a}");
}

#[test]
fn modulus_behaviour() {
    let scenario = dirac_scenario();
    let class = HypothesisClass::thresholds(0.0, 1.0, 21).unwrap();
    let smoother = Smoother::Deconvolution(
        DeconvolutionSmoother::new(FLAT, &NoiseModel::dirac(1), 0.02, &scenario.grid).unwrap(),
    );
    let modulus = |delta: f64, n: usize| {
        empirical_modulus(
            &scenario,
            &smoother,
            &class,
            &LossSpec::HARD,
            delta,
            n,
            200,
            9,
            Measure::NuY,
        )
        .unwrap()
    };
    assert_eq!(modulus(0.0, 500), 0.0);

    // nested δ-balls with common random numbers: monotone up to MC error
    let values: Vec<f64> = [0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&d| modulus(d, 500))
        .collect();
    for w in values.windows(2) {
        assert!(w[0] <= w[1] + 1e-12, "{values:?}");
    }

    let ns = [250.0, 1000.0, 4000.0];
    let at_n: Vec<f64> = ns.iter().map(|&n| modulus(0.3, n as usize)).collect();
    let slope = log_log_slope(&ns, &at_n).unwrap();
    assert!((slope + 0.5).abs() < 0.3, "slope {slope}");
}

#[test]
fn exponent_monotone_in_beta_rho_gamma() {
    let grid = [0.5, 1.0, 2.0, 4.0];
    for &k in &[1.5, 2.0, 3.0, 5.0] {
        for &r in &[0.1, 0.3, 0.5, 0.9] {
            for &g in &grid {
                for &b in &[0.0, 1.0, 2.0, 4.0] {
                    let e = |k: f64, r: f64, g: f64, b: f64| {
                        rate_exponent(&RateConfig::new(k, r, g, b).unwrap(), ExponentMode::Deconv)
                            .unwrap()
                    };
                    let base = e(k, r, g, b);
                    assert!(e(k, r, g, b + 0.5) < base);
                    assert!(e(k, (r + 1.0) / 2.0, g, b) < base);
                    // at β̄ = 0 the exponent is κ/(2κ+ρ-1), free of γ
                    if b > 0.0 {
                        assert!(e(k, r, g * 1.5, b) > base);
                    } else {
                        assert!((e(k, r, g * 1.5, b) - base).abs() < 1e-15);
                    }
                    let svd =
                        rate_exponent(&RateConfig::new(k, r, g, b).unwrap(), ExponentMode::Svd)
                            .unwrap();
                    assert_eq!(svd, base);
                }
            }
        }
    }
}

fn small_plan() -> DiagnosticsPlan {
    DiagnosticsPlan {
        scenario: ScenarioSpec {
            priors: None,
            density: DensitySpec::Linear { crossing: 0.5 },
            noise: ContaminationSpec::Laplace { beta: vec![2.0] },
            alpha: 1.0,
            gamma: 2.0,
            lipschitz: 1.0,
            grid_points: 256,
        },
        class: ClassSpec::Thresholds {
            lo: 0.0,
            hi: 1.0,
            count: 11,
        },
        backend: BackendSpec::Deconvolution { base_kernel: FLAT },
        loss: LossSpec::HARD,
        rate: RateConfig::new(2.0, 0.5, 2.0, 2.0).unwrap(),
        levels: vec![
            SmoothingLevel::Bandwidth(0.4),
            SmoothingLevel::Bandwidth(0.2),
        ],
        mc_n: 2000,
        seed: 5,
        measure: Measure::NuY,
        deltas: vec![0.2, 0.5],
        modulus_n: 200,
        modulus_reps: 10,
    }
}

#[test]
fn diagnostics_are_deterministic_and_nonnegative() {
    let plan = small_plan();
    let a = run_diagnostics(&plan).unwrap();
    let b = run_diagnostics(&plan).unwrap();
    assert_eq!(a, b);
    for s in [&a.lipschitz, &a.sup, &a.bias] {
        assert_eq!(s.values.len(), 2);
        assert!(s.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
    assert!(a.bernstein.is_finite() && a.bernstein >= 0.0);
    assert_eq!(a.modulus.len(), 2);
    let json = serde_json::to_string(&plan).unwrap();
    assert_eq!(
        serde_json::from_str::<DiagnosticsPlan>(&json).unwrap(),
        plan
    );
}

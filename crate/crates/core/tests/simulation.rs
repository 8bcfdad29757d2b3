use deconv_erm::diagnostics::ExponentMode;
use deconv_erm::erm::RateConfig;
use deconv_erm::hypotheses::DensitySpec;
use deconv_erm::simulation::{
    run_rate_experiment, run_rate_experiment_with, BackendSpec, ClassSpec, ExperimentPlan,
    RateReport,
};
use deconv_erm::{BaseKernelKind, ContaminationSpec, ScenarioSpec};

fn plan(noise: ContaminationSpec, backend: BackendSpec, beta_bar: f64) -> ExperimentPlan {
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
        class: ClassSpec::Thresholds {
            lo: 0.0,
            hi: 1.0,
            count: 21,
        },
        backend,
        loss: deconv_erm::LossSpec::HARD,
        n_grid: vec![128, 512, 2048],
        replications: 60,
        seed: 11,
        rate: RateConfig::new(2.0, 0.5, 2.0, beta_bar).unwrap(),
        exponent_mode: ExponentMode::Deconv,
    }
}

fn deconv() -> BackendSpec {
    BackendSpec::Deconvolution {
        base_kernel: BaseKernelKind::OrderMFlatTop,
    }
}

fn presets() -> Vec<(&'static str, ExperimentPlan)> {
    vec![
        ("dirac", plan(ContaminationSpec::Dirac, deconv(), 0.0)),
        (
            "laplace",
            plan(
                ContaminationSpec::Laplace { beta: vec![2.0] },
                deconv(),
                2.0,
            ),
        ),
        (
            "svd",
            plan(
                ContaminationSpec::Spectral {
                    beta: 1.0,
                    k_max: 64,
                },
                BackendSpec::Svd,
                1.0,
            ),
        ),
    ]
}

fn csv(report: &RateReport) -> Vec<u8> {
    let mut out = Vec::new();
    report.write_csv(&mut out).unwrap();
    out
}

#[test]
fn reports_are_bitwise_reproducible_across_thread_counts() {
    let p = plan(
        ContaminationSpec::Laplace { beta: vec![2.0] },
        deconv(),
        2.0,
    );
    let a = run_rate_experiment(&p).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_rate_experiment(&p).unwrap());
    assert_eq!(a, b);
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.summary_json().to_string(), b.summary_json().to_string());
}

#[test]
fn mean_excess_is_non_increasing_within_two_se() {
    for (name, p) in presets() {
        let r = run_rate_experiment(&p).unwrap();
        for w in r.points.windows(2) {
            let slack = 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            assert!(
                w[1].mean <= w[0].mean + slack,
                "{name}: n={} mean {} after {}",
                w[1].n,
                w[1].mean,
                w[0].mean
            );
        }
        assert!(r.points.iter().all(|pt| pt.mean >= 0.0 && pt.se >= 0.0));
    }
}

#[test]
fn restricted_backend_runs_end_to_end() {
    let p = plan(
        ContaminationSpec::Laplace { beta: vec![2.0] },
        BackendSpec::Restricted {
            window: (0.1, 0.9),
            base_kernel: BaseKernelKind::OrderMFlatTop,
        },
        2.0,
    );
    let r = run_rate_experiment(&p).unwrap();
    assert_eq!(r.points.len(), 3);
    assert!(r
        .points
        .iter()
        .all(|pt| pt.mean.is_finite() && pt.mean >= 0.0));
}

#[test]
fn progress_callback_sees_points_in_order() {
    let p = plan(ContaminationSpec::Dirac, deconv(), 0.0);
    let mut seen = Vec::new();
    let r = run_rate_experiment_with(&p, |pt| seen.push(pt.clone())).unwrap();
    assert_eq!(seen, r.points);
    assert_eq!(
        seen.iter().map(|p| p.n).collect::<Vec<_>>(),
        vec![128, 512, 2048]
    );
}

#[test]
fn summary_reports_theory_and_interval() {
    let p = plan(ContaminationSpec::Dirac, deconv(), 0.0);
    let r = run_rate_experiment(&p).unwrap();
    let s = r.summary_json();
    let theory = s["theory"].as_f64().unwrap();
    assert!((theory - 2.0 / 3.5).abs() < 1e-12);
    let ci = s["ci"].as_array().unwrap();
    let slope = s["slope"].as_f64().unwrap();
    assert!(ci[0].as_f64().unwrap() <= slope && slope <= ci[1].as_f64().unwrap());
}

#[test]
fn plans_round_trip_and_reject_unknown_keys() {
    for (_, p) in presets() {
        let json = serde_json::to_value(&p).unwrap();
        let back: ExperimentPlan = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(back, p);
        let mut extra = json;
        extra["unexpected"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentPlan>(extra).is_err());
    }
}

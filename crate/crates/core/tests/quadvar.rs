use delayfbsde_core::noise::NoiseGrid;
use delayfbsde_core::quadvar::*;
use delayfbsde_core::sdde::{simulate_forward, DelayTerm, PathEnsemble, ScalarDelayModel};
use delayfbsde_core::segment::{GridSpec, OuterMap, Segment, SegmentFunctional, WindowMeasure};
use delayfbsde_core::stats::Estimate;
use delayfbsde_core::Error;
use proptest::prelude::*;

fn ensemble(model: &ScalarDelayModel, r: f64, m: usize, paths: usize, seed: u64) -> PathEnsemble {
    let g = GridSpec::with_delay(r, m, 1, 1).unwrap();
    let x = Segment::from_fn(g, |t| 1.0 + 0.5 * t).unwrap();
    simulate_forward(
        model,
        0.0,
        &x,
        &NoiseGrid::spanning(seed, paths, 1, g.step(), 0.0, 1.0).unwrap(),
    )
    .unwrap()
}

fn sin_cos(r: f64) -> ScalarDelayModel {
    ScalarDelayModel::new(
        vec![DelayTerm::Sine { amp: 1.0, lag: -r }],
        vec![
            DelayTerm::Constant { value: 1.0 },
            DelayTerm::Cosine { amp: 0.1, lag: 0.0 },
        ],
    )
}

#[test]
fn constant_u_has_zero_covariation() {
    let w: Vec<f64> = (0..101).map(|k| (k as f64).sin()).collect();
    let u = vec![3.0; 101];
    assert_eq!(
        joint_qv_estimate(&u, &w, 0.0, 0.01, 0.05, (0.0, 0.9)).unwrap(),
        0.0
    );
}

#[test]
fn off_grid_epsilon_and_late_window_are_rejected() {
    let v = vec![0.0; 101];
    assert!(matches!(
        joint_qv_estimate(&v, &v, 0.0, 0.01, 0.015, (0.0, 0.5)),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        joint_qv_estimate(&v, &v, 0.0, 0.01, 0.05, (0.0, 0.99)),
        Err(Error::Domain(_))
    ));
}

#[test]
fn finite_variation_u_vanishes_linearly_in_epsilon() {
    let ens = ensemble(&ScalarDelayModel::brownian(1.0), 0.1, 10, 50, 1);
    let u: Vec<f64> = (0..=ens.steps()).map(|k| ens.time(k)).collect();
    let window = (0.0, 0.9);
    let mut ratios = Vec::new();
    for e in [0.08, 0.04, 0.02, 0.01] {
        let worst = (0..ens.num_paths())
            .map(|p| {
                joint_qv_estimate(&u, &wiener_path(&ens, p, 0), 0.0, ens.dt(), e, window)
                    .unwrap()
                    .abs()
            })
            .fold(0.0_f64, f64::max);
        ratios.push(worst / e);
    }
    // |C^ε| ≤ K ε with K independent of ε (the worst case grows at most like 1/√ε·ε).
    let k = ratios[0].max(1.0);
    assert!(ratios.iter().all(|r| *r <= 4.0 * k), "{ratios:?}");
}

#[test]
fn brownian_self_covariation() {
    let ens = ensemble(&ScalarDelayModel::brownian(1.0), 0.1, 100, 10_000, 2);
    let u = SegmentFunctional::current();
    let window = (0.0, 0.9);
    let paths = functional_paths(&u, &ens).unwrap();
    let est: Vec<f64> = (0..ens.num_paths())
        .map(|p| {
            joint_qv_estimate(
                &paths[p],
                &wiener_path(&ens, p, 0),
                0.0,
                ens.dt(),
                0.01,
                window,
            )
            .unwrap()
        })
        .collect();
    assert!(Estimate::from_samples(&est).within(0.9, 5.0, 0.0));
    let pred = qv_limit_prediction(&ScalarDelayModel::brownian(1.0), &u, &ens, window, 0).unwrap();
    assert!(pred.iter().all(|v| (v - 0.9).abs() < 1e-9));
}

#[test]
fn constant_sigma_prediction_is_sigma_times_length() {
    let c = 0.7;
    let model = ScalarDelayModel::brownian(c);
    let ens = ensemble(&model, 0.1, 10, 3, 3);
    let pred =
        qv_limit_prediction(&model, &SegmentFunctional::current(), &ens, (0.2, 0.7), 0).unwrap();
    assert!(pred.iter().all(|v| (v - c * 0.5).abs() < 1e-12));
}

#[test]
fn atomless_functional_has_zero_prediction_and_vanishing_estimates() {
    let model = sin_cos(0.5);
    let ens = ensemble(&model, 0.5, 50, 4000, 4);
    let mu = WindowMeasure::lebesgue(*ens.grid(), -0.5).unwrap();
    let u = SegmentFunctional::window_integral(
        mu,
        OuterMap::Linear {
            coeffs: vec![1.0],
            offset: 0.0,
        },
    );
    let pred = qv_limit_prediction(&model, &u, &ens, (0.0, 0.9), 0).unwrap();
    assert!(pred.iter().all(|v| *v == 0.0));
    // u has finite-variation paths: C^ε carries an O(ε) bias of about
    // ε·|window|·σ/2 and nothing else.
    let report = convergence_study(&model, &u, &ens, &[0.04, 0.02, 0.01], (0.0, 0.9), 0).unwrap();
    for row in &report.rows {
        let budget = 0.5 * row.epsilon * 0.9 * 1.1;
        assert!(
            row.mean_error.abs() <= budget + 5.0 * row.mean_error_se,
            "{row:?}"
        );
    }
    assert!(report.decreasing);
}

#[test]
fn brownian_study_decreases_and_centres() {
    let model = ScalarDelayModel::brownian(1.0);
    let ens = ensemble(&model, 0.1, 100, 10_000, 5);
    let report = convergence_study(
        &model,
        &SegmentFunctional::current(),
        &ens,
        &[0.01, 0.04, 0.02],
        (0.0, 0.9),
        0,
    )
    .unwrap();
    assert_eq!(
        report.rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
        vec![0.04, 0.02, 0.01]
    );
    assert!(report.passed(), "{report:?}");
}

#[test]
fn lagged_product_on_nonlinear_model() {
    let r = 0.5;
    let model = sin_cos(r);
    let ens = ensemble(&model, r, 500, 10_000, 6);
    let u = SegmentFunctional::cylindrical(vec![0.0, -r], OuterMap::Product);
    let report = convergence_study(&model, &u, &ens, &[0.04, 0.02, 0.01], (0.0, 0.96), 0).unwrap();
    eprintln!("{report:#?}");
    assert!(report.passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimator_is_linear_in_u(lam in -5.0f64..5.0, seed in 0u64..1000) {
        let u: Vec<f64> = (0..61).map(|k| ((k as u64 * 31 + seed) % 17) as f64).collect();
        let w: Vec<f64> = (0..61).map(|k| ((k as u64 * 7 + seed) % 13) as f64 - 6.0).collect();
        let scaled: Vec<f64> = u.iter().map(|v| lam * v).collect();
        let a = joint_qv_estimate(&u, &w, 0.0, 0.01, 0.03, (0.0, 0.5)).unwrap();
        let b = joint_qv_estimate(&scaled, &w, 0.0, 0.01, 0.03, (0.0, 0.5)).unwrap();
        prop_assert!((b - lam * a).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

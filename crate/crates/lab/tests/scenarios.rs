use std::path::{Path, PathBuf};

use delayfbsde::export::{ensemble_binary, ensemble_csv, read_ensemble_binary};
use delayfbsde::oracle::method_of_steps;
use delayfbsde::scenario::*;
use delayfbsde::verify::*;
use delayfbsde::LabError;
use delayfbsde_core::noise::NoiseGrid;
use delayfbsde_core::sdde::{
    simulate_controlled, simulate_forward, ConstantPolicy, LinearChannel, ScalarDelayModel,
};
use delayfbsde_core::segment::{GridSpec, Segment};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn round_trip<S: Scenario + Serialize + DeserializeOwned>(sc: &S) {
    let text = serde_json::to_string(sc).unwrap();
    let back: S = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    back.validate().unwrap();
}

#[test]
fn bundled_scenarios_load() {
    let none = Overrides::default();
    load::<SimulateScenario>(&bundled("simulate_sin_cos.json"), &none).unwrap();
    load::<PriceScenario>(&bundled("price_black_scholes.json"), &none).unwrap();
    load::<PriceScenario>(&bundled("price_delayed_volatility.json"), &none).unwrap();
    load::<ControlScenario>(&bundled("control_ball.json"), &none).unwrap();
    load::<QvScenario>(&bundled("qv_lagged_product.json"), &none).unwrap();
    load::<MalliavinScenario>(&bundled("malliavin_sin_cos.json"), &none).unwrap();
    let full: VerifyScenario = load(&bundled("verify_full.json"), &none).unwrap();
    assert_eq!(full.criteria, (1..=8).collect::<Vec<u8>>());
    let linear: VerifyScenario = load(&bundled("verify_linear.json"), &none).unwrap();
    assert!(linear.linear_only && linear.scale == Scale::Quick);
}

#[test]
fn bundled_files_match_the_suite_scenarios() {
    let none = Overrides::default();
    let price: PriceScenario = load(&bundled("price_black_scholes.json"), &none).unwrap();
    let suite = black_scholes_scenario(Scale::Full, 11);
    assert_eq!(price.market, suite.market);
    assert_eq!(price.claim, suite.claim);
    assert_eq!(price.sampling.grid, suite.sampling.grid);
    let qv: QvScenario = load(&bundled("qv_lagged_product.json"), &none).unwrap();
    assert_eq!(qv.model, qv_scenario(Scale::Full, 9).model);
    let ctl: ControlScenario = load(&bundled("control_ball.json"), &none).unwrap();
    assert_eq!(ctl.model, delayed_model());
    assert_eq!(ctl.problem.set, ball_problem().set);
}

#[test]
fn suite_scenarios_round_trip() {
    for scale in [Scale::Full, Scale::Quick] {
        round_trip(&black_scholes_scenario(scale, 1));
        round_trip(&dde_scenario(scale, 1));
        round_trip(&qv_scenario(scale, 1));
        round_trip(&malliavin_scenario(scale, 1));
        round_trip(&control_scenario(scale, 1));
        round_trip(&replication_scenario(scale, 1, true));
    }
}

#[test]
fn overrides_replace_fields() {
    let mut sc = dde_scenario(Scale::Quick, 1);
    sc.apply(&Overrides {
        seed: Some(9),
        paths: Some(3),
        dt: Some(0.005),
    })
    .unwrap();
    assert_eq!((sc.sampling.seed, sc.sampling.paths), (9, 3));
    assert_eq!(sc.sampling.grid.past_points(), 100);
    assert!(matches!(
        sc.apply(&Overrides {
            dt: Some(0.3),
            ..Default::default()
        }),
        Err(LabError::Config(_))
    ));
    let mut v = VerifyScenario {
        seed: 1,
        scale: Scale::Quick,
        criteria: vec![1],
        linear_only: false,
    };
    assert!(v
        .apply(&Overrides {
            dt: Some(0.01),
            ..Default::default()
        })
        .is_err());
    v.criteria = vec![9];
    assert!(v.validate().is_err());
}

#[test]
fn replication_ladders_must_divide_the_delay() {
    let mut sc = replication_scenario(Scale::Quick, 1, false);
    sc.replication.as_mut().unwrap().steps.push(0.003);
    assert!(matches!(sc.validate(), Err(LabError::Config(m)) if m.contains("m·Δt = r")));
    let mut sc = replication_scenario(Scale::Quick, 1, false);
    sc.replication.as_mut().unwrap().reference_step = Some(0.01);
    assert!(sc.validate().is_err());
}

#[test]
fn random_segments_are_reproducible_and_bounded() {
    let a = random_segments(3, 10);
    assert_eq!(a, random_segments(3, 10));
    assert_ne!(a, random_segments(4, 10));
    for s in &a {
        let InitialSegment::Wave {
            offset,
            amp,
            freq,
            phase,
        } = *s
        else {
            panic!()
        };
        assert!((-1.0..=1.0).contains(&offset) && (0.0..=0.5).contains(&amp));
        assert!((1.0..=8.0).contains(&freq) && (0.0..std::f64::consts::TAU).contains(&phase));
    }
}

#[test]
fn criterion_names_cover_the_suite() {
    for id in 1..=8 {
        assert_ne!(criterion_name(id), "unknown");
    }
    assert!(run_criterion(9, Scale::Quick, 1, false).is_err());
}

#[test]
fn dde_criterion_passes_at_quick_scale() {
    let rep = run_criterion(2, Scale::Quick, 5, false).unwrap();
    assert!(rep.passed, "{}", rep.summary);
    assert_eq!(
        rep.details["oracle"].as_f64().unwrap(),
        method_of_steps(0.5, 0.5, &[1.0], 1.0)
    );
}

#[test]
fn controlled_csv_carries_controls_and_dump_round_trips() {
    let g = GridSpec::with_delay(0.2, 4, 1, 1).unwrap();
    let x = Segment::constant(g, 1.0);
    let noise = NoiseGrid::spanning(1, 3, 1, g.step(), 0.0, 0.4).unwrap();
    let ens = simulate_controlled(
        &ScalarDelayModel::brownian(0.3),
        &LinearChannel::identity(1, 1.0),
        &ConstantPolicy::new(vec![0.25]),
        0.0,
        &x,
        &noise,
    )
    .unwrap();
    let csv = String::from_utf8(ensemble_csv(&ens)).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "path,step,time,y,u");
    assert_eq!(rows.len(), 1 + 3 * 9);
    assert!(rows[1].ends_with(",0.25"));
    assert!(rows[9].ends_with(','));
    assert_eq!(read_ensemble_binary(&ensemble_binary(&ens)).unwrap(), ens);

    let plain = simulate_forward(&ScalarDelayModel::brownian(0.3), 0.0, &x, &noise).unwrap();
    let bytes = ensemble_binary(&plain);
    assert_eq!(read_ensemble_binary(&bytes).unwrap(), plain);
    assert!(read_ensemble_binary(&bytes[..bytes.len() - 8]).is_err());
    assert!(read_ensemble_binary(b"not a dump at all").is_err());
}

proptest! {
    #[test]
    fn retiming_keeps_the_delay(m in 1usize..400, k in 1usize..5) {
        let g = GridSpec::with_delay(0.5, m, 1, 1).unwrap();
        let dt = 0.5 / (k * m) as f64;
        let h = retime(&g, dt).unwrap();
        prop_assert_eq!(h.past_points(), k * m);
        prop_assert!((h.delay() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn method_of_steps_solves_the_delay_equation(
        a in -1.5f64..1.5,
        r in 0.1f64..1.0,
        c0 in -2.0f64..2.0,
        c1 in -2.0f64..2.0,
        t in 0.01f64..3.0,
    ) {
        let y = |s: f64| method_of_steps(a, r, &[c0, c1], s);
        let h = 1e-5;
        let derivative = (y(t + h) - y(t - h)) / (2.0 * h);
        prop_assert!((derivative - a * y(t - r)).abs() <= 1e-5 * (1.0 + derivative.abs()));
        // continuity across the interval ends
        let n = (t / r).floor().max(1.0) * r;
        prop_assert!((y(n + 1e-12) - y(n - 1e-12)).abs() < 1e-9 * (1.0 + y(n).abs()));
    }
}

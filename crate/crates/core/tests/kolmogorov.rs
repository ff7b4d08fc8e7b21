use delayfbsde_core::bsde::{LinearDriver, SolverConfig, ZeroDriver};
use delayfbsde_core::control::{
    ControlProblem, ControlSet, HamiltonianDriver, MinimizerRule, RunningCost,
};
use delayfbsde_core::kolmogorov::*;
use delayfbsde_core::sdde::{DelayTerm, LinearChannel, ScalarDelayModel};
use delayfbsde_core::segment::{GridSpec, OuterMap, Segment, SegmentFunctional};

fn delayed() -> ScalarDelayModel {
    ScalarDelayModel::new(
        vec![DelayTerm::Sine {
            amp: 0.5,
            lag: -0.5,
        }],
        vec![
            DelayTerm::Constant { value: 0.4 },
            DelayTerm::Cosine {
                amp: 0.1,
                lag: -0.25,
            },
        ],
    )
}

#[test]
fn terminal_time_is_exact() {
    let g = GridSpec::with_delay(0.5, 10, 1, 1).unwrap();
    let x = Segment::from_fn(g, |t| 1.0 + t).unwrap();
    let phi = SegmentFunctional::cylindrical(vec![0.0, -0.5], OuterMap::Product);
    let rep = mild_residual(
        &delayed(),
        &LinearDriver { rate: 0.3 },
        &phi,
        1.0,
        &x,
        &MildConfig::new(SolverConfig::new(1, 100, 1.0)),
    )
    .unwrap();
    assert_eq!(rep.residual, 0.0);
    assert_eq!(rep.v.mean, phi.eval(x.as_ref()).unwrap());
}

#[test]
fn zero_driver_residual_is_a_semigroup_difference() {
    let g = GridSpec::with_delay(0.5, 25, 1, 1).unwrap();
    let phi = SegmentFunctional::cylindrical(vec![0.0, -0.5], OuterMap::Product);
    for (i, shift) in [0.0, 0.7, -1.3].iter().enumerate() {
        let x = Segment::from_fn(g, |t| shift + (3.0 * t).cos()).unwrap();
        let cfg = MildConfig::new(SolverConfig::new(10 + i as u64, 5000, 1.0));
        let rep = mild_residual(&delayed(), &ZeroDriver, &phi, 0.0, &x, &cfg).unwrap();
        assert_eq!(rep.integral_term.mean, 0.0);
        assert!(rep.residual.abs() <= 5.0 * rep.se, "{rep:?}");
    }
}

#[test]
fn discounted_martingale_value_is_the_spot() {
    let (rate, vol) = (0.05, 0.2);
    let g = GridSpec::with_delay(0.04, 10, 1, 1).unwrap();
    let model = ScalarDelayModel::new(
        vec![DelayTerm::Linear {
            coef: rate,
            lag: 0.0,
        }],
        vec![DelayTerm::Linear {
            coef: vol,
            lag: 0.0,
        }],
    );
    let x = Segment::constant(g, 100.0);
    let cfg = MildConfig::new(SolverConfig::new(3, 20_000, 1.0));
    let rep = mild_residual(
        &model,
        &LinearDriver { rate },
        &SegmentFunctional::current(),
        0.0,
        &x,
        &cfg,
    )
    .unwrap();
    let slack = g.step() * (1.0 + rep.v.mean.abs());
    assert!(rep.residual.abs() <= 5.0 * rep.se + slack, "{rep:?}");
    assert!((rep.v.mean - 100.0).abs() <= 5.0 * rep.v.se + slack);
}

#[test]
fn hamiltonian_driver_residual_is_small() {
    let g = GridSpec::with_delay(0.5, 25, 1, 1).unwrap();
    let x = Segment::from_fn(g, |t| 0.5 + t).unwrap();
    let phi = SegmentFunctional::cylindrical(vec![0.0], OuterMap::Quadratic { scale: 1.0 });
    let problem = ControlProblem::new(
        ControlSet::Ball {
            dim: 1,
            radius: 1.0,
        },
        RunningCost::Quadratic { scale: 0.5 },
        LinearChannel::identity(1, 1.0),
        phi.clone(),
    )
    .unwrap();
    let driver = HamiltonianDriver::new(&problem, MinimizerRule::default());
    let mut cfg = MildConfig::new(SolverConfig::new(5, 10_000, 1.0));
    cfg.nested = Some(NestedAudit {
        outer_paths: 40,
        inner_paths: 1000,
    });
    let rep = mild_residual(&delayed(), &driver, &phi, 0.0, &x, &cfg).unwrap();
    assert!(rep.integral_term.mean.abs() > 0.01);
    assert!(
        rep.residual.abs() <= 0.05 * rep.v.mean.abs() + 5.0 * rep.se,
        "{rep:?}"
    );
    let audit = rep.nested_residual.unwrap();
    assert!(
        audit.mean.abs() <= 0.05 * rep.v.mean.abs() + 5.0 * audit.se,
        "{audit:?}"
    );
}

#[test]
fn reports_serialize_with_their_config() {
    let g = GridSpec::with_delay(0.5, 10, 1, 1).unwrap();
    let x = Segment::constant(g, 1.0);
    let cfg = MildConfig::new(SolverConfig::new(8, 200, 1.0));
    let rep = mild_residual(
        &delayed(),
        &ZeroDriver,
        &SegmentFunctional::current(),
        0.0,
        &x,
        &cfg,
    )
    .unwrap();
    let json = serde_json::to_value(&rep).unwrap();
    for key in ["v", "rhs", "residual", "se", "config"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["config"]["stride"], 5);
}

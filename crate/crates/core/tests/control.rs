use delayfbsde_core::bsde::{value_function, SolverConfig};
use delayfbsde_core::control::*;
use delayfbsde_core::sdde::{
    semigroup_apply, ConstantPolicy, DelayTerm, LinearChannel, ScalarDelayModel,
};
use delayfbsde_core::segment::{GridSpec, OuterMap, Segment, SegmentFunctional};
use delayfbsde_core::Error;
use proptest::prelude::*;

fn grid(r: f64, m: usize) -> GridSpec {
    GridSpec::with_delay(r, m, 1, 1).unwrap()
}

fn ball_problem(terminal: SegmentFunctional) -> ControlProblem {
    ControlProblem::new(
        ControlSet::Ball {
            dim: 1,
            radius: 1.0,
        },
        RunningCost::Quadratic { scale: 0.5 },
        LinearChannel::identity(1, 1.0),
        terminal,
    )
    .unwrap()
}

fn ball_hamiltonian(z: f64) -> f64 {
    if z.abs() <= 1.0 {
        -0.5 * z * z
    } else {
        0.5 - z.abs()
    }
}

#[test]
fn ball_hamiltonian_closed_form_and_grid() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 0.0);
    let p = ball_problem(SegmentFunctional::current());
    let fine = MinimizerRule::grid(1001);
    for z in [-3.0, -1.0, -0.4, 0.0, 0.25, 0.9, 1.5] {
        let analytic = p.hamiltonian(&MinimizerRule::default(), 0.0, x.as_ref(), &[z]);
        assert!((analytic - ball_hamiltonian(z)).abs() < 1e-14, "{z}");
        let grid = p.hamiltonian(&fine, 0.0, x.as_ref(), &[z]);
        assert!(
            grid >= analytic - 1e-14 && grid - analytic < 1e-5,
            "{z}: {grid} vs {analytic}"
        );
    }
    assert_eq!(
        p.hamiltonian(&MinimizerRule::default(), 0.0, x.as_ref(), &[0.0]),
        0.0
    );
}

#[test]
fn ball_minimizer_interior_and_boundary() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 0.0);
    let p = ball_problem(SegmentFunctional::current());
    let rule = MinimizerRule::default();
    assert_eq!(p.minimizer(&rule, 0.0, x.as_ref(), &[0.3]), vec![-0.3]);
    assert_eq!(p.minimizer(&rule, 0.0, x.as_ref(), &[-2.0]), vec![1.0]);
    assert_eq!(p.minimizer(&rule, 0.0, x.as_ref(), &[4.0]), vec![-1.0]);
    let spacing = 2.0 / 100.0;
    for z in [0.33, -0.71, 1.2] {
        let a = p.minimizer(&rule, 0.0, x.as_ref(), &[z])[0];
        let b = p.minimizer(&MinimizerRule::grid(101), 0.0, x.as_ref(), &[z])[0];
        assert!((a - b).abs() <= spacing, "{z}: {a} vs {b}");
    }
}

#[test]
fn two_dimensional_ball_projects_radially() {
    let g = GridSpec::with_delay(0.5, 10, 2, 2).unwrap();
    let x = Segment::constant(g, 0.0);
    let p = ControlProblem::new(
        ControlSet::Ball {
            dim: 2,
            radius: 1.0,
        },
        RunningCost::Quadratic { scale: 0.5 },
        LinearChannel::identity(2, 1.0),
        SegmentFunctional::constant(0.0),
    )
    .unwrap();
    let u = p.minimizer(&MinimizerRule::default(), 0.0, x.as_ref(), &[3.0, 4.0]);
    assert!((u[0] + 0.6).abs() < 1e-15 && (u[1] + 0.8).abs() < 1e-15);
    let psi = p.hamiltonian(&MinimizerRule::default(), 0.0, x.as_ref(), &[3.0, 4.0]);
    assert!((psi - (0.5 - 5.0)).abs() < 1e-12);
    let grid = p.hamiltonian(&MinimizerRule::grid(201), 0.0, x.as_ref(), &[3.0, 4.0]);
    assert!(grid >= psi - 1e-12 && grid - psi < 1e-3);
}

#[test]
fn finite_sets_enumerate_and_break_ties_lexicographically() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 0.0);
    let p = ControlProblem::new(
        ControlSet::Finite {
            points: vec![vec![2.0], vec![-1.0], vec![1.0], vec![0.5]],
        },
        RunningCost::Zero,
        LinearChannel::identity(1, 2.0),
        SegmentFunctional::constant(0.0),
    )
    .unwrap();
    let rule = MinimizerRule::default();
    assert_eq!(p.hamiltonian(&rule, 0.0, x.as_ref(), &[1.0]), -1.0);
    assert_eq!(p.minimizer(&rule, 0.0, x.as_ref(), &[-1.0]), vec![2.0]);

    let q = ControlProblem::new(
        ControlSet::Finite {
            points: vec![vec![1.0], vec![-1.0], vec![3.0]],
        },
        RunningCost::Quadratic { scale: 1.0 },
        LinearChannel::zero(1, 1),
        SegmentFunctional::constant(0.0),
    )
    .unwrap();
    assert_eq!(q.minimizer(&rule, 0.0, x.as_ref(), &[5.0]), vec![-1.0]);
}

#[test]
fn box_closed_form_clamps() {
    let g = GridSpec::with_delay(0.5, 10, 2, 2).unwrap();
    let x = Segment::constant(g, 0.0);
    let p = ControlProblem::new(
        ControlSet::Box {
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 2.0],
        },
        RunningCost::Quadratic { scale: 1.0 },
        LinearChannel::identity(2, 3.0),
        SegmentFunctional::constant(0.0),
    )
    .unwrap();
    let u = p.minimizer(&MinimizerRule::default(), 0.0, x.as_ref(), &[1.0, 6.0]);
    assert_eq!(u, vec![-0.5, 0.0]);
    let a = p.hamiltonian(&MinimizerRule::default(), 0.0, x.as_ref(), &[1.0, -6.0]);
    let b = p.hamiltonian(&MinimizerRule::grid(101), 0.0, x.as_ref(), &[1.0, -6.0]);
    assert!((a - (0.25 - 0.5 + 4.0 - 12.0)).abs() < 1e-12);
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn invalid_problems_are_rejected() {
    let bad_cost = ControlProblem::new(
        ControlSet::Ball {
            dim: 1,
            radius: 1.0,
        },
        RunningCost::Quadratic { scale: -1.0 },
        LinearChannel::identity(1, 1.0),
        SegmentFunctional::constant(0.0),
    );
    assert!(bad_cost.is_err());
    let mismatch = ControlProblem::new(
        ControlSet::Ball {
            dim: 2,
            radius: 1.0,
        },
        RunningCost::Zero,
        LinearChannel::identity(1, 1.0),
        SegmentFunctional::constant(0.0),
    );
    assert!(mismatch.is_err());
    let g = grid(0.5, 10);
    let loose = ControlProblem::new(
        ControlSet::Ball {
            dim: 1,
            radius: 2.0,
        },
        RunningCost::Zero,
        LinearChannel::identity(1, 1.0),
        SegmentFunctional::constant(0.0),
    )
    .unwrap();
    assert!(matches!(
        loose.check_channel(0.0, Segment::constant(g, 0.0).as_ref()),
        Err(Error::Validation(_))
    ));
}

proptest! {
    #[test]
    fn hamiltonian_is_a_lower_bound_and_attained(z in -4.0f64..4.0, u in -1.0f64..1.0, lo in -2.0f64..0.0) {
        let g = grid(0.5, 10);
        let x = Segment::constant(g, 0.0);
        let p = ball_problem(SegmentFunctional::current());
        let rule = MinimizerRule::default();
        let psi = p.hamiltonian(&rule, 0.0, x.as_ref(), &[z]);
        prop_assert!(psi <= 0.5 * u * u + z * u + 1e-12);
        let us = p.minimizer(&rule, 0.0, x.as_ref(), &[z]);
        prop_assert!(us[0].abs() <= 1.0 + 1e-15);
        prop_assert!((0.5 * us[0] * us[0] + z * us[0] - psi).abs() < 1e-12);

        let b = ControlProblem::new(
            ControlSet::Box { lo: vec![lo], hi: vec![lo + 1.5] },
            RunningCost::Quadratic { scale: 0.3 },
            LinearChannel::identity(1, 3.5),
            SegmentFunctional::constant(0.0),
        ).unwrap();
        let exact = b.hamiltonian(&rule, 0.0, x.as_ref(), &[z]);
        let grid = b.hamiltonian(&MinimizerRule::grid(101), 0.0, x.as_ref(), &[z]);
        let tol = (0.3 * 1.5 + z.abs()) * 1.5 / 100.0;
        prop_assert!(grid >= exact - 1e-12 && grid - exact <= tol);
    }
}

#[test]
fn zero_control_reduces_to_the_uncontrolled_mean() {
    let g = grid(0.5, 25);
    let x = Segment::from_fn(g, |t| 1.0 + t).unwrap();
    let model = ScalarDelayModel::new(
        vec![DelayTerm::Linear {
            coef: -0.5,
            lag: -0.5,
        }],
        vec![DelayTerm::Constant { value: 0.5 }],
    );
    let phi = SegmentFunctional::cylindrical(vec![0.0], OuterMap::Quadratic { scale: 1.0 });
    let p = ball_problem(phi.clone());
    let cfg = SolverConfig::new(21, 2000, 1.0);
    let j = cost(&p, &model, 0.0, &x, &ConstantPolicy::new(vec![0.0]), &cfg).unwrap();
    let e = semigroup_apply(&model, &phi, 0.0, 1.0, &x, &cfg.noise(&g, 0.0).unwrap()).unwrap();
    assert!((j.mean - e.mean).abs() < 1e-12 * e.mean.abs());
}

#[test]
fn deterministic_dynamics_give_exact_cost() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 2.0);
    let model = ScalarDelayModel::new(vec![DelayTerm::Constant { value: 1.0 }], vec![]);
    let p = ball_problem(SegmentFunctional::current());
    let j = cost(
        &p,
        &model,
        0.0,
        &x,
        &ConstantPolicy::new(vec![0.6]),
        &SolverConfig::new(3, 100, 1.0),
    )
    .unwrap();
    assert!((j.mean - (0.5 * 0.36 + 3.0)).abs() < 1e-12);
    assert_eq!(j.se, 0.0);
}

#[test]
fn reweighted_cost_matches_direct_simulation() {
    let g = grid(0.5, 25);
    let x = Segment::from_fn(g, |t| 1.0 + t).unwrap();
    let model = ScalarDelayModel::new(
        vec![DelayTerm::Linear {
            coef: -0.5,
            lag: -0.5,
        }],
        vec![DelayTerm::Constant { value: 0.5 }],
    );
    let p = ball_problem(SegmentFunctional::cylindrical(
        vec![0.0],
        OuterMap::Quadratic { scale: 1.0 },
    ));
    let policy = random_policies(&p.set, 5, 0, 1, 4, 0.0, 1.0)
        .unwrap()
        .remove(0);
    let direct = cost(
        &p,
        &model,
        0.0,
        &x,
        &policy,
        &SolverConfig::new(31, 20_000, 1.0),
    )
    .unwrap();
    let weighted = cost_reweighted(
        &p,
        &model,
        0.0,
        &x,
        &policy,
        &SolverConfig::new(32, 20_000, 1.0),
    )
    .unwrap();
    assert!(
        direct.minus(weighted).within(0.0, 5.0, 0.0),
        "{direct:?} {weighted:?}"
    );
}

#[test]
fn random_policies_stay_in_the_set() {
    let set = ControlSet::Ball {
        dim: 2,
        radius: 0.7,
    };
    let ps = random_policies(&set, 9, 20, 10, 4, 0.0, 1.0).unwrap();
    assert_eq!(ps.len(), 30);
    let again = random_policies(&set, 9, 20, 10, 4, 0.0, 1.0).unwrap();
    assert_eq!(ps, again);
    for p in &ps {
        match p {
            TournamentPolicy::Constant(c) => assert!(set.contains(&c.value, 0.0)),
            TournamentPolicy::Piecewise(pw) => {
                assert_eq!(pw.breaks, vec![0.25, 0.5, 0.75]);
                assert!(pw.values.iter().all(|v| set.contains(v, 0.0)));
            }
        }
    }
}

#[test]
fn ineffective_channel_feedback_is_idle() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 1.0);
    let model = ScalarDelayModel::brownian(1.0);
    let phi = SegmentFunctional::cylindrical(vec![0.0], OuterMap::Quadratic { scale: 1.0 });
    let p = ControlProblem::new(
        ControlSet::Ball {
            dim: 1,
            radius: 1.0,
        },
        RunningCost::Quadratic { scale: 0.5 },
        LinearChannel::zero(1, 1),
        phi.clone(),
    )
    .unwrap();
    let rule = MinimizerRule::default();
    let cfg = SolverConfig::new(41, 5000, 1.0);
    let (_, sol) = value_function(
        &model,
        &HamiltonianDriver::new(&p, rule),
        &phi,
        0.0,
        &x,
        &cfg,
    )
    .unwrap();
    let run = simulate_feedback(&p, &model, &rule, &sol, 0.0, &x, &cfg).unwrap();
    assert!(run
        .ensemble
        .raw_controls()
        .unwrap()
        .iter()
        .all(|u| *u == 0.0));
    let e = semigroup_apply(&model, &phi, 0.0, 1.0, &x, &cfg.noise(&g, 0.0).unwrap()).unwrap();
    assert!((run.cost.mean - e.mean).abs() < 1e-12 * e.mean);
}

#[test]
fn ineffective_channel_without_cost_is_degenerate_equality() {
    let g = grid(0.5, 10);
    let x = Segment::constant(g, 1.0);
    let model = ScalarDelayModel::brownian(1.0);
    let p = ControlProblem::new(
        ControlSet::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        },
        RunningCost::Zero,
        LinearChannel::zero(1, 1),
        SegmentFunctional::cylindrical(
            vec![0.0],
            OuterMap::Softplus {
                strike: 1.0,
                beta: 4.0,
            },
        ),
    )
    .unwrap();
    let policies: Vec<(String, TournamentPolicy)> = random_policies(&p.set, 2, 3, 2, 2, 0.0, 1.0)
        .unwrap()
        .into_iter()
        .map(|q| (q.label(), q))
        .collect();
    let rep = fundamental_relation_check(
        &p,
        &model,
        &MinimizerRule::default(),
        0.0,
        &x,
        &policies,
        &SolverConfig::new(42, 4000, 1.0),
    )
    .unwrap();
    let first = rep.policies[0].cost.mean;
    assert!(rep.policies.iter().all(|r| r.cost.mean == first));
    assert_eq!(rep.feedback.cost.mean, first);
    assert!((first - rep.value.mean).abs() < 1e-12);
    assert!(rep.passed);
}

#[test]
fn feedback_beats_constant_policies_on_the_ball_problem() {
    let g = grid(0.5, 50);
    let x = Segment::constant(g, 0.0);
    let model = ScalarDelayModel::brownian(1.0);
    let p = ball_problem(SegmentFunctional::current());
    let rule = MinimizerRule::default();
    let cfg = SolverConfig::new(51, 4000, 1.0);
    let mut policies: Vec<(String, TournamentPolicy)> =
        random_policies(&p.set, 3, 20, 0, 1, 0.0, 1.0)
            .unwrap()
            .into_iter()
            .map(|q| (q.label(), q))
            .collect();
    policies.push((
        "zero".into(),
        TournamentPolicy::Constant(ConstantPolicy::new(vec![0.0])),
    ));
    let rep = fundamental_relation_check(&p, &model, &rule, 0.0, &x, &policies, &cfg).unwrap();
    assert!(
        (rep.value.mean + 0.5).abs() < 5.0 * rep.value.se + 0.02,
        "{:?}",
        rep.value
    );
    for row in &rep.policies {
        assert!(
            rep.feedback.cost.mean <= row.cost.mean + 2.0 * rep.feedback.cost.minus(row.cost).se,
            "{row:?}"
        );
    }
    assert!(
        rep.feedback_within,
        "{:?} tol {}",
        rep.feedback, rep.feedback_tolerance
    );
    assert!(rep.passed);
    assert!(rep.csv().lines().count() == policies.len() + 2);
}

#[test]
fn running_cost_reduction() {
    let g = grid(1.0, 20);
    let zero = reduce_running_cost(OuterMap::Constant { value: 0.0 }, &g, 0.0, 0.5).unwrap();
    let one = reduce_running_cost(OuterMap::Constant { value: 1.0 }, &g, 0.0, 0.5).unwrap();
    let path = Segment::from_fn(g, |t| 3.0 * t + 1.0).unwrap();
    assert_eq!(zero.eval(path.as_ref()).unwrap(), 0.0);
    assert!((one.eval(path.as_ref()).unwrap() - 0.5).abs() < 1e-12);
    let lin = reduce_running_cost(
        OuterMap::Linear {
            coeffs: vec![1.0],
            offset: 0.0,
        },
        &g,
        0.0,
        0.5,
    )
    .unwrap();
    // ∫_{-0.5}^0 (3θ + 1) dθ, exact for the trapezoid rule.
    assert!((lin.eval(path.as_ref()).unwrap() - (0.5 - 1.5 * 0.25)).abs() < 1e-12);
    let full = reduce_running_cost(OuterMap::Constant { value: 1.0 }, &g, 0.25, 1.25).unwrap();
    assert!((full.eval(path.as_ref()).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        reduce_running_cost(OuterMap::Constant { value: 1.0 }, &g, 0.0, 1.5),
        Err(Error::Config(_))
    ));
}

#[test]
fn problems_round_trip_through_json() {
    let p = ball_problem(SegmentFunctional::current());
    let s = serde_json::to_string(&p).unwrap();
    let q: ControlProblem = serde_json::from_str(&s).unwrap();
    assert_eq!(serde_json::to_string(&q).unwrap(), s);
}

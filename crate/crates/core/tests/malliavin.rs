use delayfbsde_core::malliavin::*;
use delayfbsde_core::noise::NoiseGrid;
use delayfbsde_core::sdde::{simulate_forward, DelayTerm, ScalarDelayModel};
use delayfbsde_core::segment::{GridSpec, OuterMap, Segment, SegmentFunctional, WindowMeasure};
use delayfbsde_core::Error;

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
fn constant_coefficients_give_constant_derivative() {
    let g = GridSpec::with_delay(0.2, 4, 1, 1).unwrap();
    let model = ScalarDelayModel::new(
        vec![DelayTerm::Constant { value: 0.3 }],
        vec![DelayTerm::Constant { value: 0.7 }],
    );
    let noise = NoiseGrid::spanning(1, 5, 1, g.step(), 0.0, 1.0).unwrap();
    let ens = simulate_forward(&model, 0.0, &Segment::constant(g, 0.0), &noise).unwrap();
    let s = 6;
    let st = propagate_derivative(&model, &ens, s).unwrap();
    for p in 0..5 {
        for k in 0..=ens.steps() {
            let want = if k <= s { 0.0 } else { 0.7 };
            assert_eq!(st.value(p, 0, k)[0], want);
        }
    }
}

#[test]
fn first_node_is_sigma_and_earlier_nodes_vanish() {
    let r = 0.3;
    let g = GridSpec::with_delay(r, 30, 1, 1).unwrap();
    let model = sin_cos(r);
    let noise = NoiseGrid::spanning(2, 20, 1, g.step(), 0.0, 1.0).unwrap();
    let ens = simulate_forward(
        &model,
        0.0,
        &Segment::from_fn(g, |t| 0.5 + t).unwrap(),
        &noise,
    )
    .unwrap();
    let s = 40;
    let st = propagate_derivative(&model, &ens, s).unwrap();
    for p in 0..20 {
        let mut sig = [0.0];
        use delayfbsde_core::sdde::CoefficientModel;
        model.diffusion(ens.time(s), ens.snapshot(p, s), &mut sig);
        assert_eq!(st.value(p, 0, s + 1)[0] - sig[0], 0.0);
        assert!((0..=s).all(|k| st.value(p, 0, k)[0] == 0.0));
        assert!(st.segment(p, 0, s).values().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn linear_drift_gives_exponential_derivative() {
    let a = -0.8;
    let g = GridSpec::with_delay(0.1, 100, 1, 1).unwrap();
    let model = ScalarDelayModel::new(
        vec![DelayTerm::Linear { coef: a, lag: 0.0 }],
        vec![DelayTerm::Constant { value: 1.0 }],
    );
    let noise = NoiseGrid::spanning(3, 4, 1, g.step(), 0.0, 1.0).unwrap();
    let ens = simulate_forward(&model, 0.0, &Segment::constant(g, 1.0), &noise).unwrap();
    let s = 200;
    let st = propagate_derivative(&model, &ens, s).unwrap();
    let dt = g.step();
    for k in [s + 1, 500, 1000] {
        let exact = (a * (k - s) as f64 * dt).exp();
        assert!((st.value(0, 0, k)[0] - exact).abs() <= dt * (1.0 + exact));
    }
    let bump = bump_oracle(
        &model,
        &noise,
        s,
        1e-4,
        1000,
        &Segment::constant(g, 1.0),
        &SegmentFunctional::current(),
    )
    .unwrap();
    let exact = (a * 0.8_f64).exp();
    assert!((bump[0][0] - exact).abs() <= dt * (1.0 + exact) + 1e-8);
}

#[test]
fn chain_rule_on_point_evaluation_is_the_derivative_itself() {
    let r = 0.2;
    let g = GridSpec::with_delay(r, 20, 1, 1).unwrap();
    let model = sin_cos(r);
    let noise = NoiseGrid::spanning(4, 10, 1, g.step(), 0.0, 0.6).unwrap();
    let ens = simulate_forward(&model, 0.0, &Segment::constant(g, 0.1), &noise).unwrap();
    let st = propagate_derivative(&model, &ens, 10).unwrap();
    let k = ens.steps();
    let got = chain_rule(&SegmentFunctional::current(), &st, &ens, k).unwrap();
    for p in 0..10 {
        assert_eq!(got[p][0], st.value(p, 0, k)[0]);
    }
}

#[test]
fn functionals_of_the_unperturbed_past_have_zero_derivative() {
    let r = 0.5;
    let g = GridSpec::with_delay(r, 50, 1, 1).unwrap();
    let model = sin_cos(r);
    let noise = NoiseGrid::spanning(5, 10, 1, g.step(), 0.0, 1.0).unwrap();
    let ens = simulate_forward(&model, 0.0, &Segment::constant(g, 0.1), &noise).unwrap();
    let s = 60;
    let k = 80;
    let st = propagate_derivative(&model, &ens, s).unwrap();
    // μ supported on [−r, −0.25] while the derivative lives on (t_s, t_k].
    let mu = WindowMeasure::lebesgue(g, -r).unwrap();
    let mut truncated = WindowMeasure::zero(g);
    for j in 0..=25 {
        truncated.add_density_weight(j, 0, mu.density_weights()[j]);
    }
    let f = SegmentFunctional::window_integral(truncated, OuterMap::Quadratic { scale: 1.0 });
    assert!(chain_rule(&f, &st, &ens, k)
        .unwrap()
        .iter()
        .all(|v| v[0] == 0.0));
}

#[test]
fn chain_rule_agrees_with_bump_oracle() {
    // 95% of paths within 1% relative at Δt = 1e-3 for F = x(0)².
    let r = 0.5;
    let g = GridSpec::with_delay(r, 500, 1, 1).unwrap();
    let model = sin_cos(r);
    let x = Segment::from_fn(g, |t| 0.5 + 0.5 * (4.0 * t).cos()).unwrap();
    let noise = NoiseGrid::spanning(6, 400, 1, g.step(), 0.0, 1.0).unwrap();
    let ens = simulate_forward(&model, 0.0, &x, &noise).unwrap();
    let s = 200;
    let k = ens.steps();
    let f = SegmentFunctional::cylindrical(vec![0.0], OuterMap::Quadratic { scale: 1.0 });
    let st = propagate_derivative(&model, &ens, s).unwrap();
    let cr = chain_rule(&f, &st, &ens, k).unwrap();
    let bump = bump_oracle(&model, &noise, s, 1e-4, k, &x, &f).unwrap();
    let close = cr
        .iter()
        .zip(&bump)
        .filter(|(a, b)| (a[0] - b[0]).abs() <= 1e-2 * b[0].abs())
        .count();
    assert!(close as f64 >= 0.95 * 400.0, "{close}");
    for p in 0..400 {
        let y = ens.state(p, k)[0];
        assert!(
            (cr[p][0] - 2.0 * y * st.value(p, 0, k)[0]).abs() <= 1e-12 * (1.0 + cr[p][0].abs())
        );
    }
}

#[test]
fn first_propagated_increment_is_linear_in_gradient_scale() {
    let r = 0.1;
    let g = GridSpec::with_delay(r, 10, 1, 1).unwrap();
    let noise = NoiseGrid::spanning(7, 3, 1, g.step(), 0.0, 0.5).unwrap();
    let x = Segment::constant(g, 1.0);
    let s = 5;
    let incr = |lam: f64| {
        let model = ScalarDelayModel::new(
            vec![DelayTerm::Linear {
                coef: 0.4 * lam,
                lag: 0.0,
            }],
            vec![
                DelayTerm::Constant { value: 0.9 },
                DelayTerm::Linear {
                    coef: 0.2 * lam,
                    lag: 0.0,
                },
            ],
        );
        let ens = simulate_forward(&model, 0.0, &x, &noise).unwrap();
        let st = propagate_derivative(&model, &ens, s).unwrap();
        (0..3)
            .map(|p| {
                let d0 = st.value(p, 0, s + 1)[0];
                (st.value(p, 0, s + 2)[0] - d0) / d0
            })
            .collect::<Vec<_>>()
    };
    let (one, three) = (incr(1.0), incr(3.0));
    for (a, b) in one.iter().zip(&three) {
        assert!((b - 3.0 * a).abs() <= 1e-12);
    }
}

#[test]
fn missing_gradients_are_a_configuration_error() {
    struct NoGrad;
    impl delayfbsde_core::sdde::CoefficientModel for NoGrad {
        fn dim_n(&self) -> usize {
            1
        }
        fn dim_d(&self) -> usize {
            1
        }
        fn drift(&self, _: f64, _: delayfbsde_core::segment::SegmentRef<'_>, out: &mut [f64]) {
            out[0] = 0.0
        }
        fn diffusion(&self, _: f64, _: delayfbsde_core::segment::SegmentRef<'_>, out: &mut [f64]) {
            out[0] = 1.0
        }
        fn lipschitz(&self) -> f64 {
            0.0
        }
        fn growth(&self) -> f64 {
            1.0
        }
    }
    let g = GridSpec::with_delay(0.1, 2, 1, 1).unwrap();
    let noise = NoiseGrid::spanning(1, 2, 1, g.step(), 0.0, 0.2).unwrap();
    let ens = simulate_forward(&NoGrad, 0.0, &Segment::constant(g, 0.0), &noise).unwrap();
    assert!(matches!(
        propagate_derivative(&NoGrad, &ens, 0),
        Err(Error::Config(_))
    ));
}

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::problem::{norm, ControlProblem, ControlSet, HamiltonianDriver, MinimizerRule};
use crate::bsde::{value_function, BsdeSolution, SolverConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::sdde::{
    girsanov_weight, simulate_controlled, simulate_forward, Channel, CoefficientModel,
    ConstantPolicy, NegatedChannel, PathEnsemble, PiecewiseConstantPolicy, Policy,
};
use crate::segment::{GridSpec, OuterMap, Segment, SegmentFunctional, SegmentRef, WindowMeasure};
use crate::stats::Estimate;

fn running_total<C: Channel>(
    problem: &ControlProblem<C>,
    ens: &PathEnsemble,
    p: usize,
) -> Result<f64> {
    let dt = ens.dt();
    let steps = ens.steps();
    let mut acc = 0.0;
    for k in 0..steps {
        let u = ens
            .control(p, k)
            .ok_or_else(|| Error::Config("ensemble carries no controls".into()))?;
        acc += problem.running_cost.value(u) * dt;
    }
    Ok(acc + problem.terminal.eval(ens.snapshot(p, steps))?)
}

/// Per-path `Σ_k g(u_k) Δt + φ(X_M)` on a controlled ensemble.
pub fn realized_costs<C: Channel>(
    problem: &ControlProblem<C>,
    ens: &PathEnsemble,
) -> Result<Vec<f64>> {
    par::map(ens.num_paths(), |p| running_total(problem, ens, p))
        .into_iter()
        .collect()
}

/// `J(t, x, u)` by direct simulation of the controlled equation.
pub fn cost<C: Channel>(
    problem: &ControlProblem<C>,
    model: &(impl CoefficientModel + ?Sized),
    t: f64,
    x: &Segment,
    policy: &(impl Policy + ?Sized),
    config: &SolverConfig,
) -> Result<Estimate> {
    let noise = config.noise(x.grid(), t)?;
    let ens = simulate_controlled(model, &problem.channel, policy, t, x, &noise)?;
    Ok(Estimate::from_samples(&realized_costs(problem, &ens)?))
}

/// `J(t, x, u)` from uncontrolled paths weighted by the density of the
/// controlled law.
pub fn cost_reweighted<C: Channel>(
    problem: &ControlProblem<C>,
    model: &(impl CoefficientModel + ?Sized),
    t: f64,
    x: &Segment,
    policy: &(impl Policy + ?Sized),
    config: &SolverConfig,
) -> Result<Estimate> {
    let noise = config.noise(x.grid(), t)?;
    let ens = simulate_forward(model, t, x, &noise)?;
    let negated = NegatedChannel(&problem.channel);
    let dt = ens.dt();
    let samples: Vec<f64> = par::map(ens.num_paths(), |p| {
        let w = girsanov_weight(&ens, p, &negated, policy)?;
        let mut u = alloc::vec![0.0; policy.dim_u()];
        let mut acc = 0.0;
        for k in 0..ens.steps() {
            policy.control(p, k, ens.time(k), ens.snapshot(p, k), &mut u);
            acc += problem.running_cost.value(&u) * dt;
        }
        Ok(w * (acc + problem.terminal.eval(ens.snapshot(p, ens.steps()))?))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// `u = Γ₀(t_k, x, Z(t_k, x))` with `Z` read from the regression of a
/// solution of the hamiltonian BSDE on the same time grid.
pub struct BsdeFeedback<'a, C> {
    pub problem: &'a ControlProblem<C>,
    pub rule: MinimizerRule,
    pub solution: &'a BsdeSolution,
}

impl<C: Channel> Policy for BsdeFeedback<'_, C> {
    fn dim_u(&self) -> usize {
        self.problem.set.dim()
    }

    fn control(&self, _path: usize, k: usize, t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        let z = self
            .solution
            .z_at(k, x)
            .unwrap_or_else(|_| alloc::vec![0.0; self.problem.channel.dim_d()]);
        out.copy_from_slice(&self.problem.minimizer(&self.rule, t, x, &z));
    }
}

/// A closed-loop rollout: the controlled ensemble (controls recorded) and its
/// realized cost.
#[derive(Clone, Debug)]
pub struct FeedbackRun {
    pub ensemble: PathEnsemble,
    pub cost: Estimate,
}

/// Simulates the closed-loop equation under the original noise with the
/// feedback read from `solution`.
pub fn simulate_feedback<C: Channel>(
    problem: &ControlProblem<C>,
    model: &(impl CoefficientModel + ?Sized),
    rule: &MinimizerRule,
    solution: &BsdeSolution,
    t: f64,
    x: &Segment,
    config: &SolverConfig,
) -> Result<FeedbackRun> {
    let noise = config.noise(x.grid(), t)?;
    if noise.dt != solution.ensemble().dt() || noise.steps != solution.steps() {
        return Err(Error::Config(
            "feedback run and BSDE solution use different time grids".into(),
        ));
    }
    let policy = BsdeFeedback {
        problem,
        rule: *rule,
        solution,
    };
    let ensemble = simulate_controlled(model, &problem.channel, &policy, t, x, &noise)?;
    let cost = Estimate::from_samples(&realized_costs(problem, &ensemble)?);
    Ok(FeedbackRun { ensemble, cost })
}

/// Open-loop policies drawn for a tournament.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum TournamentPolicy {
    Constant(ConstantPolicy),
    Piecewise(PiecewiseConstantPolicy),
}

impl TournamentPolicy {
    pub fn label(&self) -> String {
        match self {
            Self::Constant(c) => alloc::format!("constant {:?}", c.value),
            Self::Piecewise(p) => alloc::format!("piecewise {:?}", p.values),
        }
    }
}

impl Policy for TournamentPolicy {
    fn dim_u(&self) -> usize {
        match self {
            Self::Constant(c) => c.dim_u(),
            Self::Piecewise(p) => p.dim_u(),
        }
    }

    fn control(&self, path: usize, k: usize, t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        match self {
            Self::Constant(c) => c.control(path, k, t, x, out),
            Self::Piecewise(p) => p.control(path, k, t, x, out),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A uniform draw from `U` (uniform on the points of a finite set).
pub fn sample_control(set: &ControlSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match set {
        ControlSet::Box { lo, hi } => lo
            .iter()
            .zip(hi)
            .map(|(a, b)| a + (b - a) * uniform(rng))
            .collect(),
        ControlSet::Ball { dim, radius } => loop {
            let u: Vec<f64> = (0..*dim)
                .map(|_| radius * (2.0 * uniform(rng) - 1.0))
                .collect();
            if norm(&u) <= *radius {
                break u;
            }
        },
        ControlSet::Finite { points } => {
            points[(rng.next_u64() % points.len() as u64) as usize].clone()
        }
    }
}

/// `constants` random constant policies followed by `piecewise` random
/// policies with `pieces` equal pieces on `[t, T]`.
pub fn random_policies(
    set: &ControlSet,
    seed: u64,
    constants: usize,
    piecewise: usize,
    pieces: usize,
    t: f64,
    horizon: f64,
) -> Result<Vec<TournamentPolicy>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<TournamentPolicy> = (0..constants)
        .map(|_| TournamentPolicy::Constant(ConstantPolicy::new(sample_control(set, &mut rng))))
        .collect();
    let pieces = pieces.max(1);
    let breaks: Vec<f64> = (1..pieces)
        .map(|i| t + (horizon - t) * i as f64 / pieces as f64)
        .collect();
    for _ in 0..piecewise {
        let values = (0..pieces).map(|_| sample_control(set, &mut rng)).collect();
        out.push(TournamentPolicy::Piecewise(PiecewiseConstantPolicy::new(
            breaks.clone(),
            values,
        )?));
    }
    Ok(out)
}

/// One row of a fundamental-relation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub id: usize,
    pub label: String,
    pub cost: Estimate,
    /// `J − v` with the combined standard error.
    pub gap: Estimate,
    /// `J − v < −5 SE`.
    pub violation: bool,
}

/// `J(policy) − v` over a tournament and for the feedback law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalReport {
    pub value: Estimate,
    pub policies: Vec<PolicyOutcome>,
    pub feedback: PolicyOutcome,
    /// `5 SE + Δt(1 + |v|)` for the feedback equality.
    pub feedback_tolerance: f64,
    /// `min (J − v)/SE` over the tournament.
    pub min_gap_in_se: f64,
    pub feedback_within: bool,
    pub passed: bool,
}

impl FundamentalReport {
    /// Columns: policy id, label, J, SE, J − v, flag.
    pub fn csv(&self) -> String {
        let mut s = String::from("policy,label,cost,se,gap,gap_se,violation\n");
        for row in self.policies.iter().chain(core::iter::once(&self.feedback)) {
            s.push_str(&alloc::format!(
                "{},\"{}\",{:.10e},{:.10e},{:.10e},{:.10e},{}\n",
                row.id,
                row.label,
                row.cost.mean,
                row.cost.se,
                row.gap.mean,
                row.gap.se,
                row.violation
            ));
        }
        s
    }
}

/// Solves the hamiltonian BSDE for `v(t, x)`, then evaluates `policies` and
/// the feedback law on the same noise.
pub fn fundamental_relation_check<C: Channel, P: Policy>(
    problem: &ControlProblem<C>,
    model: &(impl CoefficientModel + ?Sized),
    rule: &MinimizerRule,
    t: f64,
    x: &Segment,
    policies: &[(String, P)],
    config: &SolverConfig,
) -> Result<FundamentalReport> {
    problem.check_channel(t, x.as_ref())?;
    let driver = HamiltonianDriver::new(problem, *rule);
    let (value, solution) = value_function(model, &driver, &problem.terminal, t, x, config)?;
    let outcome = |id: usize, label: String, cost: Estimate| {
        let gap = cost.minus(value);
        PolicyOutcome {
            id,
            label,
            cost,
            gap,
            violation: gap.mean < -5.0 * gap.se,
        }
    };
    let mut rows = Vec::with_capacity(policies.len());
    for (i, (label, policy)) in policies.iter().enumerate() {
        rows.push(outcome(
            i,
            label.clone(),
            cost(problem, model, t, x, policy, config)?,
        ));
    }
    let run = simulate_feedback(problem, model, rule, &solution, t, x, config)?;
    let feedback = outcome(policies.len(), "feedback".into(), run.cost);
    let feedback_tolerance =
        5.0 * feedback.gap.se + solution.ensemble().dt() * (1.0 + value.mean.abs());
    let feedback_within = feedback.gap.mean.abs() <= feedback_tolerance;
    let min_gap_in_se = rows
        .iter()
        .map(|r| {
            if r.gap.se > 0.0 {
                r.gap.mean / r.gap.se
            } else {
                f64::INFINITY * r.gap.mean.signum()
            }
        })
        .fold(f64::INFINITY, f64::min);
    let passed = feedback_within && rows.iter().all(|r| !r.violation);
    Ok(FundamentalReport {
        value,
        policies: rows,
        feedback,
        feedback_tolerance,
        min_gap_in_se,
        feedback_within,
        passed,
    })
}

/// `φ₀(x) = ∫_{t−T}^0 ℓ(x(θ)) dθ`, so that `φ₀(X_T) = ∫_t^T ℓ(y_s) ds`.
pub fn reduce_running_cost(
    running: OuterMap,
    grid: &GridSpec,
    t: f64,
    horizon: f64,
) -> Result<SegmentFunctional> {
    let span = horizon - t;
    if span > grid.delay() * (1.0 + 1e-12) {
        return Err(Error::Config(alloc::format!(
            "delay window r = {} is shorter than the horizon T − t = {span}; extend the window to r ≥ T − t",
            grid.delay()
        )));
    }
    let from = if (span - grid.delay()).abs() <= 1e-12 * grid.delay() {
        -grid.delay()
    } else {
        -span
    };
    let measure = WindowMeasure::lebesgue(*grid, from)?;
    Ok(SegmentFunctional::window_integral(measure, running))
}

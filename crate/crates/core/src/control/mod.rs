//! Optimal control with memory: hamiltonian and minimizer selection, costs
//! by direct and reweighted simulation, closed-loop feedback from the BSDE,
//! and policy tournaments against the value function.

mod ops;
mod problem;

pub use ops::{
    cost, cost_reweighted, fundamental_relation_check, random_policies, realized_costs,
    reduce_running_cost, sample_control, simulate_feedback, BsdeFeedback, FeedbackRun,
    FundamentalReport, PolicyOutcome, TournamentPolicy,
};
pub use problem::{
    ControlProblem, ControlSet, HamiltonianDriver, MinimizerMode, MinimizerRule, RunningCost,
};

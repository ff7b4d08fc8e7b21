//! Regression Monte Carlo for the backward equation, the value function
//! `v(t, x) = Y_t^{t,x}` and `∇₀v` through `Z = ∇₀v σ`.

mod basis;
mod driver;
mod solver;

pub use basis::{HingeSpec, Primitive, RegressionBasis};
pub use driver::{Driver, LinearDriver, ZeroDriver};
pub use solver::{
    nabla0_v, nabla0_v_at, solve_backward, value_function, z_identification_check, BackwardScheme,
    BsdeSolution, SolverConfig, StepFit, ZIdentificationReport,
};

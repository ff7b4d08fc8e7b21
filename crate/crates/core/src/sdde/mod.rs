//! Forward simulation of delay equations on the segment space: coefficient
//! models, Euler schemes, controlled dynamics, change-of-measure weights and
//! the transition semigroup.

mod ensemble;
mod model;
mod policy;
mod scalar;
mod semigroup;

pub use ensemble::{simulate_controlled, simulate_forward, PathEnsemble};
pub use model::{CoefficientModel, Scheme};
pub use policy::{
    girsanov_weight, girsanov_weights, Channel, ConstantPolicy, ControlArray, FeedbackPolicy,
    LinearChannel, NegatedChannel, PiecewiseConstantPolicy, Policy,
};
pub use scalar::{DelayTerm, ScalarDelayModel};
pub use semigroup::semigroup_apply;

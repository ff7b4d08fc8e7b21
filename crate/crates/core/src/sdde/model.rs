use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::segment::{GridSpec, SegmentRef, WindowMeasure};

/// Time-stepping scheme for the forward equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler–Maruyama on `y`.
    #[default]
    Euler,
    /// Euler–Maruyama on `log y` componentwise, for strictly positive states
    /// whose coefficients scale with the state (`b = μ·y`, `σ = s·y`).
    LogEuler,
}

/// Drift `b(t, x) ∈ Rⁿ` and diffusion `σ(t, x) ∈ Rⁿˣᵈ` of a delay equation
/// `dy = b(t, y_{t+·}) dt + σ(t, y_{t+·}) dW`.
pub trait CoefficientModel: Send + Sync {
    fn dim_n(&self) -> usize;

    fn dim_d(&self) -> usize;

    fn drift(&self, t: f64, x: SegmentRef<'_>, out: &mut [f64]);

    /// Row-major `n × d`.
    fn diffusion(&self, t: f64, x: SegmentRef<'_>, out: &mut [f64]);

    /// `∇ₓb_i` for each component `i`, or `None` when not provided.
    fn drift_gradient(&self, _t: f64, _x: SegmentRef<'_>) -> Option<Vec<WindowMeasure>> {
        None
    }

    /// `∇ₓσ_{ij}` in row-major order, or `None` when not provided.
    fn diffusion_gradient(&self, _t: f64, _x: SegmentRef<'_>) -> Option<Vec<WindowMeasure>> {
        None
    }

    /// Lipschitz constant of `(b, σ)` in the sup norm.
    fn lipschitz(&self) -> f64;

    /// `K` with `|b(t,x)| + |σ(t,x)| ≤ K(1 + |x|)`.
    fn growth(&self) -> f64;

    fn scheme(&self) -> Scheme {
        Scheme::Euler
    }

    /// Checks that the model can be evaluated on segments over `grid`.
    fn validate(&self, _grid: &GridSpec) -> Result<()> {
        Ok(())
    }
}

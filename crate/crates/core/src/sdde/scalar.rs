use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::model::{CoefficientModel, Scheme};
use crate::error::{Error, Result};
use crate::segment::{GridSpec, SegmentRef, WindowMeasure};

/// One additive term of a scalar coefficient, as a function of the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum DelayTerm {
    Constant {
        value: f64,
    },
    /// `coef · x(lag)`
    Linear {
        coef: f64,
        lag: f64,
    },
    /// `amp · sin(x(lag))`
    Sine {
        amp: f64,
        lag: f64,
    },
    /// `amp · cos(x(lag))`
    Cosine {
        amp: f64,
        lag: f64,
    },
    /// `amp · tanh(x(lag))`
    Tanh {
        amp: f64,
        lag: f64,
    },
}

impl DelayTerm {
    fn lag(&self) -> Option<f64> {
        match *self {
            DelayTerm::Constant { .. } => None,
            DelayTerm::Linear { lag, .. }
            | DelayTerm::Sine { lag, .. }
            | DelayTerm::Cosine { lag, .. }
            | DelayTerm::Tanh { lag, .. } => Some(lag),
        }
    }

    fn value(&self, x: SegmentRef<'_>) -> f64 {
        let at = |lag: f64| x.component_at(lag, 0).unwrap_or(f64::NAN);
        match *self {
            DelayTerm::Constant { value } => value,
            DelayTerm::Linear { coef, lag } => coef * at(lag),
            DelayTerm::Sine { amp, lag } => amp * at(lag).sin(),
            DelayTerm::Cosine { amp, lag } => amp * at(lag).cos(),
            DelayTerm::Tanh { amp, lag } => amp * at(lag).tanh(),
        }
    }

    fn derivative(&self, x: SegmentRef<'_>) -> f64 {
        let at = |lag: f64| x.component_at(lag, 0).unwrap_or(f64::NAN);
        match *self {
            DelayTerm::Constant { .. } => 0.0,
            DelayTerm::Linear { coef, .. } => coef,
            DelayTerm::Sine { amp, lag } => amp * at(lag).cos(),
            DelayTerm::Cosine { amp, lag } => -amp * at(lag).sin(),
            DelayTerm::Tanh { amp, lag } => {
                let c = at(lag).cosh();
                amp / (c * c)
            }
        }
    }

    fn slope_bound(&self) -> f64 {
        match *self {
            DelayTerm::Constant { .. } => 0.0,
            DelayTerm::Linear { coef, .. } => coef.abs(),
            DelayTerm::Sine { amp, .. }
            | DelayTerm::Cosine { amp, .. }
            | DelayTerm::Tanh { amp, .. } => amp.abs(),
        }
    }

    fn growth_pair(&self) -> (f64, f64) {
        // (constant part, linear part) of |term| ≤ a + b|x|
        match *self {
            DelayTerm::Constant { value } => (value.abs(), 0.0),
            DelayTerm::Linear { coef, .. } => (0.0, coef.abs()),
            DelayTerm::Sine { amp, .. }
            | DelayTerm::Cosine { amp, .. }
            | DelayTerm::Tanh { amp, .. } => (amp.abs(), 0.0),
        }
    }
}

/// Scalar (`n = d = 1`) delay equation whose drift and volatility are sums of
/// [`DelayTerm`]s evaluated at fixed lags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarDelayModel {
    #[serde(default)]
    pub drift: Vec<DelayTerm>,
    #[serde(default)]
    pub diffusion: Vec<DelayTerm>,
}

impl ScalarDelayModel {
    pub fn new(drift: Vec<DelayTerm>, diffusion: Vec<DelayTerm>) -> Self {
        Self { drift, diffusion }
    }

    /// `dy = σ dW` with constant σ.
    pub fn brownian(sigma: f64) -> Self {
        Self::new(
            Vec::new(),
            alloc::vec![DelayTerm::Constant { value: sigma }],
        )
    }

    fn sum(terms: &[DelayTerm], x: SegmentRef<'_>) -> f64 {
        terms.iter().map(|t| t.value(x)).sum()
    }

    fn gradient(terms: &[DelayTerm], x: SegmentRef<'_>) -> WindowMeasure {
        let mut mu = WindowMeasure::zero(*x.grid());
        for term in terms {
            if let Some(lag) = term.lag() {
                let d = term.derivative(x);
                if d != 0.0 {
                    add_point_mass(&mut mu, x.grid(), lag, d);
                }
            }
        }
        mu
    }
}

/// Mass `d` at θ, split over the neighbouring nodes when θ is off-grid.
fn add_point_mass(mu: &mut WindowMeasure, grid: &GridSpec, theta: f64, d: f64) {
    if let Ok((j, w)) = grid.locate(theta) {
        let _ = mu.add_atom(grid.theta(j), &[d], 1.0 - w);
        if w != 0.0 {
            let _ = mu.add_atom(grid.theta(j + 1), &[d], w);
        }
    }
}

impl CoefficientModel for ScalarDelayModel {
    fn dim_n(&self) -> usize {
        1
    }

    fn dim_d(&self) -> usize {
        1
    }

    fn drift(&self, _t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        out[0] = Self::sum(&self.drift, x);
    }

    fn diffusion(&self, _t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        out[0] = Self::sum(&self.diffusion, x);
    }

    fn drift_gradient(&self, _t: f64, x: SegmentRef<'_>) -> Option<Vec<WindowMeasure>> {
        Some(alloc::vec![Self::gradient(&self.drift, x)])
    }

    fn diffusion_gradient(&self, _t: f64, x: SegmentRef<'_>) -> Option<Vec<WindowMeasure>> {
        Some(alloc::vec![Self::gradient(&self.diffusion, x)])
    }

    fn lipschitz(&self) -> f64 {
        self.drift
            .iter()
            .chain(&self.diffusion)
            .map(DelayTerm::slope_bound)
            .sum()
    }

    fn growth(&self) -> f64 {
        let (a, b) = self
            .drift
            .iter()
            .chain(&self.diffusion)
            .map(DelayTerm::growth_pair)
            .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        a.max(b)
    }

    fn scheme(&self) -> Scheme {
        Scheme::Euler
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim_n() != 1 || grid.dim_d() != 1 {
            return Err(Error::Config("scalar delay model needs n = d = 1".into()));
        }
        for term in self.drift.iter().chain(&self.diffusion) {
            if let Some(lag) = term.lag() {
                grid.locate(lag).map_err(|_| {
                    Error::Config(alloc::format!(
                        "lag {lag} lies outside the delay window [-{}, 0]",
                        grid.delay()
                    ))
                })?;
            }
        }
        Ok(())
    }
}

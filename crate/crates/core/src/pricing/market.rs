#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdde::{CoefficientModel, Scheme};
use crate::segment::{GridSpec, SegmentRef};

/// A per-unit coefficient of the price dynamics (`μ` or `σ`) as a function of
/// the price segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MarketCoefficient {
    Constant {
        value: f64,
    },
    /// `base + amp · tanh(x(lag)/x(0) − 1)`, `lag = −r` when absent.
    DelayedTanh {
        base: f64,
        amp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lag: Option<f64>,
    },
}

impl MarketCoefficient {
    pub fn eval(&self, x: SegmentRef<'_>) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::DelayedTanh { base, amp, lag } => {
                let lag = lag.unwrap_or(-x.grid().delay());
                let past = x.component_at(lag, 0).unwrap_or(f64::NAN);
                base + amp * (past / x.now()[0] - 1.0).tanh()
            }
        }
    }

    /// `inf |c|` over all positive segments.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Self::Constant { value } => value.abs(),
            Self::DelayedTanh { base, amp, .. } => (base.abs() - amp.abs()).max(0.0),
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match *self {
            Self::Constant { value } => value.abs(),
            Self::DelayedTanh { base, amp, .. } => base.abs() + amp.abs(),
        }
    }

    fn lag(&self) -> Option<f64> {
        match *self {
            Self::Constant { .. } => None,
            Self::DelayedTanh { lag, .. } => lag,
        }
    }
}

/// `dS = μ(t, S_{t+·}) S dt + σ(t, S_{t+·}) S dW`, bond `B_t = e^{ρt}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub drift: MarketCoefficient,
    pub vol: MarketCoefficient,
    /// Declared lower bound on `|σ|`.
    pub floor: f64,
    pub rate: f64,
}

impl MarketModel {
    pub fn black_scholes(mu: f64, sigma: f64, rate: f64) -> Self {
        Self {
            drift: MarketCoefficient::Constant { value: mu },
            vol: MarketCoefficient::Constant { value: sigma },
            floor: sigma.abs(),
            rate,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim_n() != 1 || grid.dim_d() != 1 {
            return Err(Error::Config(
                "the market has one asset and one noise: n = d = 1".into(),
            ));
        }
        if !(self.floor > 0.0) || !(self.rate >= 0.0) {
            return Err(Error::Config(
                "market needs a positive volatility floor and a nonnegative rate".into(),
            ));
        }
        if self.vol.lower_bound() < self.floor * (1.0 - 1e-12) {
            return Err(Error::Config(alloc::format!(
                "volatility can fall to {} below the declared floor {}",
                self.vol.lower_bound(),
                self.floor
            )));
        }
        for lag in [self.drift.lag(), self.vol.lag()].into_iter().flatten() {
            grid.locate(lag)?;
        }
        Ok(())
    }

    /// `σ(t, x)`, checked against the floor.
    pub fn volatility(&self, x: SegmentRef<'_>) -> Result<f64> {
        let s = self.vol.eval(x);
        if !(s.abs() >= self.floor) {
            return Err(Error::Validation(alloc::format!(
                "volatility {s} is below the declared floor {}",
                self.floor
            )));
        }
        Ok(s)
    }

    /// `θ = (μ − ρ)/σ`.
    pub fn risk_premium(&self, _t: f64, x: SegmentRef<'_>) -> Result<f64> {
        Ok((self.drift.eval(x) - self.rate) / self.volatility(x)?)
    }

    /// The price dynamics under the risk-neutral measure (drift `ρS`).
    pub fn risk_neutral(&self) -> PriceDynamics<'_> {
        PriceDynamics {
            market: self,
            risk_neutral: true,
        }
    }

    /// The price dynamics under the original measure (drift `μS`).
    pub fn physical(&self) -> PriceDynamics<'_> {
        PriceDynamics {
            market: self,
            risk_neutral: false,
        }
    }
}

/// [`MarketModel`] as a coefficient model, stepped in `log S`.
#[derive(Clone, Copy, Debug)]
pub struct PriceDynamics<'a> {
    pub market: &'a MarketModel,
    pub risk_neutral: bool,
}

impl CoefficientModel for PriceDynamics<'_> {
    fn dim_n(&self) -> usize {
        1
    }

    fn dim_d(&self) -> usize {
        1
    }

    fn drift(&self, _t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        let mu = if self.risk_neutral {
            self.market.rate
        } else {
            self.market.drift.eval(x)
        };
        out[0] = mu * x.now()[0];
    }

    fn diffusion(&self, _t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        out[0] = self.market.vol.eval(x) * x.now()[0];
    }

    fn lipschitz(&self) -> f64 {
        self.market.drift.upper_bound().max(self.market.rate) + self.market.vol.upper_bound()
    }

    fn growth(&self) -> f64 {
        self.lipschitz()
    }

    fn scheme(&self) -> Scheme {
        Scheme::LogEuler
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        self.market.validate(grid)
    }
}

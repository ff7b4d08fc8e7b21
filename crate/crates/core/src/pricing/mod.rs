//! Delayed Black–Scholes market: risk-neutral pricing through the backward
//! equation `dV = ρV dt + Z dW̄`, the hedge `π = Z/σ`, and replication of
//! path-dependent claims.

mod market;

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use market::{MarketCoefficient, MarketModel, PriceDynamics};

use crate::bsde::{solve_backward, BsdeSolution, LinearDriver, RegressionBasis, SolverConfig};
use crate::error::{Error, Result};
use crate::noise::NoiseGrid;
use crate::par;
use crate::sdde::simulate_forward;
use crate::segment::{GridSpec, OuterMap, Segment, SegmentFunctional, SegmentRef};
use crate::stats::Estimate;

/// Library payoffs on the price segment `S_{T+·}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "claim")]
pub enum Claim {
    Constant {
        value: f64,
    },
    /// `max(S_T − K, 0)`.
    Call {
        strike: f64,
    },
    /// `softplus_β(S_T − K)`.
    SmoothCall {
        strike: f64,
        beta: f64,
    },
    /// `softplus_β(mean of S over the window − K)`.
    WindowAverageCall {
        strike: f64,
        beta: f64,
    },
    /// `softplus_β(S_{T−r} − K)`.
    FixedLag {
        strike: f64,
        beta: f64,
    },
}

impl Claim {
    pub fn functional(&self, grid: &GridSpec) -> SegmentFunctional {
        let r = grid.delay();
        match *self {
            Self::Constant { value } => SegmentFunctional::constant(value),
            Self::Call { strike } => {
                SegmentFunctional::cylindrical(alloc::vec![0.0], OuterMap::Call { strike })
            }
            Self::SmoothCall { strike, beta } => SegmentFunctional::cylindrical(
                alloc::vec![0.0],
                OuterMap::Softplus { strike, beta },
            ),
            Self::WindowAverageCall { strike, beta } => SegmentFunctional::composite(
                OuterMap::Softplus { strike, beta },
                alloc::vec![SegmentFunctional::window_average(grid)],
            ),
            Self::FixedLag { strike, beta } => {
                SegmentFunctional::cylindrical(alloc::vec![-r], OuterMap::Softplus { strike, beta })
            }
        }
    }

    /// The standard basis with eight hinges on the primitive the payoff
    /// depends on.
    pub fn basis(&self, grid: &GridSpec) -> RegressionBasis {
        let b = RegressionBasis::standard(grid);
        match self {
            Self::Constant { .. } => b,
            Self::Call { .. } | Self::SmoothCall { .. } => b.with_hinges(0, 8),
            Self::FixedLag { .. } => b.with_hinges(2, 8),
            Self::WindowAverageCall { .. } => b.with_hinges(3, 8),
        }
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Lognormal call price and delta `(C, ∂C/∂S)`.
pub fn bs_closed_form(spot: f64, strike: f64, sigma: f64, rate: f64, maturity: f64) -> (f64, f64) {
    if strike <= 0.0 {
        return (spot, 1.0);
    }
    let vol = sigma * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * sigma * sigma) * maturity) / vol;
    let d2 = d1 - vol;
    let discount = (-rate * maturity).exp();
    let delta = normal_cdf(d1);
    (spot * delta - strike * discount * normal_cdf(d2), delta)
}

/// BSDE price with the discounted-payoff estimate on the same paths.
#[derive(Clone, Debug)]
pub struct Pricing {
    pub price: Estimate,
    /// `e^{−ρ(T−t)} E φ(S_{T+·})`.
    pub discounted: Estimate,
    pub solution: BsdeSolution,
}

/// Prices `claim` at `(t, s)`: risk-neutral paths and the backward equation
/// with driver `ψ = ρy`.
pub fn price(
    market: &MarketModel,
    claim: &Claim,
    t: f64,
    s: &Segment,
    config: &SolverConfig,
) -> Result<Pricing> {
    let grid = *s.grid();
    market.validate(&grid)?;
    let phi = claim.functional(&grid);
    let basis = config.basis.clone().unwrap_or_else(|| claim.basis(&grid));
    let noise = config.noise(&grid, t)?;
    let ens = simulate_forward(&market.risk_neutral(), t, s, &noise)?;
    let discount = (-market.rate * (config.horizon - t)).exp();
    let payoffs: Vec<f64> = par::map(ens.num_paths(), |p| {
        phi.eval(ens.snapshot(p, ens.steps())).map(|v| v * discount)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let discounted = Estimate::from_samples(&payoffs);
    let solution = solve_backward(
        ens,
        &LinearDriver { rate: market.rate },
        &phi,
        &basis,
        &config.scheme,
    )?;
    let se = solution.value_se(config.bootstrap, config.seed ^ 0x5eed_b007);
    Ok(Pricing {
        price: Estimate::new(solution.value_at_start(), se),
        discounted,
        solution,
    })
}

/// `π = Z(t_k, x)/σ(t_k, x)`: the amount held in the risky asset.
pub fn hedge_strategy(
    solution: &BsdeSolution,
    market: &MarketModel,
    k: usize,
    x: SegmentRef<'_>,
) -> Result<f64> {
    let sigma = market.volatility(x)?;
    Ok(solution.z_at(k, x)?[0] / sigma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub seed: u64,
    pub horizon: f64,
    /// Delay window `r`; every time step must divide it.
    pub delay: f64,
    /// Time steps of the ladder, coarsest first.
    pub steps: Vec<f64>,
    /// Paths of the hedging simulation.
    pub paths: usize,
    /// Paths of the pricing regression.
    pub pricing_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationLevel {
    pub dt: f64,
    pub price: Estimate,
    /// `E[(V_T − φ)²]^{1/2}` with a delta-method standard error.
    pub l2_error: Estimate,
    pub relative_error: f64,
    /// `E[V_T − φ]`.
    pub mean_error: Estimate,
    /// Hedge at the start.
    pub hedge0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub levels: Vec<ReplicationLevel>,
    /// Each refinement lowers the L² error up to 2 combined SE.
    pub decreasing: bool,
}

/// Self-financing replication under the original measure:
/// `V_{k+1} = V_k(1 + ρΔt) + π_k((S_{k+1} − S_k)/S_k − ρΔt)` from
/// `V_0 = price`, for each time step of the ladder.
pub fn replication_test(
    market: &MarketModel,
    claim: &Claim,
    t: f64,
    initial: impl Fn(f64) -> f64,
    config: &ReplicationConfig,
) -> Result<ReplicationReport> {
    let mut levels = Vec::with_capacity(config.steps.len());
    for &dt in &config.steps {
        let m = (config.delay / dt).round() as usize;
        if m == 0 || (m as f64 * dt - config.delay).abs() > 1e-9 * config.delay {
            return Err(Error::Config(alloc::format!(
                "time step {dt} does not divide the delay window {}",
                config.delay
            )));
        }
        let grid = GridSpec::with_delay(config.delay, m, 1, 1)?;
        let s = Segment::from_fn(grid, &initial)?;
        let solver = SolverConfig::new(config.seed, config.pricing_paths, config.horizon);
        let pricing = price(market, claim, t, &s, &solver)?;
        levels.push(replicate(market, claim, t, &s, &pricing, config, dt)?);
    }
    let decreasing = levels.windows(2).all(|w| {
        w[1].l2_error.mean <= w[0].l2_error.mean + 2.0 * w[1].l2_error.minus(w[0].l2_error).se
    });
    Ok(ReplicationReport { levels, decreasing })
}

fn replicate(
    market: &MarketModel,
    claim: &Claim,
    t: f64,
    s: &Segment,
    pricing: &Pricing,
    config: &ReplicationConfig,
    dt: f64,
) -> Result<ReplicationLevel> {
    let grid = *s.grid();
    let phi = claim.functional(&grid);
    let noise = NoiseGrid::spanning(
        config.seed.wrapping_add(1),
        config.paths,
        1,
        dt,
        t,
        config.horizon,
    )?;
    let ens = simulate_forward(&market.physical(), t, s, &noise)?;
    let sol = &pricing.solution;
    let v0 = pricing.price.mean;
    let rho = market.rate;
    let errors: Vec<f64> = par::map(ens.num_paths(), |p| {
        let mut v = v0;
        for k in 0..ens.steps() {
            let pi = hedge_strategy(sol, market, k, ens.snapshot(p, k))?;
            let (s0, s1) = (ens.state(p, k)[0], ens.state(p, k + 1)[0]);
            v = v * (1.0 + rho * dt) + pi * ((s1 - s0) / s0 - rho * dt);
        }
        Ok(v - phi.eval(ens.snapshot(p, ens.steps()))?)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let ms = Estimate::from_samples(&squares);
    let l2 = ms.mean.sqrt();
    let l2_error = Estimate::new(l2, if l2 > 0.0 { ms.se / (2.0 * l2) } else { 0.0 });
    Ok(ReplicationLevel {
        dt,
        price: pricing.price,
        l2_error,
        relative_error: l2 / pricing.price.mean.abs(),
        mean_error: Estimate::from_samples(&errors),
        hedge0: hedge_strategy(sol, market, 0, s.as_ref())?,
    })
}

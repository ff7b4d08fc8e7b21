use alloc::vec::Vec;

use super::ensemble::simulate_forward;
use super::model::CoefficientModel;
use crate::error::{Error, Result};
use crate::noise::{steps_between, NoiseGrid};
use crate::par;
use crate::segment::{Segment, SegmentFunctional};
use crate::stats::Estimate;

/// `P_{t,τ}[φ](x) = E φ(X_τ^{t,x})` by Monte Carlo over the paths of `noise`.
///
/// Only the first `(τ − t)/Δt` steps of the noise are used; at `τ = t` the
/// result is `φ(x)` with zero standard error.
pub fn semigroup_apply(
    model: &(impl CoefficientModel + ?Sized),
    phi: &SegmentFunctional,
    t: f64,
    tau: f64,
    x: &Segment,
    noise: &NoiseGrid,
) -> Result<Estimate> {
    let steps = steps_between(t, tau, noise.dt)?;
    if steps == 0 {
        return Ok(Estimate::new(phi.eval(x.as_ref())?, 0.0));
    }
    if steps > noise.steps {
        return Err(Error::Domain(alloc::format!(
            "τ = {tau} lies beyond the noise horizon {}",
            noise.horizon()
        )));
    }
    let ens = simulate_forward(model, t, x, &noise.truncated(steps))?;
    let values: Vec<f64> = par::map(ens.num_paths(), |p| phi.eval(ens.snapshot(p, steps)))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

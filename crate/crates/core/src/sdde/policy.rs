use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::ensemble::PathEnsemble;
use crate::error::{Error, Result};
use crate::par;
use crate::segment::SegmentRef;

/// A control process: either open-loop (indexed by path and step) or a
/// feedback map of `(t, X_t)`.
pub trait Policy: Send + Sync {
    fn dim_u(&self) -> usize;

    /// Control at local path `path`, step `k`, time `t`, state `x`.
    fn control(&self, path: usize, k: usize, t: f64, x: SegmentRef<'_>, out: &mut [f64]);
}

/// `h(t, x, u) ∈ Rᵈ`, the direction in which a control shifts the noise.
pub trait Channel: Send + Sync {
    fn dim_u(&self) -> usize;

    fn dim_d(&self) -> usize;

    fn apply(&self, t: f64, x: SegmentRef<'_>, u: &[f64], out: &mut [f64]);

    /// Declared bound on the Euclidean norm of `h` over the admissible controls.
    fn bound(&self) -> f64;

    /// Applies the channel and enforces the declared bound.
    fn apply_checked(&self, t: f64, x: SegmentRef<'_>, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply(t, x, u, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= self.bound() * (1.0 + 1e-12) + 1e-300) {
            return Err(Error::Validation(alloc::format!(
                "channel value norm {norm} exceeds declared bound {}",
                self.bound()
            )));
        }
        Ok(())
    }
}

/// `u_t ≡ value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantPolicy {
    pub value: Vec<f64>,
}

impl ConstantPolicy {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }
}

impl Policy for ConstantPolicy {
    fn dim_u(&self) -> usize {
        self.value.len()
    }

    fn control(&self, _path: usize, _k: usize, _t: f64, _x: SegmentRef<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
}

/// Deterministic, piecewise constant in time: `values[i]` applies on
/// `[breaks[i-1], breaks[i])` (with `breaks[-1] = −∞`, last piece open).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantPolicy {
    pub breaks: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseConstantPolicy {
    pub fn new(breaks: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != breaks.len() + 1 || values.is_empty() {
            return Err(Error::Config(
                "piecewise policy needs one more value than breakpoints".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Config(
                "piecewise policy values have mixed dimensions".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(
                "piecewise policy breakpoints must be sorted".into(),
            ));
        }
        Ok(Self { breaks, values })
    }
}

impl Policy for PiecewiseConstantPolicy {
    fn dim_u(&self) -> usize {
        self.values[0].len()
    }

    fn control(&self, _path: usize, _k: usize, t: f64, _x: SegmentRef<'_>, out: &mut [f64]) {
        let piece = self.breaks.partition_point(|b| *b <= t);
        out.copy_from_slice(&self.values[piece]);
    }
}

/// Precomputed per-path, per-step controls (`paths × steps × dim_u`).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlArray {
    dim_u: usize,
    steps: usize,
    data: Vec<f64>,
}

impl ControlArray {
    pub fn new(dim_u: usize, steps: usize, data: Vec<f64>) -> Result<Self> {
        if dim_u == 0 || steps == 0 || !data.len().is_multiple_of(dim_u * steps) {
            return Err(Error::Config(
                "control array length is not paths × steps × dim".into(),
            ));
        }
        Ok(Self { dim_u, steps, data })
    }

    pub fn num_paths(&self) -> usize {
        self.data.len() / (self.dim_u * self.steps)
    }
}

impl Policy for ControlArray {
    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn control(&self, path: usize, k: usize, _t: f64, _x: SegmentRef<'_>, out: &mut [f64]) {
        let i = (path * self.steps + k) * self.dim_u;
        out.copy_from_slice(&self.data[i..i + self.dim_u]);
    }
}

/// Feedback law `u = f(t, x)`.
pub struct FeedbackPolicy<F> {
    dim_u: usize,
    law: F,
}

impl<F> FeedbackPolicy<F>
where
    F: Fn(f64, SegmentRef<'_>, &mut [f64]) + Send + Sync,
{
    pub fn new(dim_u: usize, law: F) -> Self {
        Self { dim_u, law }
    }
}

impl<F> Policy for FeedbackPolicy<F>
where
    F: Fn(f64, SegmentRef<'_>, &mut [f64]) + Send + Sync,
{
    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn control(&self, _path: usize, _k: usize, t: f64, x: SegmentRef<'_>, out: &mut [f64]) {
        (self.law)(t, x, out)
    }
}

/// `h(t, x, u) = G u` for a fixed `d × k` gain matrix (row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearChannel {
    pub dim_d: usize,
    pub dim_u: usize,
    pub gain: Vec<f64>,
    pub bound: f64,
}

impl LinearChannel {
    pub fn new(dim_d: usize, dim_u: usize, gain: Vec<f64>, bound: f64) -> Result<Self> {
        if gain.len() != dim_d * dim_u {
            return Err(Error::Config("channel gain must be d × k".into()));
        }
        if !(bound >= 0.0) {
            return Err(Error::Config("channel bound must be nonnegative".into()));
        }
        Ok(Self {
            dim_d,
            dim_u,
            gain,
            bound,
        })
    }

    /// `h = u` with `|u| ≤ bound` on the control set.
    pub fn identity(dim: usize, bound: f64) -> Self {
        let mut gain = alloc::vec![0.0; dim * dim];
        (0..dim).for_each(|i| gain[i * dim + i] = 1.0);
        Self {
            dim_d: dim,
            dim_u: dim,
            gain,
            bound,
        }
    }

    /// `h ≡ 0`: controls do not affect the state.
    pub fn zero(dim_d: usize, dim_u: usize) -> Self {
        Self {
            dim_d,
            dim_u,
            gain: alloc::vec![0.0; dim_d * dim_u],
            bound: 0.0,
        }
    }
}

impl Channel for LinearChannel {
    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn dim_d(&self) -> usize {
        self.dim_d
    }

    fn apply(&self, _t: f64, _x: SegmentRef<'_>, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.gain[i * self.dim_u..(i + 1) * self.dim_u]
                .iter()
                .zip(u)
                .map(|(g, v)| g * v)
                .sum();
        }
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// `−h`. Weighting uncontrolled paths with the negated channel yields the law
/// of the paths controlled through `h`.
pub struct NegatedChannel<'a, C: ?Sized>(pub &'a C);

impl<C: Channel + ?Sized> Channel for NegatedChannel<'_, C> {
    fn dim_u(&self) -> usize {
        self.0.dim_u()
    }

    fn dim_d(&self) -> usize {
        self.0.dim_d()
    }

    fn apply(&self, t: f64, x: SegmentRef<'_>, u: &[f64], out: &mut [f64]) {
        self.0.apply(t, x, u, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }

    fn bound(&self) -> f64 {
        self.0.bound()
    }
}

/// `exp(−Σ h_k·ΔW_k − ½ Σ |h_k|² Δt)` along path `path`, with `h_k` evaluated
/// on the recorded state and the policy's control at each step.
pub fn girsanov_weight(
    ensemble: &PathEnsemble,
    path: usize,
    channel: &(impl Channel + ?Sized),
    policy: &(impl Policy + ?Sized),
) -> Result<f64> {
    let d = ensemble.noise().dim_d;
    if channel.dim_d() != d || channel.dim_u() != policy.dim_u() {
        return Err(Error::Config(
            "channel, policy and noise dimensions disagree".into(),
        ));
    }
    let dt = ensemble.dt();
    let mut u = alloc::vec![0.0; policy.dim_u()];
    let mut h = alloc::vec![0.0; d];
    let mut log_w = 0.0;
    for k in 0..ensemble.steps() {
        let t = ensemble.time(k);
        let x = ensemble.snapshot(path, k);
        policy.control(path, k, t, x, &mut u);
        channel.apply_checked(t, x, &u, &mut h)?;
        let dw = ensemble.increment(path, k);
        log_w -= h.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
        log_w -= 0.5 * h.iter().map(|a| a * a).sum::<f64>() * dt;
    }
    Ok(log_w.exp())
}

/// [`girsanov_weight`] for every path, in path order.
pub fn girsanov_weights(
    ensemble: &PathEnsemble,
    channel: &(impl Channel + ?Sized),
    policy: &(impl Policy + ?Sized),
) -> Result<Vec<f64>> {
    par::map(ensemble.num_paths(), |p| {
        girsanov_weight(ensemble, p, channel, policy)
    })
    .into_iter()
    .collect()
}

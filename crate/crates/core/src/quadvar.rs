//! Joint quadratic variation `C^ε` of a functional of the segment process
//! with a Wiener component, and its `∇₀` limit.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::sdde::{CoefficientModel, PathEnsemble};
use crate::segment::{SegmentFunctional, SegmentRef};
use crate::stats::{combined_se, Estimate};

/// A time-dependent functional `u(t, x)` with a declared `∇₀u`.
pub trait TimeFunctional: Send + Sync {
    fn value(&self, t: f64, x: SegmentRef<'_>) -> Result<f64>;

    /// The mass at 0 of `∇ₓu(t, x)`.
    fn nabla0(&self, t: f64, x: SegmentRef<'_>) -> Result<Vec<f64>>;
}

impl TimeFunctional for SegmentFunctional {
    fn value(&self, _t: f64, x: SegmentRef<'_>) -> Result<f64> {
        self.eval(x)
    }

    fn nabla0(&self, _t: f64, x: SegmentRef<'_>) -> Result<Vec<f64>> {
        Ok(self.gradient(x)?.nabla0().to_vec())
    }
}

/// `u(t, x) = f(t)`, independent of the state.
pub struct TimeOnly<F>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> TimeFunctional for TimeOnly<F> {
    fn value(&self, t: f64, _x: SegmentRef<'_>) -> Result<f64> {
        Ok((self.0)(t))
    }

    fn nabla0(&self, _t: f64, x: SegmentRef<'_>) -> Result<Vec<f64>> {
        Ok(alloc::vec![0.0; x.grid().dim_n()])
    }
}

/// Grid indices `(first, end, lag)` for a window `[start, stop]` on a path
/// sampled at `t0 + kΔt`, `k < len`.
fn window_indices(
    len: usize,
    t0: f64,
    dt: f64,
    eps: f64,
    window: (f64, f64),
) -> Result<(usize, usize, usize)> {
    let on_grid = |v: f64, what: &str| -> Result<usize> {
        let s = v / dt;
        let k = s.round();
        if k < 0.0 || (s - k).abs() > 1e-9 * s.abs().max(1.0) {
            return Err(Error::Config(alloc::format!(
                "{what} {v} is not a multiple of the time step {dt}"
            )));
        }
        Ok(k as usize)
    };
    let lag = on_grid(eps, "ε")?;
    if lag == 0 {
        return Err(Error::Config("ε must be at least one time step".into()));
    }
    let first = on_grid(window.0 - t0, "window start offset")?;
    let end = on_grid(window.1 - t0, "window end offset")?;
    if end < first {
        return Err(Error::Domain("window end precedes its start".into()));
    }
    if end + lag > len.saturating_sub(1) {
        return Err(Error::Domain(alloc::format!(
            "window end {} plus ε = {eps} exceeds the path horizon {}",
            window.1,
            t0 + (len.saturating_sub(1)) as f64 * dt
        )));
    }
    Ok((first, end, lag))
}

/// `(1/ε) Σ_k (u_{k+e} − u_k)(W_{k+e} − W_k) Δt` over `t_k ∈ [start, stop)`,
/// with `e = ε/Δt`. `u` and `w` are sampled at `t0 + kΔt`.
pub fn joint_qv_estimate(
    u: &[f64],
    w: &[f64],
    t0: f64,
    dt: f64,
    eps: f64,
    window: (f64, f64),
) -> Result<f64> {
    if u.len() != w.len() {
        return Err(Error::Config("u and W paths have different lengths".into()));
    }
    let (first, end, lag) = window_indices(u.len(), t0, dt, eps, window)?;
    let acc: f64 = (first..end)
        .map(|k| (u[k + lag] - u[k]) * (w[k + lag] - w[k]))
        .sum();
    Ok(acc * dt / eps)
}

/// `Σ_k σ^i(t_k, X_k)·∇₀u(t_k, X_k) Δt` over `t_k ∈ [start, stop)`, per path.
pub fn qv_limit_prediction(
    model: &(impl CoefficientModel + ?Sized),
    u: &(impl TimeFunctional + ?Sized),
    ensemble: &PathEnsemble,
    window: (f64, f64),
    component: usize,
) -> Result<Vec<f64>> {
    let (n, d) = (ensemble.grid().dim_n(), ensemble.grid().dim_d());
    if component >= d {
        return Err(Error::Config(alloc::format!(
            "noise component {component} out of range (d = {d})"
        )));
    }
    let dt = ensemble.dt();
    let (first, end, _) = window_indices(ensemble.steps() + 2, ensemble.time(0), dt, dt, window)?;
    par::map(ensemble.num_paths(), |p| {
        let mut sigma = alloc::vec![0.0; n * d];
        let mut acc = 0.0;
        for k in first..end {
            let (t, x) = (ensemble.time(k), ensemble.snapshot(p, k));
            model.diffusion(t, x, &mut sigma);
            let g = u.nabla0(t, x)?;
            acc += (0..n).map(|i| sigma[i * d + component] * g[i]).sum::<f64>() * dt;
        }
        Ok(acc)
    })
    .into_iter()
    .collect()
}

/// `u(t_k, X_k)` along each path, `k = 0..=M`.
pub fn functional_paths(
    u: &(impl TimeFunctional + ?Sized),
    ensemble: &PathEnsemble,
) -> Result<Vec<Vec<f64>>> {
    par::map(ensemble.num_paths(), |p| {
        (0..=ensemble.steps())
            .map(|k| u.value(ensemble.time(k), ensemble.snapshot(p, k)))
            .collect()
    })
    .into_iter()
    .collect()
}

/// `W^i_{t_k} − W^i_{t_0}` along a path, `k = 0..=M`.
pub fn wiener_path(ensemble: &PathEnsemble, path: usize, component: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(ensemble.steps() + 1);
    w.push(0.0);
    let mut acc = 0.0;
    for k in 0..ensemble.steps() {
        acc += ensemble.increment(path, k)[component];
        w.push(acc);
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// Mean over paths of `|C^ε − prediction|`.
    pub mean_abs_error: f64,
    pub std_error: f64,
    /// Mean over paths of the signed error `C^ε − prediction`.
    pub mean_error: f64,
    pub mean_error_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Rows ordered from the largest to the smallest ε.
    pub rows: Vec<ConvergenceRow>,
    /// Mean absolute error never increases between consecutive ε by more
    /// than two combined standard errors.
    pub decreasing: bool,
    /// Signed mean error at the smallest ε lies within five standard errors
    /// of zero.
    pub final_within: bool,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.decreasing && self.final_within
    }
}

/// Compares `C^ε` with the `∇₀` prediction over a ladder of ε on one
/// ensemble (common paths for every ε).
pub fn convergence_study(
    model: &(impl CoefficientModel + ?Sized),
    u: &(impl TimeFunctional + ?Sized),
    ensemble: &PathEnsemble,
    eps_list: &[f64],
    window: (f64, f64),
    component: usize,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() {
        return Err(Error::Config("ε ladder is empty".into()));
    }
    let mut eps: Vec<f64> = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let prediction = qv_limit_prediction(model, u, ensemble, window, component)?;
    let u_paths = functional_paths(u, ensemble)?;
    let (t0, dt) = (ensemble.time(0), ensemble.dt());
    let mut rows = Vec::with_capacity(eps.len());
    for &e in &eps {
        let errors: Vec<f64> = par::map(ensemble.num_paths(), |p| {
            let w = wiener_path(ensemble, p, component);
            Ok(joint_qv_estimate(&u_paths[p], &w, t0, dt, e, window)? - prediction[p])
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let abs: Vec<f64> = errors.iter().map(|v| v.abs()).collect();
        let a = Estimate::from_samples(&abs);
        let s = Estimate::from_samples(&errors);
        rows.push(ConvergenceRow {
            epsilon: e,
            mean_abs_error: a.mean,
            std_error: a.se,
            mean_error: s.mean,
            mean_error_se: s.se,
        });
    }
    let decreasing = rows.windows(2).all(|w| {
        w[1].mean_abs_error
            <= w[0].mean_abs_error + 2.0 * combined_se(w[0].std_error, w[1].std_error)
    });
    let last = rows.last().expect("nonempty ladder");
    let final_within = last.mean_error.abs() <= 5.0 * last.mean_error_se;
    Ok(ConvergenceReport {
        rows,
        decreasing,
        final_within,
    })
}

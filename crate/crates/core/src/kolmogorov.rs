//! The variation-of-constants form of the semilinear Kolmogorov equation,
//! `v(t, x) = P_{t,T}[φ](x) − ∫_t^T P_{t,τ}[ψ(·, v(τ, ·), ∇₀v(τ, ·)σ(τ, ·))](x) dτ`,
//! checked against the BSDE value.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bsde::{value_function, BsdeSolution, Driver, SolverConfig};
use crate::error::Result;
use crate::par;
use crate::sdde::{simulate_forward, CoefficientModel, PathEnsemble};
use crate::segment::{Segment, SegmentFunctional, SegmentRef};
use crate::stats::Estimate;

/// Resimulates `v(τ, X_τ)` and `Z(τ, X_τ)` from scratch on a few outer
/// paths instead of reading the regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedAudit {
    pub outer_paths: usize,
    pub inner_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MildConfig {
    pub solver: SolverConfig,
    /// Quadrature in `τ` uses every `stride`-th grid time (and `T`).
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested: Option<NestedAudit>,
}

fn default_stride() -> usize {
    5
}

impl MildConfig {
    pub fn new(solver: SolverConfig) -> Self {
        Self {
            solver,
            stride: default_stride(),
            nested: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MildReport {
    /// BSDE value `v(t, x)`.
    pub v: Estimate,
    /// `P_{t,T}[φ](x) − ∫ P_{t,τ}[ψ(…)](x) dτ` on an independent ensemble.
    pub rhs: Estimate,
    pub residual: f64,
    pub se: f64,
    pub semigroup_term: Estimate,
    pub integral_term: Estimate,
    /// Residual from the nested audit, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested_residual: Option<Estimate>,
    pub config: MildConfig,
}

/// Coarse quadrature nodes `0, s, 2s, …, M` with trapezoid weights in steps.
fn quadrature(steps: usize, stride: usize) -> Vec<(usize, f64)> {
    let stride = stride.max(1);
    let mut nodes: Vec<usize> = (0..steps).step_by(stride).collect();
    nodes.push(steps);
    let mut out: Vec<(usize, f64)> = nodes.iter().map(|k| (*k, 0.0)).collect();
    for i in 0..nodes.len() - 1 {
        let w = (nodes[i + 1] - nodes[i]) as f64 / 2.0;
        out[i].1 += w;
        out[i + 1].1 += w;
    }
    out
}

/// `ψ(τ, x, v, Z)` at grid step `k` with `v`, `Z` read from the regression
/// (terminal step: `v = φ`, `Z = ∇₀φ σ`).
fn surrogate_integrand(
    model: &(impl CoefficientModel + ?Sized),
    driver: &(impl Driver + ?Sized),
    sol: &BsdeSolution,
    k: usize,
    tau: f64,
    x: SegmentRef<'_>,
) -> Result<f64> {
    if k >= sol.steps() {
        let v = sol.terminal().eval(x)?;
        let z = terminal_z(model, sol.terminal(), tau, x)?;
        return Ok(driver.value(tau, x, v, &z));
    }
    let v = sol.value_at(k, x, driver)?;
    let z = sol.z_at(k, x)?;
    Ok(driver.value(tau, x, v, &z))
}

fn terminal_z(
    model: &(impl CoefficientModel + ?Sized),
    phi: &SegmentFunctional,
    tau: f64,
    x: SegmentRef<'_>,
) -> Result<Vec<f64>> {
    let (n, d) = (x.grid().dim_n(), x.grid().dim_d());
    let g = phi.gradient(x)?;
    let mut sigma = alloc::vec![0.0; n * d];
    model.diffusion(tau, x, &mut sigma);
    Ok((0..d)
        .map(|l| (0..n).map(|i| g.nabla0()[i] * sigma[i * d + l]).sum())
        .collect())
}

/// Per-path `φ(X_M)` and `Σ_k w_k ψ_k Δt` on `ens`, with `ψ_k` from `integrand`.
fn path_terms<F>(
    ens: &PathEnsemble,
    phi: &SegmentFunctional,
    nodes: &[(usize, f64)],
    integrand: F,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(usize, usize, f64, SegmentRef<'_>) -> Result<f64> + Sync,
{
    let dt = ens.dt();
    par::map(ens.num_paths(), |p| {
        let terminal = phi.eval(ens.snapshot(p, ens.steps()))?;
        let mut acc = 0.0;
        for &(k, w) in nodes {
            acc += w * dt * integrand(p, k, ens.time(k), ens.snapshot(p, k))?;
        }
        Ok((terminal, acc))
    })
    .into_iter()
    .collect()
}

/// `RHS − v(t, x)` with the right-hand side estimated on a fresh ensemble
/// (seed + 1) through the regression surrogates of `v` and `Z`.
pub fn mild_residual(
    model: &(impl CoefficientModel + ?Sized),
    driver: &(impl Driver + ?Sized),
    terminal: &SegmentFunctional,
    t: f64,
    x: &Segment,
    config: &MildConfig,
) -> Result<MildReport> {
    let solver = &config.solver;
    if (solver.horizon - t).abs() <= 1e-12 * (1.0 + t.abs()) {
        let phi = Estimate::new(terminal.eval(x.as_ref())?, 0.0);
        return Ok(MildReport {
            v: phi,
            rhs: phi,
            residual: 0.0,
            se: 0.0,
            semigroup_term: phi,
            integral_term: Estimate::new(0.0, 0.0),
            nested_residual: None,
            config: config.clone(),
        });
    }
    let (v, sol) = value_function(model, driver, terminal, t, x, solver)?;
    let noise = solver
        .noise(x.grid(), t)?
        .with_seed(solver.seed.wrapping_add(1));
    let outer = simulate_forward(model, t, x, &noise)?;
    let nodes = quadrature(outer.steps(), config.stride);
    let terms = path_terms(&outer, terminal, &nodes, |_, k, tau, xs| {
        surrogate_integrand(model, driver, &sol, k, tau, xs)
    })?;
    let (semigroup_term, integral_term, rhs) = summarize(&terms);
    let residual = rhs.minus(v);

    let nested_residual = match config.nested {
        Some(audit) => {
            Some(nested(model, driver, terminal, &outer, &nodes, audit, solver)?.minus(v))
        }
        None => None,
    };
    Ok(MildReport {
        v,
        rhs,
        residual: residual.mean,
        se: residual.se,
        semigroup_term,
        integral_term,
        nested_residual,
        config: config.clone(),
    })
}

fn summarize(terms: &[(f64, f64)]) -> (Estimate, Estimate, Estimate) {
    let phi: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let int: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let rhs: Vec<f64> = terms.iter().map(|t| t.0 - t.1).collect();
    (
        Estimate::from_samples(&phi),
        Estimate::from_samples(&int),
        Estimate::from_samples(&rhs),
    )
}

/// RHS with `v(τ, X_τ)` and `Z(τ, X_τ)` from a fresh BSDE started at each
/// outer state.
fn nested(
    model: &(impl CoefficientModel + ?Sized),
    driver: &(impl Driver + ?Sized),
    terminal: &SegmentFunctional,
    outer: &PathEnsemble,
    nodes: &[(usize, f64)],
    audit: NestedAudit,
    solver: &SolverConfig,
) -> Result<Estimate> {
    let count = audit.outer_paths.min(outer.num_paths());
    let dt = outer.dt();
    let steps = outer.steps();
    let mut rhs = Vec::with_capacity(count);
    for p in 0..count {
        let mut acc = 0.0;
        for &(k, w) in nodes {
            let tau = outer.time(k);
            let xs = outer.segment_from_history(p, k);
            let psi = if k == steps {
                let z = terminal_z(model, terminal, tau, xs.as_ref())?;
                driver.value(tau, xs.as_ref(), terminal.eval(xs.as_ref())?, &z)
            } else {
                let inner = SolverConfig {
                    seed: solver
                        .seed
                        .wrapping_add(1_000_003 * (p as u64 + 1) + k as u64),
                    paths: audit.inner_paths,
                    ..solver.clone()
                };
                let (vi, si) = value_function(model, driver, terminal, tau, &xs, &inner)?;
                let z: Vec<f64> = si.fit(0).beta_z.iter().map(|b| b[0]).collect();
                driver.value(tau, xs.as_ref(), vi.mean, &z)
            };
            acc += w * dt * psi;
        }
        rhs.push(terminal.eval(outer.snapshot(p, steps))? - acc);
    }
    Ok(Estimate::from_samples(&rhs))
}

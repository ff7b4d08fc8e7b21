use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::basis::RegressionBasis;
use super::driver::Driver;
use crate::error::{Error, Result};
use crate::linalg::{ridge_inverse, ridge_solve, right_pseudo_inverse, right_pseudo_solve};
use crate::noise::NoiseGrid;
use crate::par;
use crate::sdde::{simulate_forward, CoefficientModel, PathEnsemble};
use crate::segment::{Segment, SegmentFunctional, SegmentRef};
use crate::stats::{bootstrap_se, Estimate};

/// Settings shared by the solver entry points that simulate their own
/// ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub seed: u64,
    pub paths: usize,
    /// Terminal time `T`.
    pub horizon: f64,
    /// Regression basis; the standard basis of the segment grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<RegressionBasis>,
    #[serde(default, flatten)]
    pub scheme: BackwardScheme,
    /// Bootstrap resamples for standard errors.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_bootstrap() -> usize {
    200
}

impl SolverConfig {
    pub fn new(seed: u64, paths: usize, horizon: f64) -> Self {
        Self {
            seed,
            paths,
            horizon,
            basis: None,
            scheme: BackwardScheme::default(),
            bootstrap: default_bootstrap(),
        }
    }

    pub fn with_basis(mut self, basis: RegressionBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn basis_for(&self, grid: &crate::segment::GridSpec) -> RegressionBasis {
        self.basis
            .clone()
            .unwrap_or_else(|| RegressionBasis::standard(grid))
    }

    /// The noise for a run started at `t` on `grid`.
    pub fn noise(&self, grid: &crate::segment::GridSpec, t: f64) -> Result<NoiseGrid> {
        NoiseGrid::spanning(
            self.seed,
            self.paths,
            grid.dim_d(),
            grid.step(),
            t,
            self.horizon,
        )
    }
}

/// Variants of the backward step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardScheme {
    /// One fixed-point iteration in `y` for the driver step.
    #[serde(default)]
    pub implicit: bool,
    /// Regress the realised future `φ(X_T) − Σ_{j>k} ψ_j Δt` instead of the
    /// fitted `Y_{k+1}`, so regression errors do not accumulate over steps.
    /// `Z` always uses the fitted `Y_{k+1}`.
    #[serde(default = "yes")]
    pub multi_step: bool,
}

fn yes() -> bool {
    true
}

impl Default for BackwardScheme {
    fn default() -> Self {
        Self {
            implicit: false,
            multi_step: true,
        }
    }
}

/// The fitted conditional expectations at one time step, in standardised
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    /// Hinge knots per hinge spec.
    pub knots: Vec<Vec<f64>>,
    /// Raw feature indices (the constant excluded) that entered the fit.
    pub kept: Vec<usize>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Intercept followed by one coefficient per kept feature.
    pub beta_y: Vec<f64>,
    /// One-step surrogate regression, same layout as `beta_y`.
    pub beta_chain: Vec<f64>,
    /// Same layout as `beta_y`, one vector per noise column.
    pub beta_z: Vec<Vec<f64>>,
    /// In-sample R² of the `Y` regression.
    pub r_squared: f64,
    /// `(G + λI)⁻¹` over the kept standardised features (row-major).
    pub inverse_gram: Vec<f64>,
    /// Residual variance of the `Y` regression.
    pub residual_variance: f64,
    pub paths: usize,
}

impl StepFit {
    fn constant(y: f64, z: Vec<f64>) -> Self {
        Self {
            knots: Vec::new(),
            kept: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
            beta_y: alloc::vec![y],
            beta_chain: alloc::vec![y],
            beta_z: z.into_iter().map(|v| alloc::vec![v]).collect(),
            r_squared: 1.0,
            inverse_gram: Vec::new(),
            residual_variance: 0.0,
            paths: 0,
        }
    }

    fn standardise(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        for (i, &j) in self.kept.iter().enumerate() {
            out.push((raw[j] - self.center[i]) / self.scale[i]);
        }
    }

    fn dot(beta: &[f64], f: &[f64]) -> f64 {
        beta.iter().zip(f).map(|(a, b)| a * b).sum()
    }
}

/// Numerical `(Y, Z)` on an ensemble, with the per-step regressions that
/// define `v(t_k, ·)` and `Z(t_k, ·)` off the simulated paths.
#[derive(Clone, Debug)]
pub struct BsdeSolution {
    ensemble: PathEnsemble,
    terminal: SegmentFunctional,
    basis: RegressionBasis,
    fits: Vec<StepFit>,
    y: Vec<f64>,
    z: Vec<f64>,
    xi: Vec<f64>,
    z0_samples: Vec<f64>,
}

impl BsdeSolution {
    pub fn ensemble(&self) -> &PathEnsemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> PathEnsemble {
        self.ensemble
    }

    pub fn terminal(&self) -> &SegmentFunctional {
        &self.terminal
    }

    pub fn basis(&self) -> &RegressionBasis {
        &self.basis
    }

    pub fn steps(&self) -> usize {
        self.ensemble.steps()
    }

    /// `Y_0`, the estimate of `v(t, x)`.
    pub fn value_at_start(&self) -> f64 {
        self.y[0]
    }

    pub fn y(&self, path: usize, k: usize) -> f64 {
        self.y[path * (self.steps() + 1) + k]
    }

    pub fn z(&self, path: usize, k: usize) -> &[f64] {
        let d = self.ensemble.noise().dim_d;
        let i = (path * self.steps() + k) * d;
        &self.z[i..i + d]
    }

    pub fn fit(&self, k: usize) -> &StepFit {
        &self.fits[k]
    }

    pub fn r_squared(&self, k: usize) -> f64 {
        self.fits[k].r_squared
    }

    /// Per-path `φ(X_T) − Σ_k ψ_k Δt`; their mean equals `Y_0`.
    pub fn pathwise_values(&self) -> &[f64] {
        &self.xi
    }

    /// Per-path `(Y_1 − Ŷ_0) ΔW_0 / Δt`, whose mean is `Z_0`.
    pub fn start_z_samples(&self) -> &[f64] {
        &self.z0_samples
    }

    /// Bootstrap standard error of `Y_0`.
    pub fn value_se(&self, resamples: usize, seed: u64) -> f64 {
        bootstrap_se(&self.xi, resamples, seed)
    }

    fn raw_features(&self, k: usize, x: SegmentRef<'_>) -> Vec<f64> {
        let q = self.basis.primitives.len();
        let mut prims = alloc::vec![0.0; q];
        self.basis.primitives_into(x, &mut prims);
        let mut raw = alloc::vec![0.0; self.basis.len()];
        self.basis.expand(&prims, &self.fits[k].knots, &mut raw);
        raw
    }

    fn features(&self, k: usize, x: SegmentRef<'_>) -> Vec<f64> {
        let mut f = Vec::new();
        if !self.fits[k].kept.is_empty() {
            self.fits[k].standardise(&self.raw_features(k, x), &mut f);
        } else {
            f.push(1.0);
        }
        f
    }

    /// `E[Y_{k+1} | X_k = x]` from the step-`k` regression (`φ(x)` at `k = M`).
    pub fn conditional_mean_at(&self, k: usize, x: SegmentRef<'_>) -> Result<f64> {
        if k >= self.steps() {
            return self.terminal.eval(x);
        }
        Ok(StepFit::dot(&self.fits[k].beta_y, &self.features(k, x)))
    }

    /// Standard error of [`conditional_mean_at`](Self::conditional_mean_at)
    /// from the step-`k` regression alone (the fitted coefficients' sampling
    /// error at `x`).
    pub fn conditional_mean_se(&self, k: usize, x: SegmentRef<'_>) -> f64 {
        if k >= self.steps() {
            return 0.0;
        }
        let fit = &self.fits[k];
        if fit.paths == 0 {
            return 0.0;
        }
        let f = self.features(k, x);
        let kk = fit.kept.len();
        let mut quad = 0.0;
        for i in 0..kk {
            for j in 0..kk {
                quad += f[1 + i] * fit.inverse_gram[i * kk + j] * f[1 + j];
            }
        }
        (fit.residual_variance * (1.0 / fit.paths as f64 + quad)).sqrt()
    }

    /// `Z(t_k, x)` from the step-`k` regression.
    pub fn z_at(&self, k: usize, x: SegmentRef<'_>) -> Result<Vec<f64>> {
        if k >= self.steps() {
            return Err(Error::Domain(alloc::format!(
                "no Z at the terminal step {k}"
            )));
        }
        let f = self.features(k, x);
        Ok(self.fits[k]
            .beta_z
            .iter()
            .map(|b| StepFit::dot(b, &f))
            .collect())
    }

    /// `v(t_k, x) ≈ Ŷ_k(x) − ψ(t_k, x, Ŷ_k(x), Z(t_k, x)) Δt`.
    pub fn value_at(
        &self,
        k: usize,
        x: SegmentRef<'_>,
        driver: &(impl Driver + ?Sized),
    ) -> Result<f64> {
        let yhat = self.conditional_mean_at(k, x)?;
        if k >= self.steps() {
            return Ok(yhat);
        }
        let z = self.z_at(k, x)?;
        Ok(yhat - driver.value(self.ensemble.time(k), x, yhat, &z) * self.ensemble.dt())
    }
}

/// Least-squares Monte Carlo for `dY = ψ dt + Z dW`, `Y_T = φ(X_T)` on the
/// paths of `ensemble`.
///
/// Backwards in `k`: `Ŷ_k` regresses `Y_{k+1}` on the features of `X_k`;
/// `Z_k` regresses `(Y_{k+1} − Ŷ_k) ΔW_k / Δt` on the same features;
/// `Y_k = Ŷ_k − ψ(t_k, X_k, Ŷ_k, Z_k) Δt`. At `k = 0` the state is
/// deterministic and plain averages replace the regressions.
pub fn solve_backward(
    ensemble: PathEnsemble,
    driver: &(impl Driver + ?Sized),
    terminal: &SegmentFunctional,
    basis: &RegressionBasis,
    scheme: &BackwardScheme,
) -> Result<BsdeSolution> {
    let implicit = scheme.implicit;
    let grid = *ensemble.grid();
    basis.validate(&grid)?;
    let n_paths = ensemble.num_paths();
    let steps = ensemble.steps();
    let d = ensemble.noise().dim_d;
    let dt = ensemble.dt();
    if steps == 0 {
        return Err(Error::Config("ensemble has no time steps".into()));
    }
    let ens = &ensemble;

    let terminal_values: Vec<f64> = par::map(n_paths, |p| terminal.eval(ens.snapshot(p, steps)))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut chain = terminal_values.clone();
    let mut y_all = alloc::vec![0.0; n_paths * (steps + 1)];
    let mut z_all = alloc::vec![0.0; n_paths * steps * d];
    let mut psi_sum = alloc::vec![0.0; n_paths];
    let mut fits = alloc::vec![StepFit::constant(0.0, alloc::vec![0.0; d]); steps];
    for (p, v) in terminal_values.iter().enumerate() {
        y_all[p * (steps + 1) + steps] = *v;
    }

    let step_update = |t: f64, x: SegmentRef<'_>, yhat: f64, z: &[f64]| -> f64 {
        let psi = driver.value(t, x, yhat, z);
        if implicit {
            let y0 = yhat - psi * dt;
            driver.value(t, x, y0, z)
        } else {
            psi
        }
    };

    for k in (1..steps).rev() {
        let t = ens.time(k);
        let realised: Vec<f64> = terminal_values
            .iter()
            .zip(&psi_sum)
            .map(|(a, b)| a - b)
            .collect();
        let target = if scheme.multi_step { &realised } else { &chain };
        let fit = fit_step(ens, basis, k, target, &chain)?;
        let rows: Vec<(f64, Vec<f64>, f64, f64)> = par::map(n_paths, |p| {
            let x = ens.snapshot(p, k);
            let mut raw = alloc::vec![0.0; basis.len()];
            let mut prims = alloc::vec![0.0; basis.primitives.len()];
            basis.primitives_into(x, &mut prims);
            basis.expand(&prims, &fit.knots, &mut raw);
            let mut f = Vec::new();
            fit.standardise(&raw, &mut f);
            let yhat = StepFit::dot(&fit.beta_y, &f);
            let chat = StepFit::dot(&fit.beta_chain, &f);
            let z: Vec<f64> = fit.beta_z.iter().map(|b| StepFit::dot(b, &f)).collect();
            let psi = step_update(t, x, yhat, &z);
            let chain_psi = if scheme.multi_step {
                step_update(t, x, chat, &z)
            } else {
                psi
            };
            (yhat, z, psi, chat - chain_psi * dt)
        });
        for (p, (yhat, z, psi, c)) in rows.into_iter().enumerate() {
            let yk = yhat - psi * dt;
            if !yk.is_finite() || !c.is_finite() {
                return Err(Error::Numerical(alloc::format!(
                    "Y became non-finite at step {k}, path {p}"
                )));
            }
            y_all[p * (steps + 1) + k] = yk;
            z_all[(p * steps + k) * d..(p * steps + k + 1) * d].copy_from_slice(&z);
            psi_sum[p] += psi * dt;
            chain[p] = c;
        }
        fits[k] = fit;
    }

    // k = 0: X_0 = x on every path.
    let x0 = ens.snapshot(0, 0);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n_paths as f64;
    let chain0 = mean(&chain);
    let yhat0 = if scheme.multi_step {
        mean(
            &terminal_values
                .iter()
                .zip(&psi_sum)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )
    } else {
        chain0
    };
    let z0_samples: Vec<f64> = (0..n_paths)
        .flat_map(|p| {
            let c = (chain[p] - chain0) / dt;
            ens.increment(p, 0).iter().map(move |w| c * w)
        })
        .collect();
    let z0: Vec<f64> = (0..d)
        .map(|l| z0_samples.iter().skip(l).step_by(d).sum::<f64>() / n_paths as f64)
        .collect();
    let psi0 = step_update(ens.time(0), x0, yhat0, &z0);
    let y0 = yhat0 - psi0 * dt;
    for p in 0..n_paths {
        y_all[p * (steps + 1)] = y0;
        z_all[p * steps * d..(p * steps + 1) * d].copy_from_slice(&z0);
    }
    fits[0] = StepFit {
        beta_chain: alloc::vec![chain0],
        ..StepFit::constant(yhat0, z0)
    };
    let xi: Vec<f64> = terminal_values
        .iter()
        .zip(&psi_sum)
        .map(|(phi, s)| phi - s - psi0 * dt)
        .collect();

    Ok(BsdeSolution {
        ensemble,
        terminal: terminal.clone(),
        basis: basis.clone(),
        fits,
        y: y_all,
        z: z_all,
        xi,
        z0_samples,
    })
}

/// Standardised design, ridge normal equations and the two regressions of
/// step `k`.
/// `y_next` is the regression target for `Ŷ_k`. `chain` is the one-step
/// surrogate `Y_{k+1}`: it is regressed as well, and its increment against
/// `ΔW_k` is the `Z_k` target.
fn fit_step(
    ens: &PathEnsemble,
    basis: &RegressionBasis,
    k: usize,
    y_next: &[f64],
    chain: &[f64],
) -> Result<StepFit> {
    let n_paths = ens.num_paths();
    let d = ens.noise().dim_d;
    let dt = ens.dt();
    let q = basis.primitives.len();
    let width = basis.len();

    let prims: Vec<f64> = par::map(n_paths, |p| {
        let mut row = alloc::vec![0.0; q];
        basis.primitives_into(ens.snapshot(p, k), &mut row);
        row
    })
    .concat();
    let knots = basis.knots(&prims);
    let mut raw = alloc::vec![0.0; n_paths * width];
    par::try_rows(&mut raw, width, |p, row| {
        basis.expand(&prims[p * q..(p + 1) * q], &knots, row);
        Ok(())
    })?;
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(alloc::format!(
            "feature '{}' is not finite on path {} at step {k}",
            basis.labels()[i % width],
            i / width
        )));
    }

    // Column moments; constant columns are dropped.
    let mut center = alloc::vec![0.0; width];
    let mut scale = alloc::vec![0.0; width];
    for row in raw.chunks(width) {
        for j in 1..width {
            center[j] += row[j];
        }
    }
    center.iter_mut().for_each(|c| *c /= n_paths as f64);
    for row in raw.chunks(width) {
        for j in 1..width {
            let v = row[j] - center[j];
            scale[j] += v * v;
        }
    }
    scale
        .iter_mut()
        .for_each(|s| *s = (*s / n_paths as f64).sqrt());
    let kept: Vec<usize> = (1..width)
        .filter(|&j| scale[j] > 1e-10 * (1.0 + center[j].abs()))
        .collect();
    let kk = kept.len();
    let std_row = |row: &[f64], out: &mut [f64]| {
        for (i, &j) in kept.iter().enumerate() {
            out[i] = (row[j] - center[j]) / scale[j];
        }
    };

    let mean_y = y_next.iter().sum::<f64>() / n_paths as f64;
    let (gram, rhs_y) = accumulate(n_paths, kk, |p, f| {
        std_row(&raw[p * width..(p + 1) * width], f);
        y_next[p] - mean_y
    });
    let lambda = basis.ridge * (0..kk).map(|i| gram[i * kk + i]).sum::<f64>() / kk.max(1) as f64;
    let labels = basis.labels();
    let singular = || {
        let report: Vec<String> = kept
            .iter()
            .map(|&j| {
                alloc::format!(
                    "{} (mean {:.3e}, sd {:.3e})",
                    labels[j],
                    center[j],
                    scale[j]
                )
            })
            .collect();
        Error::Numerical(alloc::format!(
            "regression design is rank deficient at step {k} after ridge; features: {}",
            report.join(", ")
        ))
    };
    let beta_y_tail = if kk == 0 {
        Vec::new()
    } else {
        ridge_solve(&gram, kk, lambda, &[&rhs_y])
            .ok_or_else(singular)?
            .remove(0)
    };
    let mut beta_y = alloc::vec![mean_y];
    beta_y.extend(beta_y_tail);

    let mut f = alloc::vec![0.0; kk];
    let mean_c = chain.iter().sum::<f64>() / n_paths as f64;
    let mut beta_chain = alloc::vec![mean_c];
    if kk > 0 {
        let mut rhs = alloc::vec![0.0; kk];
        for p in 0..n_paths {
            std_row(&raw[p * width..(p + 1) * width], &mut f);
            let tv = chain[p] - mean_c;
            rhs.iter_mut().zip(&f).for_each(|(r, v)| *r += v * tv);
        }
        beta_chain.extend(
            ridge_solve(&gram, kk, lambda, &[&rhs])
                .ok_or_else(singular)?
                .remove(0),
        );
    }

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut resid = alloc::vec![0.0; n_paths];
    for p in 0..n_paths {
        std_row(&raw[p * width..(p + 1) * width], &mut f);
        let yhat = mean_y + beta_y[1..].iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        resid[p] = chain[p]
            - mean_c
            - beta_chain[1..]
                .iter()
                .zip(&f)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let e = y_next[p] - yhat;
        ss_res += e * e;
        ss_tot += (y_next[p] - mean_y) * (y_next[p] - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let residual_variance = ss_res / (n_paths.saturating_sub(kk + 1)).max(1) as f64;
    let inverse_gram = if kk == 0 {
        Vec::new()
    } else {
        ridge_inverse(&gram, kk, lambda).ok_or_else(singular)?
    };

    let mut beta_z = Vec::with_capacity(d);
    for l in 0..d {
        let target = |p: usize| resid[p] * ens.increment(p, k)[l] / dt;
        let mean_t = (0..n_paths).map(target).sum::<f64>() / n_paths as f64;
        let mut beta = alloc::vec![mean_t];
        if kk > 0 {
            let mut rhs = alloc::vec![0.0; kk];
            for p in 0..n_paths {
                std_row(&raw[p * width..(p + 1) * width], &mut f);
                let tv = target(p);
                rhs.iter_mut().zip(&f).for_each(|(r, v)| *r += v * tv);
            }
            beta.extend(
                ridge_solve(&gram, kk, lambda, &[&rhs])
                    .ok_or_else(singular)?
                    .remove(0),
            );
        }
        beta_z.push(beta);
    }

    Ok(StepFit {
        knots,
        center: kept.iter().map(|&j| center[j]).collect(),
        scale: kept.iter().map(|&j| scale[j]).collect(),
        kept,
        beta_y,
        beta_chain,
        beta_z,
        r_squared,
        inverse_gram,
        residual_variance,
        paths: n_paths,
    })
}

/// Gram matrix `Σ_p f_p f_pᵀ` and `Σ_p f_p t_p` accumulated in fixed blocks
/// of paths, so the sum order does not depend on the worker count.
fn accumulate<F>(n_paths: usize, kk: usize, row: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(usize, &mut [f64]) -> f64 + Sync + Send,
{
    let parts = par::blocks(n_paths, |range| {
        let mut g = alloc::vec![0.0; kk * kk];
        let mut b = alloc::vec![0.0; kk];
        let mut f = alloc::vec![0.0; kk];
        for p in range {
            let t = row(p, &mut f);
            for i in 0..kk {
                let fi = f[i];
                b[i] += fi * t;
                let gi = &mut g[i * kk..(i + 1) * kk];
                for j in i..kk {
                    gi[j] += fi * f[j];
                }
            }
        }
        (g, b)
    });
    let mut gram = alloc::vec![0.0; kk * kk];
    let mut rhs = alloc::vec![0.0; kk];
    for (g, b) in parts {
        gram.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
        rhs.iter_mut().zip(&b).for_each(|(a, v)| *a += v);
    }
    for i in 0..kk {
        for j in 0..i {
            gram[i * kk + j] = gram[j * kk + i];
        }
    }
    (gram, rhs)
}

/// `v(t, x) = Y_t^{t,x}` from a fresh ensemble, with a bootstrap standard
/// error over paths.
pub fn value_function(
    model: &(impl CoefficientModel + ?Sized),
    driver: &(impl Driver + ?Sized),
    terminal: &SegmentFunctional,
    t: f64,
    x: &Segment,
    config: &SolverConfig,
) -> Result<(Estimate, BsdeSolution)> {
    let noise = config.noise(x.grid(), t)?;
    let ens = simulate_forward(model, t, x, &noise)?;
    let sol = solve_backward(
        ens,
        driver,
        terminal,
        &config.basis_for(x.grid()),
        &config.scheme,
    )?;
    let se = sol.value_se(config.bootstrap, config.seed ^ 0x5eed_b007);
    Ok((Estimate::new(sol.value_at_start(), se), sol))
}

/// `∇₀v(t_k, X_k)` on one path from `Z_k = ∇₀v σ(t_k, X_k)` by the right
/// pseudo-inverse of σ.
pub fn nabla0_v(
    solution: &BsdeSolution,
    model: &(impl CoefficientModel + ?Sized),
    k: usize,
    path: usize,
) -> Result<Vec<f64>> {
    if k >= solution.steps() {
        return Err(Error::Domain(alloc::format!(
            "no Z at the terminal step {k}"
        )));
    }
    let ens = solution.ensemble();
    let (n, d) = (ens.grid().dim_n(), ens.grid().dim_d());
    let mut sigma = alloc::vec![0.0; n * d];
    model.diffusion(ens.time(k), ens.snapshot(path, k), &mut sigma);
    right_pseudo_solve(solution.z(path, k), &sigma, n, d).ok_or(Error::Singular { step: k, path })
}

/// `∇₀v(t_k, x)` off the paths, from the `Z` regression.
pub fn nabla0_v_at(
    solution: &BsdeSolution,
    model: &(impl CoefficientModel + ?Sized),
    k: usize,
    x: SegmentRef<'_>,
) -> Result<Vec<f64>> {
    let (n, d) = (x.grid().dim_n(), x.grid().dim_d());
    let z = solution.z_at(k, x)?;
    let mut sigma = alloc::vec![0.0; n * d];
    model.diffusion(solution.ensemble().time(k), x, &mut sigma);
    right_pseudo_solve(&z, &sigma, n, d).ok_or(Error::Singular {
        step: k,
        path: usize::MAX,
    })
}

/// Regression-based and bump-based `∇₀v(t, x)` side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZIdentificationReport {
    pub value: Estimate,
    /// `Z_0 σ⁺` per component.
    pub regression: Vec<Estimate>,
    /// Central difference of `v` under a hat of width `h` at θ = 0.
    pub bump: Vec<Estimate>,
    /// Same with a hat of width `2h`; the difference to `bump` measures the
    /// share of the density part picked up by the bump.
    pub bump_wide: Vec<f64>,
    pub contamination: Vec<f64>,
    pub delta: f64,
    /// `|regression − bump| / |bump|` per component.
    pub relative_gap: Vec<f64>,
    pub absolute_gap: Vec<Estimate>,
    pub max_relative_gap: f64,
    pub mean_relative_gap: f64,
}

/// Compares `Z_0 σ⁺` with a bump-and-resolve estimate of `∇₀v(t, x)` on
/// common noise.
pub fn z_identification_check(
    model: &(impl CoefficientModel + ?Sized),
    driver: &(impl Driver + ?Sized),
    terminal: &SegmentFunctional,
    t: f64,
    x: &Segment,
    config: &SolverConfig,
) -> Result<ZIdentificationReport> {
    let grid = *x.grid();
    let (n, d, m) = (grid.dim_n(), grid.dim_d(), grid.past_points());
    let (value, sol) = value_function(model, driver, terminal, t, x, config)?;
    let mut sigma = alloc::vec![0.0; n * d];
    model.diffusion(t, x.as_ref(), &mut sigma);
    let pinv = right_pseudo_inverse(&sigma, n, d).ok_or(Error::Singular { step: 0, path: 0 })?;
    let z0 = &sol.fit(0).beta_z;
    let samples = sol.start_z_samples();
    let z_se: Vec<f64> = (0..d)
        .map(|l| {
            let col: Vec<f64> = samples.iter().skip(l).step_by(d).copied().collect();
            Estimate::from_samples(&col).se
        })
        .collect();
    let regression: Vec<Estimate> = (0..n)
        .map(|i| {
            let mean = (0..d).map(|l| z0[l][0] * pinv[l * n + i]).sum();
            let se = (0..d)
                .map(|l| (pinv[l * n + i] * z_se[l]).powi(2))
                .sum::<f64>()
                .sqrt();
            Estimate::new(mean, se)
        })
        .collect();
    drop(sol);

    let now = x.as_ref().now().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let delta = 1e-2 * (1.0 + now);
    let solve_shift = |c: usize, sign: f64, wide: bool| -> Result<Vec<f64>> {
        let mut xs = x.clone();
        let mut node = x.as_ref().now().to_vec();
        node[c] += sign * delta;
        xs.set_node(m, &node);
        if wide && m >= 1 {
            let mut prev: Vec<f64> = (0..n).map(|i| x.as_ref().node(m - 1, i)).collect();
            prev[c] += sign * 0.5 * delta;
            xs.set_node(m - 1, &prev);
        }
        let (_, s) = value_function(model, driver, terminal, t, &xs, config)?;
        Ok(s.pathwise_values().to_vec())
    };
    let mut bump = Vec::with_capacity(n);
    let mut bump_wide = Vec::with_capacity(n);
    for c in 0..n {
        let up = solve_shift(c, 1.0, false)?;
        let down = solve_shift(c, -1.0, false)?;
        let diff: Vec<f64> = up
            .iter()
            .zip(&down)
            .map(|(a, b)| (a - b) / (2.0 * delta))
            .collect();
        bump.push(Estimate::from_samples(&diff));
        let up = solve_shift(c, 1.0, true)?;
        let down = solve_shift(c, -1.0, true)?;
        bump_wide.push(
            up.iter()
                .zip(&down)
                .map(|(a, b)| (a - b) / (2.0 * delta))
                .sum::<f64>()
                / up.len() as f64,
        );
    }
    let contamination: Vec<f64> = bump_wide
        .iter()
        .zip(&bump)
        .map(|(w, b)| w - b.mean)
        .collect();
    let absolute_gap: Vec<Estimate> = regression
        .iter()
        .zip(&bump)
        .map(|(r, b)| r.minus(*b))
        .collect();
    let relative_gap: Vec<f64> = absolute_gap
        .iter()
        .zip(&bump)
        .map(|(g, b)| g.mean.abs() / b.mean.abs().max(f64::MIN_POSITIVE))
        .collect();
    let max_relative_gap = relative_gap.iter().fold(0.0_f64, |a, v| a.max(*v));
    let mean_relative_gap = relative_gap.iter().sum::<f64>() / n as f64;
    Ok(ZIdentificationReport {
        value,
        regression,
        bump,
        bump_wide,
        contamination,
        delta,
        relative_gap,
        absolute_gap,
        max_relative_gap,
        mean_relative_gap,
    })
}

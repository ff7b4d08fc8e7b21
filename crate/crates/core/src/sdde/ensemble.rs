use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::model::{CoefficientModel, Scheme};
use super::policy::{Channel, Policy};
use crate::error::{Error, Result};
use crate::noise::NoiseGrid;
use crate::par;
use crate::segment::{GridSpec, Segment, SegmentRef};

/// `N` simulated paths on a uniform grid: the history `y` on `[t − r, T]`
/// (starting with the initial segment), the increments that drove it and,
/// for controlled runs, the controls applied.
///
/// Snapshots `X_k` are windows into the stored history, so the segment process
/// and the path it is built from cannot disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    grid: GridSpec,
    noise: NoiseGrid,
    history: Vec<f64>,
    increments: Vec<f64>,
    controls: Option<(usize, Vec<f64>)>,
}

impl PathEnsemble {
    /// Reassembles an ensemble from its raw buffers (e.g. after loading a dump).
    pub fn from_parts(
        grid: GridSpec,
        noise: NoiseGrid,
        history: Vec<f64>,
        increments: Vec<f64>,
        controls: Option<(usize, Vec<f64>)>,
    ) -> Result<Self> {
        let n_paths = noise.num_paths;
        let rows = grid.nodes() + noise.steps;
        if history.len() != n_paths * rows * grid.dim_n() {
            return Err(Error::Config(
                "history buffer does not match paths × nodes × n".into(),
            ));
        }
        if increments.len() != n_paths * noise.steps * noise.dim_d {
            return Err(Error::Config(
                "increment buffer does not match paths × steps × d".into(),
            ));
        }
        if let Some((k, u)) = &controls {
            if u.len() != n_paths * noise.steps * k {
                return Err(Error::Config(
                    "control buffer does not match paths × steps × k".into(),
                ));
            }
        }
        grid.check_coupling(noise.dt)?;
        Ok(Self {
            grid,
            noise,
            history,
            increments,
            controls,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn noise(&self) -> &NoiseGrid {
        &self.noise
    }

    pub fn num_paths(&self) -> usize {
        self.noise.num_paths
    }

    /// Number of time steps `M`; snapshots exist for `k = 0..=M`.
    pub fn steps(&self) -> usize {
        self.noise.steps
    }

    pub fn dt(&self) -> f64 {
        self.noise.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.noise.time(k)
    }

    fn row_len(&self) -> usize {
        (self.grid.nodes() + self.noise.steps) * self.grid.dim_n()
    }

    /// `y` on `[t − r, T]` for one path, node-major.
    pub fn history(&self, path: usize) -> &[f64] {
        let l = self.row_len();
        &self.history[path * l..(path + 1) * l]
    }

    /// `X_k` on path `path`.
    pub fn snapshot(&self, path: usize, k: usize) -> SegmentRef<'_> {
        let n = self.grid.dim_n();
        let h = self.history(path);
        SegmentRef::new(&self.grid, &h[k * n..(k + self.grid.nodes()) * n])
    }

    /// `y_{t_k} = X_k(0)`.
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        self.snapshot(path, k).now()
    }

    /// Rebuilds `X_k` from the stored history as an owned segment.
    pub fn segment_from_history(&self, path: usize, k: usize) -> Segment {
        self.snapshot(path, k).to_owned()
    }

    pub fn increments(&self, path: usize) -> &[f64] {
        let l = self.noise.steps * self.noise.dim_d;
        &self.increments[path * l..(path + 1) * l]
    }

    /// `ΔW_k = W_{t_{k+1}} − W_{t_k}`.
    pub fn increment(&self, path: usize, k: usize) -> &[f64] {
        let d = self.noise.dim_d;
        &self.increments(path)[k * d..(k + 1) * d]
    }

    /// `u_k` on a controlled path.
    pub fn control(&self, path: usize, k: usize) -> Option<&[f64]> {
        self.controls.as_ref().map(|(dim, u)| {
            let i = (path * self.noise.steps + k) * dim;
            &u[i..i + dim]
        })
    }

    pub fn control_dim(&self) -> Option<usize> {
        self.controls.as_ref().map(|c| c.0)
    }

    pub fn raw_history(&self) -> &[f64] {
        &self.history
    }

    pub fn raw_increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn raw_controls(&self) -> Option<&[f64]> {
        self.controls.as_ref().map(|c| &c.1[..])
    }
}

fn check_setup(
    model: &(impl CoefficientModel + ?Sized),
    t: f64,
    x: &Segment,
    noise: &NoiseGrid,
) -> Result<()> {
    let grid = x.grid();
    grid.check_coupling(noise.dt)?;
    if model.dim_n() != grid.dim_n() || model.dim_d() != grid.dim_d() || noise.dim_d != grid.dim_d()
    {
        return Err(Error::Config(alloc::format!(
            "dimension mismatch: model (n={}, d={}), segment grid (n={}, d={}), noise d={}",
            model.dim_n(),
            model.dim_d(),
            grid.dim_n(),
            grid.dim_d(),
            noise.dim_d
        )));
    }
    if (noise.start() - t).abs() > 1e-9 * (1.0 + t.abs()) {
        return Err(Error::Config(alloc::format!(
            "noise grid starts at {} but the initial time is {t}",
            noise.start()
        )));
    }
    model.validate(grid)
}

struct Stepper<'a, M: ?Sized> {
    model: &'a M,
    grid: &'a GridSpec,
    dt: f64,
    scheme: Scheme,
    b: Vec<f64>,
    s: Vec<f64>,
}

impl<'a, M: CoefficientModel + ?Sized> Stepper<'a, M> {
    fn new(model: &'a M, grid: &'a GridSpec, dt: f64) -> Self {
        let (n, d) = (grid.dim_n(), grid.dim_d());
        Self {
            model,
            grid,
            dt,
            scheme: model.scheme(),
            b: alloc::vec![0.0; n],
            s: alloc::vec![0.0; n * d],
        }
    }

    /// Advances one step on `row`, writing `y_{k+1}`. `shift` (length `d`)
    /// adds `σ·shift·Δt` to the drift.
    fn step(
        &mut self,
        row: &mut [f64],
        k: usize,
        t: f64,
        dw: &[f64],
        shift: Option<&[f64]>,
    ) -> Result<(), &'static str> {
        let n = self.grid.dim_n();
        let d = self.grid.dim_d();
        let nodes = self.grid.nodes();
        let (past, next) = row.split_at_mut((k + nodes) * n);
        let x = SegmentRef::new(self.grid, &past[k * n..]);
        self.model.drift(t, x, &mut self.b);
        self.model.diffusion(t, x, &mut self.s);
        if let Some(h) = shift {
            for i in 0..n {
                self.b[i] += (0..d).map(|j| self.s[i * d + j] * h[j]).sum::<f64>();
            }
        }
        let now = x.now();
        for i in 0..n {
            let sig = &self.s[i * d..(i + 1) * d];
            let noise: f64 = sig.iter().zip(dw).map(|(a, w)| a * w).sum();
            next[i] = match self.scheme {
                Scheme::Euler => now[i] + self.b[i] * self.dt + noise,
                Scheme::LogEuler => {
                    let y = now[i];
                    if !(y > 0.0) {
                        return Err("log-Euler scheme needs a strictly positive state");
                    }
                    let var: f64 = sig.iter().map(|a| a * a).sum::<f64>() / (y * y);
                    y * ((self.b[i] / y - 0.5 * var) * self.dt + noise / y).exp()
                }
            };
            if !next[i].is_finite() {
                return Err("state became non-finite");
            }
        }
        Ok(())
    }
}

fn init_rows(x: &Segment, noise: &NoiseGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = x.grid();
    let n = grid.dim_n();
    let d = noise.dim_d;
    let row = (grid.nodes() + noise.steps) * n;
    let mut history = alloc::vec![0.0; noise.num_paths * row];
    let mut increments = alloc::vec![0.0; noise.num_paths * noise.steps * d];
    par::try_rows(&mut increments, noise.steps * d, |p, r| {
        noise.fill_path(p, r);
        Ok(())
    })?;
    let prefix = grid.nodes() * n;
    for r in history.chunks_mut(row) {
        r[..prefix].copy_from_slice(x.values());
    }
    Ok((history, increments))
}

/// Euler–Maruyama for `dy = b(t, X_t) dt + σ(t, X_t) dW` from `X_t = x`,
/// one path per noise path.
pub fn simulate_forward(
    model: &(impl CoefficientModel + ?Sized),
    t: f64,
    x: &Segment,
    noise: &NoiseGrid,
) -> Result<PathEnsemble> {
    check_setup(model, t, x, noise)?;
    let grid = *x.grid();
    let (mut history, increments) = init_rows(x, noise)?;
    let d = noise.dim_d;
    let row = (grid.nodes() + noise.steps) * grid.dim_n();
    par::try_rows(&mut history, row, |p, r| {
        let mut stepper = Stepper::new(model, &grid, noise.dt);
        let dw = &increments[p * noise.steps * d..(p + 1) * noise.steps * d];
        for k in 0..noise.steps {
            stepper
                .step(r, k, noise.time(k), &dw[k * d..(k + 1) * d], None)
                .map_err(|e| Error::Simulation {
                    path: p,
                    step: k,
                    detail: e.into(),
                })?;
        }
        Ok(())
    })?;
    Ok(PathEnsemble {
        grid,
        noise: noise.clone(),
        history,
        increments,
        controls: None,
    })
}

/// Euler–Maruyama for the controlled equation
/// `dy = b dt + σ [h(t, X_t, u_t) dt + dW]`, recording `u_k` on every path.
pub fn simulate_controlled(
    model: &(impl CoefficientModel + ?Sized),
    channel: &(impl Channel + ?Sized),
    policy: &(impl Policy + ?Sized),
    t: f64,
    x: &Segment,
    noise: &NoiseGrid,
) -> Result<PathEnsemble> {
    check_setup(model, t, x, noise)?;
    if channel.dim_d() != noise.dim_d || channel.dim_u() != policy.dim_u() {
        return Err(Error::Config(
            "channel, policy and noise dimensions disagree".into(),
        ));
    }
    let grid = *x.grid();
    let (mut history, increments) = init_rows(x, noise)?;
    let d = noise.dim_d;
    let ku = policy.dim_u();
    let n = grid.dim_n();
    let mut controls = alloc::vec![0.0; noise.num_paths * noise.steps * ku];
    let row = (grid.nodes() + noise.steps) * n;
    par::try_rows2(
        &mut history,
        row,
        &mut controls,
        noise.steps * ku,
        |p, r, u_row| {
            let mut stepper = Stepper::new(model, &grid, noise.dt);
            let mut h = alloc::vec![0.0; d];
            let dw = &increments[p * noise.steps * d..(p + 1) * noise.steps * d];
            for k in 0..noise.steps {
                let tk = noise.time(k);
                {
                    let x = SegmentRef::new(&grid, &r[k * n..(k + grid.nodes()) * n]);
                    let u = &mut u_row[k * ku..(k + 1) * ku];
                    policy.control(p, k, tk, x, u);
                    channel.apply_checked(tk, x, u, &mut h)?;
                }
                stepper
                    .step(r, k, tk, &dw[k * d..(k + 1) * d], Some(&h))
                    .map_err(|e| Error::Simulation {
                        path: p,
                        step: k,
                        detail: e.into(),
                    })?;
            }
            Ok(())
        },
    )?;
    Ok(PathEnsemble {
        grid,
        noise: noise.clone(),
        history,
        increments,
        controls: Some((ku, controls)),
    })
}

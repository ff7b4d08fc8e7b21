//! Malliavin derivatives of the forward path by the variational delay
//! equation, with a bump-and-resimulate oracle.
//!
//! On the grid the derivative is taken with respect to the increment `ΔW_s`
//! (column `j`): it vanishes up to node `s`, equals `σ^j(t_s, X_s)` at node
//! `s + 1` and then follows the Euler scheme of the linearised equation on
//! the same noise. This is the exact derivative of the discrete map, so a
//! central bump of `ΔW_s` agrees with it up to `O(ε²)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::noise::NoiseGrid;
use crate::par;
use crate::sdde::{simulate_forward, CoefficientModel, PathEnsemble, Scheme};
use crate::segment::{Segment, SegmentFunctional, SegmentRef};

/// `D_s y_{t_k}` for every path, noise column and step, laid out like the
/// ensemble history (a zero prefix of `m + 1` nodes stands for `[s − r, s]`
/// and everything before).
#[derive(Clone, Debug, PartialEq)]
pub struct MalliavinState {
    base_step: usize,
    nodes: usize,
    steps: usize,
    dim_n: usize,
    dim_d: usize,
    grid: crate::segment::GridSpec,
    data: Vec<f64>,
}

impl MalliavinState {
    pub fn base_step(&self) -> usize {
        self.base_step
    }

    fn column_len(&self) -> usize {
        (self.nodes + self.steps) * self.dim_n
    }

    fn column(&self, path: usize, j: usize) -> &[f64] {
        let l = self.column_len();
        let start = (path * self.dim_d + j) * l;
        &self.data[start..start + l]
    }

    /// `D^j_s y_{t_k}` on `path`.
    pub fn value(&self, path: usize, j: usize, k: usize) -> &[f64] {
        let n = self.dim_n;
        let off = (self.nodes - 1 + k) * n;
        &self.column(path, j)[off..off + n]
    }

    /// The derivative's own segment `θ ↦ D^j_s y_{t_k + θ}`.
    pub fn segment(&self, path: usize, j: usize, k: usize) -> SegmentRef<'_> {
        let n = self.dim_n;
        SegmentRef::new(
            &self.grid,
            &self.column(path, j)[k * n..(k + self.nodes) * n],
        )
    }

    pub fn num_paths(&self) -> usize {
        self.data.len() / (self.dim_d * self.column_len())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Propagates `D_s y` along every path of `ensemble` for the increment at
/// step `s`.
pub fn propagate_derivative(
    model: &(impl CoefficientModel + ?Sized),
    ensemble: &PathEnsemble,
    s: usize,
) -> Result<MalliavinState> {
    let grid = *ensemble.grid();
    let (n, d) = (grid.dim_n(), grid.dim_d());
    let steps = ensemble.steps();
    if s >= steps {
        return Err(Error::Domain(alloc::format!(
            "base step {s} is not before the last step {steps}"
        )));
    }
    if model.scheme() != Scheme::Euler {
        return Err(Error::Config(
            "derivative propagation is defined for the Euler scheme only".into(),
        ));
    }
    let probe = ensemble.snapshot(0, s);
    if model.drift_gradient(ensemble.time(s), probe).is_none()
        || model.diffusion_gradient(ensemble.time(s), probe).is_none()
    {
        return Err(Error::Config(
            "model does not provide drift and diffusion gradients".into(),
        ));
    }
    let nodes = grid.nodes();
    let col = (nodes + steps) * n;
    let mut data = alloc::vec![0.0; ensemble.num_paths() * d * col];
    par::try_rows(&mut data, d * col, |p, block| {
        let mut sigma = alloc::vec![0.0; n * d];
        let xs = ensemble.snapshot(p, s);
        model.diffusion(ensemble.time(s), xs, &mut sigma);
        for j in 0..d {
            let c = &mut block[j * col..(j + 1) * col];
            let first = (nodes + s) * n;
            for i in 0..n {
                c[first + i] = sigma[i * d + j];
            }
        }
        for k in s + 1..steps {
            let t = ensemble.time(k);
            let x = ensemble.snapshot(p, k);
            let gb = model.drift_gradient(t, x).unwrap_or_default();
            let gs = model.diffusion_gradient(t, x).unwrap_or_default();
            let dw = ensemble.increment(p, k);
            for j in 0..d {
                let c = &mut block[j * col..(j + 1) * col];
                let (past, next) = c.split_at_mut((k + nodes) * n);
                let dseg = SegmentRef::new(&grid, &past[k * n..]);
                let now = dseg.now();
                for i in 0..n {
                    let mut v = now[i] + gb[i].pair_unchecked(dseg) * ensemble.dt();
                    for (l, w) in dw.iter().enumerate() {
                        v += gs[i * d + l].pair_unchecked(dseg) * w;
                    }
                    if !v.is_finite() {
                        return Err(Error::Simulation {
                            path: p,
                            step: k,
                            detail: "derivative became non-finite".into(),
                        });
                    }
                    next[i] = v;
                }
            }
        }
        Ok(())
    })?;
    Ok(MalliavinState {
        base_step: s,
        nodes,
        steps,
        dim_n: n,
        dim_d: d,
        grid,
        data,
    })
}

/// `D^j_s F(X_{t_k}) = ⟨∇F(X_{t_k}), D^j_s y_{t_k+·}⟩` per path; one `Rᵈ` row
/// per path.
pub fn chain_rule(
    functional: &SegmentFunctional,
    state: &MalliavinState,
    ensemble: &PathEnsemble,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    if k > state.steps {
        return Err(Error::Domain(alloc::format!(
            "step {k} is beyond the horizon"
        )));
    }
    par::map(ensemble.num_paths(), |p| {
        let grad = functional.gradient(ensemble.snapshot(p, k))?;
        (0..state.dim_d)
            .map(|j| grad.pair(state.segment(p, j, k)))
            .collect()
    })
    .into_iter()
    .collect()
}

/// Central difference of `F(X_{t_k})` under a shift `±ε` of `ΔW_s` in each
/// noise column, on common noise; one `Rᵈ` row per path.
pub fn bump_oracle(
    model: &(impl CoefficientModel + ?Sized),
    noise: &NoiseGrid,
    s: usize,
    eps: f64,
    k: usize,
    x: &Segment,
    functional: &SegmentFunctional,
) -> Result<Vec<Vec<f64>>> {
    if !(eps > 0.0) {
        return Err(Error::Domain("bump size must be positive".into()));
    }
    if k > noise.steps {
        return Err(Error::Domain(alloc::format!(
            "step {k} is beyond the horizon"
        )));
    }
    let t0 = noise.start();
    let horizon = noise.truncated(k);
    let d = noise.dim_d;
    let mut out = alloc::vec![alloc::vec![0.0; d]; noise.num_paths];
    for j in 0..d {
        let up = simulate_forward(model, t0, x, &horizon.with_bump(s, j, eps))?;
        let down = simulate_forward(model, t0, x, &horizon.with_bump(s, j, -eps))?;
        let col: Vec<f64> = par::map(noise.num_paths, |p| {
            Ok(
                (functional.eval(up.snapshot(p, k))? - functional.eval(down.snapshot(p, k))?)
                    / (2.0 * eps),
            )
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (row, v) in out.iter_mut().zip(col) {
            row[j] = v;
        }
    }
    Ok(out)
}

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::bsde::Driver;
use crate::error::{Error, Result};
use crate::sdde::{Channel, LinearChannel};
use crate::segment::{SegmentFunctional, SegmentRef};

/// Admissible control values `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "set")]
pub enum ControlSet {
    /// `[lo₁, hi₁] × … × [lo_k, hi_k]`.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `{u ∈ R^k : |u| ≤ radius}`.
    Ball {
        dim: usize,
        radius: f64,
    },
    Finite {
        points: Vec<Vec<f64>>,
    },
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { dim, .. } => *dim,
            Self::Finite { points } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Box { lo, hi } => {
                !lo.is_empty()
                    && lo.len() == hi.len()
                    && lo
                        .iter()
                        .zip(hi)
                        .all(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
            }
            Self::Ball { dim, radius } => *dim >= 1 && radius.is_finite() && *radius >= 0.0,
            Self::Finite { points } => {
                !points.is_empty()
                    && !points[0].is_empty()
                    && points
                        .iter()
                        .all(|p| p.len() == points[0].len() && p.iter().all(|v| v.is_finite()))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!(
                "malformed control set {self:?}"
            )))
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            Self::Box { lo, hi } => {
                u.len() == lo.len()
                    && u.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
            }
            Self::Ball { dim, radius } => u.len() == *dim && norm(u) <= radius + tol,
            Self::Finite { points } => points
                .iter()
                .any(|p| p.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
        }
    }

    /// Grid candidates: `resolution` points per axis on boxes; the bounding
    /// grid of a ball, with outside points projected radially onto the
    /// sphere; the points themselves for finite sets.
    pub fn candidates(&self, resolution: usize) -> Vec<Vec<f64>> {
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            if resolution <= 1 || lo == hi {
                return alloc::vec![lo];
            }
            (0..resolution)
                .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
                .collect()
        };
        match self {
            Self::Box { lo, hi } => product(
                &lo.iter()
                    .zip(hi)
                    .map(|(a, b)| axis(*a, *b))
                    .collect::<Vec<_>>(),
            ),
            Self::Ball { dim, radius } => {
                let ax = axis(-radius, *radius);
                product(&alloc::vec![ax; *dim])
                    .into_iter()
                    .map(|mut u| {
                        let r = norm(&u);
                        if r > *radius {
                            u.iter_mut().for_each(|v| *v *= radius / r);
                        }
                        u
                    })
                    .collect()
            }
            Self::Finite { points } => points.clone(),
        }
    }
}

fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = alloc::vec![Vec::new()];
    for ax in axes {
        out = out
            .iter()
            .flat_map(|p| ax.iter().map(move |v| [p.as_slice(), &[*v]].concat()))
            .collect();
    }
    out
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    u.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// User-supplied running cost.
pub type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Running cost `g: U → [0, ∞)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "cost")]
pub enum RunningCost {
    Zero,
    /// `scale·|u|²`.
    Quadratic {
        scale: f64,
    },
    #[serde(skip)]
    Custom(CostFn),
}

impl fmt::Debug for RunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Quadratic { scale } => write!(f, "Quadratic({scale})"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl RunningCost {
    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic { scale } => scale * u.iter().map(|v| v * v).sum::<f64>(),
            Self::Custom(g) => g(u),
        }
    }
}

/// How `Γ₀` selects a minimizer of `g(u) + z·h(t, x, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerMode {
    /// Closed form when the problem has one, grid search otherwise.
    Analytic,
    Grid,
}

/// Minimizer selection; ties go to the lexicographically smallest control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizerRule {
    pub mode: MinimizerMode,
    /// Grid points per control dimension.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    101
}

impl Default for MinimizerRule {
    fn default() -> Self {
        Self {
            mode: MinimizerMode::Analytic,
            resolution: default_resolution(),
        }
    }
}

impl MinimizerRule {
    pub fn grid(resolution: usize) -> Self {
        Self {
            mode: MinimizerMode::Grid,
            resolution,
        }
    }
}

/// Control set, running cost, channel and terminal cost of
/// `J(t, x, u) = E ∫_t^T g(u_s) ds + E φ(X_T^u)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlProblem<C = LinearChannel> {
    pub set: ControlSet,
    pub running_cost: RunningCost,
    pub channel: C,
    pub terminal: SegmentFunctional,
}

impl<C: Channel> ControlProblem<C> {
    pub fn new(
        set: ControlSet,
        running_cost: RunningCost,
        channel: C,
        terminal: SegmentFunctional,
    ) -> Result<Self> {
        let p = Self {
            set,
            running_cost,
            channel,
            terminal,
        };
        p.validate()?;
        Ok(p)
    }

    /// Dimensions and `g ≥ 0` on a coarse control grid.
    pub fn validate(&self) -> Result<()> {
        self.set.validate()?;
        if self.channel.dim_u() != self.set.dim() {
            return Err(Error::Config(
                "channel and control set dimensions disagree".into(),
            ));
        }
        if let RunningCost::Quadratic { scale } = self.running_cost {
            if !(scale >= 0.0) {
                return Err(Error::Config("running cost must be nonnegative".into()));
            }
        }
        for u in self.set.candidates(5) {
            let g = self.running_cost.value(&u);
            if !(g >= 0.0) {
                return Err(Error::Validation(alloc::format!(
                    "running cost {g} < 0 at u = {u:?}"
                )));
            }
        }
        Ok(())
    }

    /// Checks the channel bound on the control grid at `(t, x)`.
    pub fn check_channel(&self, t: f64, x: SegmentRef<'_>) -> Result<()> {
        let mut h = alloc::vec![0.0; self.channel.dim_d()];
        for u in self.set.candidates(11) {
            self.channel.apply_checked(t, x, &u, &mut h)?;
        }
        Ok(())
    }

    fn objective(&self, t: f64, x: SegmentRef<'_>, z: &[f64], u: &[f64], h: &mut [f64]) -> f64 {
        self.channel.apply(t, x, u, h);
        self.running_cost.value(u) + z.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `ψ(t, x, z) = inf_U { g(u) + z·h(t, x, u) }`.
    pub fn hamiltonian(&self, rule: &MinimizerRule, t: f64, x: SegmentRef<'_>, z: &[f64]) -> f64 {
        let u = self.minimizer(rule, t, x, z);
        let mut h = alloc::vec![0.0; self.channel.dim_d()];
        self.objective(t, x, z, &u, &mut h)
    }

    /// An element of `Γ(t, x, z)`.
    pub fn minimizer(
        &self,
        rule: &MinimizerRule,
        t: f64,
        x: SegmentRef<'_>,
        z: &[f64],
    ) -> Vec<f64> {
        if rule.mode == MinimizerMode::Analytic {
            if let Some(u) = self.analytic_minimizer(t, x, z) {
                return u;
            }
        }
        self.grid_minimizer(rule.resolution, t, x, z)
    }

    fn grid_minimizer(&self, resolution: usize, t: f64, x: SegmentRef<'_>, z: &[f64]) -> Vec<f64> {
        let mut h = alloc::vec![0.0; self.channel.dim_d()];
        let mut best: Option<(f64, Vec<f64>)> = None;
        for u in self.set.candidates(resolution) {
            let v = self.objective(t, x, z, &u, &mut h);
            let better = match &best {
                None => true,
                Some((bv, bu)) => v < *bv || (v == *bv && lex_cmp(&u, bu) == Ordering::Less),
            };
            if better {
                best = Some((v, u));
            }
        }
        best.map(|(_, u)| u).unwrap_or_default()
    }

    /// `h = G u` with zero or isotropic quadratic cost on a ball or a box.
    fn analytic_minimizer(&self, t: f64, x: SegmentRef<'_>, z: &[f64]) -> Option<Vec<f64>> {
        let k = self.set.dim();
        let d = self.channel.dim_d();
        let mut w = alloc::vec![0.0; k];
        let mut e = alloc::vec![0.0; k];
        let mut col = alloc::vec![0.0; d];
        for i in 0..k {
            e.iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v = if j == i { 1.0 } else { 0.0 });
            self.channel.apply(t, x, &e, &mut col);
            w[i] = z.iter().zip(&col).map(|(a, b)| a * b).sum();
        }
        // Only exact for channels linear in u: verify on one probe.
        let probe: Vec<f64> = (0..k).map(|i| 0.5 + i as f64).collect();
        self.channel.apply(t, x, &probe, &mut col);
        let direct: f64 = z.iter().zip(&col).map(|(a, b)| a * b).sum();
        let linear: f64 = w.iter().zip(&probe).map(|(a, b)| a * b).sum();
        if (direct - linear).abs() > 1e-12 * (1.0 + direct.abs()) {
            return None;
        }
        let scale = match self.running_cost {
            RunningCost::Zero => 0.0,
            RunningCost::Quadratic { scale } => scale,
            RunningCost::Custom(_) => return None,
        };
        match &self.set {
            ControlSet::Ball { radius, .. } => {
                let wn = norm(&w);
                if scale > 0.0 && wn <= 2.0 * scale * radius {
                    Some(w.iter().map(|v| -v / (2.0 * scale)).collect())
                } else if wn > 0.0 {
                    Some(w.iter().map(|v| -radius * v / wn).collect())
                } else if scale > 0.0 {
                    Some(alloc::vec![0.0; k])
                } else {
                    let mut u = alloc::vec![0.0; k];
                    u[0] = -radius;
                    Some(u)
                }
            }
            ControlSet::Box { lo, hi } => Some(
                (0..k)
                    .map(|i| {
                        if scale > 0.0 {
                            (-w[i] / (2.0 * scale)).clamp(lo[i], hi[i])
                        } else if w[i] < 0.0 {
                            hi[i]
                        } else {
                            lo[i]
                        }
                    })
                    .collect(),
            ),
            ControlSet::Finite { .. } => None,
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// `ψ(t, x, y, z) = −inf_U { g(u) + z·h(t, x, u) }`: the driver whose `Y` is
/// the optimal cost-to-go.
pub struct HamiltonianDriver<'a, C = LinearChannel> {
    pub problem: &'a ControlProblem<C>,
    pub rule: MinimizerRule,
}

impl<'a, C: Channel> HamiltonianDriver<'a, C> {
    pub fn new(problem: &'a ControlProblem<C>, rule: MinimizerRule) -> Self {
        Self { problem, rule }
    }
}

impl<C: Channel> Driver for HamiltonianDriver<'_, C> {
    fn value(&self, t: f64, x: SegmentRef<'_>, _y: f64, z: &[f64]) -> f64 {
        -self.problem.hamiltonian(&self.rule, t, x, z)
    }

    fn lipschitz_y(&self) -> f64 {
        0.0
    }

    fn lipschitz_z(&self) -> f64 {
        self.problem.channel.bound()
    }
}

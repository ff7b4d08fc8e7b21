#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretisation of `C([-r, 0]; Rⁿ)`.
///
/// The delay is defined as `past_points · step`, so θ₀ = −r and θ_m = 0 are
/// hit exactly and a one-step shift of the segment is exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridConfig", into = "GridConfig")]
pub struct GridSpec {
    step: f64,
    past_points: usize,
    dim_n: usize,
    dim_d: usize,
}

/// Wire form of [`GridSpec`]. `step` is optional on input and derived from
/// `delay / past_points` when absent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub delay: f64,
    pub past_points: usize,
    #[serde(default = "one")]
    pub dim_n: usize,
    #[serde(default = "one")]
    pub dim_d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

fn one() -> usize {
    1
}

/// Relative slack accepted when a configured step is checked against `delay / m`.
pub const GRID_COUPLING_TOL: f64 = 1e-12;

impl GridSpec {
    /// Grid with step `h` and `m` past intervals; the delay is `m·h`.
    pub fn with_step(step: f64, past_points: usize, dim_n: usize, dim_d: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(alloc::format!(
                "grid step must be positive, got {step}"
            )));
        }
        if past_points == 0 {
            return Err(Error::Config(
                "grid needs at least one past interval (m >= 1)".into(),
            ));
        }
        if dim_n == 0 || dim_d == 0 {
            return Err(Error::Config(
                "state and noise dimensions must be at least 1".into(),
            ));
        }
        Ok(Self {
            step,
            past_points,
            dim_n,
            dim_d,
        })
    }

    /// Grid from a delay `r` and `m` past intervals; `h = r / m`.
    pub fn with_delay(delay: f64, past_points: usize, dim_n: usize, dim_d: usize) -> Result<Self> {
        if !(delay.is_finite() && delay > 0.0) {
            return Err(Error::Config(alloc::format!(
                "delay must be positive, got {delay}"
            )));
        }
        if past_points == 0 {
            return Err(Error::Config(
                "grid needs at least one past interval (m >= 1)".into(),
            ));
        }
        Self::with_step(delay / past_points as f64, past_points, dim_n, dim_d)
    }

    /// Checks that a simulation step coincides with the grid step, i.e. `m·Δt = r`.
    pub fn check_coupling(&self, dt: f64) -> Result<()> {
        let r = self.delay();
        if (self.past_points as f64 * dt - r).abs() > GRID_COUPLING_TOL * r {
            return Err(Error::Config(alloc::format!(
                "grid coupling m·Δt = r violated: past_points * dt = {} * {} != delay {}",
                self.past_points,
                dt,
                r
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn past_points(&self) -> usize {
        self.past_points
    }

    /// Number of grid nodes, `m + 1`.
    pub fn nodes(&self) -> usize {
        self.past_points + 1
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn delay(&self) -> f64 {
        self.past_points as f64 * self.step
    }

    /// θ_j = −(m − j)·h.
    pub fn theta(&self, j: usize) -> f64 {
        -((self.past_points - j) as f64) * self.step
    }

    /// Same spacing with a different number of components (used for scalar
    /// weighting measures on an n-dimensional grid).
    pub fn with_components(&self, dim_n: usize) -> Self {
        Self { dim_n, ..*self }
    }

    /// Two grids describe the same nodes (dimensions may differ).
    pub fn same_nodes(&self, other: &GridSpec) -> bool {
        self.past_points == other.past_points && self.step == other.step
    }

    /// Locates θ as `(j, w)` with `x(θ) = (1 − w)·x_j + w·x_{j+1}`; `w == 0`
    /// exactly on grid nodes.
    pub fn locate(&self, theta: f64) -> Result<(usize, f64)> {
        let r = self.delay();
        let tol = 1e-12 * r.max(1.0);
        if !theta.is_finite() || theta < -r - tol || theta > tol {
            return Err(Error::Domain(alloc::format!(
                "theta = {theta} outside [-{r}, 0]"
            )));
        }
        let s = ((theta + r) / self.step).clamp(0.0, self.past_points as f64);
        let mut j = s.floor() as usize;
        let mut w = s - j as f64;
        if w < 1e-9 {
            w = 0.0;
        } else if w > 1.0 - 1e-9 {
            j += 1;
            w = 0.0;
        }
        if j >= self.past_points {
            return Ok((self.past_points, 0.0));
        }
        Ok((j, w))
    }
}

impl TryFrom<GridConfig> for GridSpec {
    type Error = Error;

    fn try_from(cfg: GridConfig) -> Result<Self> {
        match cfg.step {
            Some(step) => {
                let grid = Self::with_step(step, cfg.past_points, cfg.dim_n, cfg.dim_d)?;
                grid.check_coupling(step).and_then(|_| {
                    if (grid.delay() - cfg.delay).abs()
                        > GRID_COUPLING_TOL * cfg.delay.abs().max(1.0)
                    {
                        Err(Error::Config(alloc::format!(
                            "grid coupling m·Δt = r violated: past_points * step = {} != delay {}",
                            grid.delay(),
                            cfg.delay
                        )))
                    } else {
                        Ok(grid)
                    }
                })
            }
            None => Self::with_delay(cfg.delay, cfg.past_points, cfg.dim_n, cfg.dim_d),
        }
    }
}

impl From<GridSpec> for GridConfig {
    fn from(g: GridSpec) -> Self {
        GridConfig {
            delay: g.delay(),
            past_points: g.past_points,
            dim_n: g.dim_n,
            dim_d: g.dim_d,
            step: Some(g.step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = GridSpec::with_delay(0.7, 7, 1, 1).unwrap();
        assert_eq!(g.theta(g.past_points()), 0.0);
        assert_eq!(g.theta(0), -g.delay());
        assert_eq!(g.past_points() as f64 * g.step(), g.delay());
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::with_delay(1.0, 0, 1, 1).is_err());
        assert!(GridSpec::with_delay(-1.0, 3, 1, 1).is_err());
        assert!(GridSpec::with_step(0.1, 3, 0, 1).is_err());
        assert!(GridSpec::with_step(0.1, 3, 1, 0).is_err());
    }

    #[test]
    fn coupling_check_names_the_constraint() {
        let g = GridSpec::with_delay(0.5, 50, 1, 1).unwrap();
        assert!(g.check_coupling(0.01).is_ok());
        let err = g.check_coupling(0.02).unwrap_err();
        assert!(alloc::format!("{err}").contains("past_points * dt"));
    }

    #[test]
    fn locate_snaps_to_nodes() {
        let g = GridSpec::with_delay(1.0, 4, 1, 1).unwrap();
        assert_eq!(g.locate(-0.5).unwrap(), (2, 0.0));
        assert_eq!(g.locate(0.0).unwrap(), (4, 0.0));
        assert_eq!(g.locate(-1.0).unwrap(), (0, 0.0));
        let (j, w) = g.locate(-0.6).unwrap();
        assert_eq!(j, 1);
        assert!((w - 0.6).abs() < 1e-12);
        assert!(g.locate(0.1).is_err());
        assert!(g.locate(-1.1).is_err());
    }
}

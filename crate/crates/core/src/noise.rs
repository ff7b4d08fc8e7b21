//! Gaussian increments keyed by `(seed, path, step)`.
//!
//! Each path owns a ChaCha8 stream (`stream = path index`); step `k` starts at
//! a fixed word offset, so any `(path, step)` can be regenerated in isolation
//! and results do not depend on the order in which paths are computed.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A shift of one increment, used by bump-and-resimulate oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    /// Global step index.
    pub step: usize,
    pub column: usize,
    pub delta: f64,
}

/// The Brownian increments driving an ensemble on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub seed: u64,
    pub num_paths: usize,
    pub dim_d: usize,
    pub dt: f64,
    /// Time of global step 0.
    pub origin: f64,
    /// Number of steps covered by this grid.
    pub steps: usize,
    /// First global step index covered.
    #[serde(default)]
    pub step_offset: usize,
    /// First global path index covered.
    #[serde(default)]
    pub path_offset: usize,
    #[serde(default)]
    pub bump: Option<Bump>,
}

impl NoiseGrid {
    pub fn new(
        seed: u64,
        num_paths: usize,
        dim_d: usize,
        dt: f64,
        t0: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(alloc::format!(
                "time step must be positive, got {dt}"
            )));
        }
        if num_paths == 0 || dim_d == 0 {
            return Err(Error::Config(
                "noise grid needs at least one path and one column".into(),
            ));
        }
        Ok(Self {
            seed,
            num_paths,
            dim_d,
            dt,
            origin: t0,
            steps,
            step_offset: 0,
            path_offset: 0,
            bump: None,
        })
    }

    /// Grid covering `[t0, horizon]`; the span must be a whole number of steps.
    pub fn spanning(
        seed: u64,
        num_paths: usize,
        dim_d: usize,
        dt: f64,
        t0: f64,
        horizon: f64,
    ) -> Result<Self> {
        let steps = steps_between(t0, horizon, dt)?;
        Self::new(seed, num_paths, dim_d, dt, t0, steps)
    }

    /// Time of local step `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.origin + (self.step_offset + k) as f64 * self.dt
    }

    pub fn start(&self) -> f64 {
        self.time(0)
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// The same noise from local step `k` on.
    pub fn tail(&self, k: usize) -> Self {
        let k = k.min(self.steps);
        Self {
            step_offset: self.step_offset + k,
            steps: self.steps - k,
            ..self.clone()
        }
    }

    /// The first `steps` steps only.
    pub fn truncated(&self, steps: usize) -> Self {
        Self {
            steps: steps.min(self.steps),
            ..self.clone()
        }
    }

    /// Paths `first .. first + count` of this grid.
    pub fn subset(&self, first: usize, count: usize) -> Self {
        Self {
            path_offset: self.path_offset + first,
            num_paths: count,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_paths(&self, num_paths: usize) -> Self {
        Self {
            num_paths,
            ..self.clone()
        }
    }

    /// Shifts `ΔW` at local step `k`, column `j`, by `delta` on every path.
    pub fn with_bump(&self, k: usize, column: usize, delta: f64) -> Self {
        Self {
            bump: Some(Bump {
                step: self.step_offset + k,
                column,
                delta,
            }),
            ..self.clone()
        }
    }

    fn words_per_step(&self) -> u128 {
        // two u64 (four u32 words) per Box-Muller pair
        4 * self.dim_d.div_ceil(2) as u128
    }

    /// Writes the `steps × d` increments of local path `p` into `out`.
    pub fn fill_path(&self, p: usize, out: &mut [f64]) {
        let d = self.dim_d;
        debug_assert_eq!(out.len(), self.steps * d);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.path_offset + p) as u64);
        rng.set_word_pos(self.step_offset as u128 * self.words_per_step());
        let scale = self.dt.sqrt();
        for (k, row) in out.chunks_mut(d).enumerate() {
            let mut c = 0;
            while c < d {
                let (z1, z2) = box_muller(&mut rng);
                row[c] = scale * z1;
                if c + 1 < d {
                    row[c + 1] = scale * z2;
                }
                c += 2;
            }
            if let Some(b) = self.bump {
                if b.step == self.step_offset + k && b.column < d {
                    row[b.column] += b.delta;
                }
            }
        }
    }

    pub fn path_increments(&self, p: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.steps * self.dim_d];
        self.fill_path(p, &mut out);
        out
    }
}

/// Number of `dt` steps from `t0` to `horizon`; errors unless it is whole.
pub fn steps_between(t0: f64, horizon: f64, dt: f64) -> Result<usize> {
    if horizon < t0 {
        return Err(Error::Domain(alloc::format!(
            "horizon {horizon} precedes start {t0}"
        )));
    }
    let s = (horizon - t0) / dt;
    let k = s.round();
    if (s - k).abs() > 1e-9 * s.max(1.0) {
        return Err(Error::Config(alloc::format!(
            "interval [{t0}, {horizon}] is not a whole number of steps of {dt}"
        )));
    }
    Ok(k as usize)
}

fn unit_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = unit_open(rng);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = core::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

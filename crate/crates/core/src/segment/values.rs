use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::error::{Error, Result};

/// A sampled element of `C([-r, 0]; Rⁿ)`: the state `X_t(θ) = y_{t+θ}`.
///
/// Values are stored node-major: node `j` occupies `values[j·n .. (j+1)·n]`,
/// node `m` is θ = 0 ("now").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentWire", into = "SegmentWire")]
pub struct Segment {
    grid: GridSpec,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SegmentWire {
    grid: GridSpec,
    values: Vec<Vec<f64>>,
}

/// Borrowed view of a segment; this is what coefficient maps and functionals
/// consume, so path ensembles can hand out windows of their history without
/// copying.
#[derive(Clone, Copy, Debug)]
pub struct SegmentRef<'a> {
    grid: &'a GridSpec,
    values: &'a [f64],
}

impl Segment {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() * grid.dim_n() {
            return Err(Error::Config(alloc::format!(
                "segment needs {} values ({} nodes x {} components), got {}",
                grid.nodes() * grid.dim_n(),
                grid.nodes(),
                grid.dim_n(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(alloc::format!(
                "segment value {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Constant segment `x ≡ c` (every component equal to `c`).
    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: alloc::vec![c; grid.nodes() * grid.dim_n()],
        }
    }

    /// Segment with every component equal to `f(θ_j)` at node `j`.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nodes() * grid.dim_n());
        for j in 0..grid.nodes() {
            let v = f(grid.theta(j));
            values.extend(core::iter::repeat_n(v, grid.dim_n()));
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_ref(&self) -> SegmentRef<'_> {
        SegmentRef {
            grid: &self.grid,
            values: &self.values,
        }
    }

    pub fn evaluate(&self, theta: f64) -> Result<Vec<f64>> {
        self.as_ref().evaluate(theta)
    }

    pub fn sup_norm(&self) -> f64 {
        self.as_ref().sup_norm()
    }

    /// One-step shift: drops the oldest node and appends `new_value` at θ = 0.
    pub fn roll(&self, new_value: &[f64]) -> Self {
        let mut out = self.clone();
        out.roll_in_place(new_value);
        out
    }

    pub fn roll_in_place(&mut self, new_value: &[f64]) {
        let n = self.grid.dim_n();
        assert_eq!(new_value.len(), n, "roll: value has wrong dimension");
        self.values.copy_within(n.., 0);
        let len = self.values.len();
        self.values[len - n..].copy_from_slice(new_value);
    }

    /// `self + eps·dir` node by node.
    pub fn perturbed(&self, dir: &Segment, eps: f64) -> Result<Self> {
        if !self.grid.same_nodes(&dir.grid) || self.grid.dim_n() != dir.grid.dim_n() {
            return Err(Error::Config(
                "perturbation direction lives on another grid".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&dir.values)
            .map(|(a, b)| a + eps * b)
            .collect();
        Self::new(self.grid, values)
    }

    /// Replaces the value at node `j`.
    pub fn set_node(&mut self, j: usize, value: &[f64]) {
        let n = self.grid.dim_n();
        self.values[j * n..(j + 1) * n].copy_from_slice(value);
    }
}

impl<'a> SegmentRef<'a> {
    /// Wraps a node-major slice laid out on `grid`; panics on a length mismatch.
    pub fn new(grid: &'a GridSpec, values: &'a [f64]) -> Self {
        assert_eq!(
            values.len(),
            grid.nodes() * grid.dim_n(),
            "segment view has wrong length"
        );
        Self { grid, values }
    }

    pub fn grid(&self) -> &'a GridSpec {
        self.grid
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    /// Value of component `c` at node `j`.
    #[inline]
    pub fn node(&self, j: usize, c: usize) -> f64 {
        self.values[j * self.grid.dim_n() + c]
    }

    /// x(0).
    #[inline]
    pub fn now(&self) -> &'a [f64] {
        let n = self.grid.dim_n();
        &self.values[self.values.len() - n..]
    }

    /// Component `c` of x(θ), linear between nodes.
    pub fn component_at(&self, theta: f64, c: usize) -> Result<f64> {
        let (j, w) = self.grid.locate(theta)?;
        Ok(self.blend(j, w, c))
    }

    #[inline]
    pub(crate) fn blend(&self, j: usize, w: f64, c: usize) -> f64 {
        if w == 0.0 {
            self.node(j, c)
        } else {
            (1.0 - w) * self.node(j, c) + w * self.node(j + 1, c)
        }
    }

    pub fn evaluate(&self, theta: f64) -> Result<Vec<f64>> {
        let (j, w) = self.grid.locate(theta)?;
        Ok((0..self.grid.dim_n())
            .map(|c| self.blend(j, w, c))
            .collect())
    }

    /// max over nodes of the Rⁿ max-norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Trapezoidal mean of component `c` over [−r, 0].
    pub fn window_mean(&self, c: usize) -> f64 {
        let m = self.grid.past_points();
        let mut acc = 0.5 * (self.node(0, c) + self.node(m, c));
        for j in 1..m {
            acc += self.node(j, c);
        }
        acc / m as f64
    }

    pub fn to_owned(&self) -> Segment {
        Segment {
            grid: *self.grid,
            values: self.values.to_vec(),
        }
    }
}

impl TryFrom<SegmentWire> for Segment {
    type Error = Error;

    fn try_from(w: SegmentWire) -> Result<Self> {
        let n = w.grid.dim_n();
        if w.values.iter().any(|p| p.len() != n) {
            return Err(Error::Config(alloc::format!(
                "every segment node needs {n} components"
            )));
        }
        Segment::new(w.grid, w.values.into_iter().flatten().collect())
    }
}

impl From<Segment> for SegmentWire {
    fn from(s: Segment) -> Self {
        let n = s.grid.dim_n();
        SegmentWire {
            grid: s.grid,
            values: s.values.chunks(n).map(|c| c.to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> GridSpec {
        GridSpec::with_delay(1.0, m, 1, 1).unwrap()
    }

    #[test]
    fn constant_segment_evaluates_to_constant() {
        let x = Segment::constant(grid(5), 2.5);
        for theta in [-1.0, -0.73, -0.2, 0.0] {
            assert_eq!(x.evaluate(theta).unwrap(), [2.5]);
        }
    }

    #[test]
    fn ramp_midpoint_is_exact() {
        let g = grid(6);
        let x = Segment::from_fn(g, |t| t).unwrap();
        assert_eq!(x.evaluate(-0.5).unwrap()[0], -0.5);
        let v = x.evaluate(-0.55).unwrap()[0];
        assert!((v + 0.55).abs() < 1e-12);
    }

    #[test]
    fn right_endpoint_is_last_node() {
        let g = grid(4);
        let x = Segment::new(g, alloc::vec![0.3, -1.2, 4.0, 0.5, 7.25]).unwrap();
        assert_eq!(x.evaluate(0.0).unwrap(), [7.25]);
        assert!(x.evaluate(0.01).is_err());
        assert!(x.evaluate(-1.5).is_err());
    }

    #[test]
    fn roll_shifts_left() {
        let g = grid(2);
        let x = Segment::new(g, alloc::vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.roll(&[4.0]).values(), &[2.0, 3.0, 4.0]);
        let c = Segment::constant(g, 1.5);
        assert_eq!(c.roll(&[1.5]), c);
    }

    #[test]
    fn m_fold_roll_replaces_history() {
        let g = grid(3);
        let mut x = Segment::constant(g, 0.0);
        for v in [1.0, 2.0, 3.0, 4.0] {
            x.roll_in_place(&[v]);
        }
        assert_eq!(x.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(Segment::new(grid(1), alloc::vec![1.0, f64::NAN]).is_err());
        assert!(Segment::new(grid(1), alloc::vec![1.0]).is_err());
    }

    #[test]
    fn json_layout() {
        let g = GridSpec::with_delay(1.0, 2, 2, 1).unwrap();
        let x = Segment::new(g, alloc::vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert!(
            s.contains("\"values\":[[1.0,2.0],[3.0,4.0],[5.0,6.0]]"),
            "{s}"
        );
        let back: Segment = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }
}

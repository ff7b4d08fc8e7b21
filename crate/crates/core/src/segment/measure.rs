use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GridSpec, SegmentRef};
use crate::error::{Error, Result};

/// An n-tuple of finite signed measures on [−r, 0], stored as
/// atom at 0 + interior atoms + trapezoidal density.
///
/// `density` is either empty (no absolutely continuous part) or holds
/// `m + 1` node-major weights in Rⁿ that already include the trapezoid
/// factors, so the density part pairs as `h·Σ_j w_j·f(θ_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureWire", into = "MeasureWire")]
pub struct WindowMeasure {
    grid: GridSpec,
    atom0: Vec<f64>,
    atoms: Vec<(f64, Vec<f64>)>,
    density: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureWire {
    grid: GridSpec,
    atom0: Vec<f64>,
    #[serde(default)]
    atoms: Vec<(f64, Vec<f64>)>,
    #[serde(default)]
    density: Vec<Vec<f64>>,
}

impl WindowMeasure {
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            atom0: alloc::vec![0.0; grid.dim_n()],
            atoms: Vec::new(),
            density: Vec::new(),
        }
    }

    /// Point mass `mass ∈ Rⁿ` at θ.
    pub fn dirac(grid: GridSpec, theta: f64, mass: &[f64]) -> Result<Self> {
        let mut mu = Self::zero(grid);
        mu.add_atom(theta, mass, 1.0)?;
        Ok(mu)
    }

    /// Scalar Lebesgue measure restricted to `[from, 0]`, `from` on the grid.
    pub fn lebesgue(grid: GridSpec, from: f64) -> Result<Self> {
        let grid = grid.with_components(1);
        let (j0, w) = grid.locate(from)?;
        if w != 0.0 {
            return Err(Error::Domain(alloc::format!(
                "lower limit {from} is not a grid node"
            )));
        }
        let m = grid.past_points();
        let mut density = alloc::vec![0.0; m + 1];
        if j0 < m {
            for (j, d) in density.iter_mut().enumerate().skip(j0) {
                *d = if j == j0 || j == m { 0.5 } else { 1.0 };
            }
        }
        Ok(Self {
            grid,
            atom0: alloc::vec![0.0],
            atoms: Vec::new(),
            density,
        })
    }

    /// Absolutely continuous measure with density values `rho(θ_j)` (node-major
    /// Rⁿ values); trapezoid factors are applied here.
    pub fn from_density_values(grid: GridSpec, rho: &[f64]) -> Result<Self> {
        let n = grid.dim_n();
        let m = grid.past_points();
        if rho.len() != (m + 1) * n {
            return Err(Error::Config("density needs one Rⁿ value per node".into()));
        }
        let density = rho
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let j = i / n;
                if j == 0 || j == m {
                    0.5 * v
                } else {
                    *v
                }
            })
            .collect();
        Ok(Self {
            grid,
            atom0: alloc::vec![0.0; n],
            atoms: Vec::new(),
            density,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.grid.dim_n()
    }

    /// ∇₀: the mass at θ = 0.
    pub fn nabla0(&self) -> &[f64] {
        &self.atom0
    }

    pub fn interior_atoms(&self) -> &[(f64, Vec<f64>)] {
        &self.atoms
    }

    /// Trapezoid-weighted density, empty when there is no density part.
    pub fn density_weights(&self) -> &[f64] {
        &self.density
    }

    /// Adds `scale·mass` at θ; θ = 0 goes to the distinguished atom.
    pub fn add_atom(&mut self, theta: f64, mass: &[f64], scale: f64) -> Result<()> {
        let n = self.components();
        if mass.len() != n {
            return Err(Error::Config("atom mass has wrong dimension".into()));
        }
        let (j, w) = self.grid.locate(theta)?;
        let theta = if w == 0.0 { self.grid.theta(j) } else { theta };
        if w == 0.0 && j == self.grid.past_points() {
            for (a, b) in self.atom0.iter_mut().zip(mass) {
                *a += scale * b;
            }
            return Ok(());
        }
        if let Some((_, existing)) = self.atoms.iter_mut().find(|(t, _)| *t == theta) {
            for (a, b) in existing.iter_mut().zip(mass) {
                *a += scale * b;
            }
        } else {
            self.atoms
                .push((theta, mass.iter().map(|b| scale * b).collect()));
        }
        Ok(())
    }

    /// Adds `scale·w` to the trapezoid weight of component `c` at node `j`.
    pub fn add_density_weight(&mut self, j: usize, c: usize, w: f64) {
        let n = self.components();
        if self.density.is_empty() {
            self.density = alloc::vec![0.0; self.grid.nodes() * n];
        }
        self.density[j * n + c] += w;
    }

    /// `self += scale·other`.
    pub fn add_scaled(&mut self, other: &WindowMeasure, scale: f64) -> Result<()> {
        if !self.grid.same_nodes(&other.grid) || self.components() != other.components() {
            return Err(Error::Config(
                "cannot add measures on different grids".into(),
            ));
        }
        for (a, b) in self.atom0.iter_mut().zip(&other.atom0) {
            *a += scale * b;
        }
        for (theta, mass) in &other.atoms {
            self.add_atom(*theta, mass, scale)?;
        }
        if !other.density.is_empty() {
            if self.density.is_empty() {
                self.density = alloc::vec![0.0; other.density.len()];
            }
            for (a, b) in self.density.iter_mut().zip(&other.density) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.atom0.iter_mut().for_each(|a| *a *= scale);
        self.atoms
            .iter_mut()
            .flat_map(|(_, m)| m.iter_mut())
            .for_each(|a| *a *= scale);
        self.density.iter_mut().for_each(|a| *a *= scale);
        self
    }

    /// |atom₀|₁ + Σ|atoms|₁ + h·Σ|density|₁.
    pub fn total_variation(&self) -> f64 {
        let l1 = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>();
        l1(&self.atom0)
            + self.atoms.iter().map(|(_, m)| l1(m)).sum::<f64>()
            + self.grid.step() * l1(&self.density)
    }

    /// ⟨μ, f⟩ = Σ_k ∫ f_k dμ_k.
    pub fn pair(&self, f: SegmentRef<'_>) -> Result<f64> {
        if !self.grid.same_nodes(f.grid()) || self.components() != f.grid().dim_n() {
            return Err(Error::Config(
                "pairing a measure with a segment on another grid".into(),
            ));
        }
        Ok(self.pair_unchecked(f))
    }

    /// Pairing without the grid check; `f` must live on this measure's nodes.
    pub fn pair_unchecked(&self, f: SegmentRef<'_>) -> f64 {
        let n = self.components();
        let now = f.now();
        let mut acc: f64 = self.atom0.iter().zip(now).map(|(a, b)| a * b).sum();
        for (theta, mass) in &self.atoms {
            // atoms are stored at valid angles
            let (j, w) = self.grid.locate(*theta).unwrap_or((0, 0.0));
            for (c, a) in mass.iter().enumerate() {
                acc += a * f.blend(j, w, c);
            }
        }
        if !self.density.is_empty() {
            let vals = f.values();
            let dens: f64 = self.density.iter().zip(vals).map(|(a, b)| a * b).sum();
            acc += self.grid.step() * dens;
        }
        debug_assert_eq!(f.values().len(), self.grid.nodes() * n);
        acc
    }
}

impl TryFrom<MeasureWire> for WindowMeasure {
    type Error = Error;

    fn try_from(w: MeasureWire) -> Result<Self> {
        let n = w.grid.dim_n();
        if w.atom0.len() != n || w.atoms.iter().any(|(_, m)| m.len() != n) {
            return Err(Error::Config(alloc::format!(
                "measure masses must have {n} components"
            )));
        }
        if !w.density.is_empty()
            && (w.density.len() != w.grid.nodes() || w.density.iter().any(|d| d.len() != n))
        {
            return Err(Error::Config("density needs one Rⁿ weight per node".into()));
        }
        let mut mu = WindowMeasure {
            grid: w.grid,
            atom0: w.atom0,
            atoms: Vec::new(),
            density: w.density.into_iter().flatten().collect(),
        };
        for (theta, mass) in w.atoms {
            mu.add_atom(theta, &mass, 1.0)?;
        }
        Ok(mu)
    }
}

impl From<WindowMeasure> for MeasureWire {
    fn from(mu: WindowMeasure) -> Self {
        let n = mu.components();
        MeasureWire {
            grid: mu.grid,
            atom0: mu.atom0,
            atoms: mu.atoms,
            density: mu.density.chunks(n).map(|c| c.to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Segment;

    fn grid() -> GridSpec {
        GridSpec::with_delay(1.0, 4, 1, 1).unwrap()
    }

    #[test]
    fn lebesgue_pairs_constant_to_length() {
        let g = grid();
        let mu = WindowMeasure::lebesgue(g, -1.0).unwrap();
        let x = Segment::constant(g, 3.0);
        assert!((mu.pair(x.as_ref()).unwrap() - 3.0).abs() < 1e-14);
        assert!((mu.total_variation() - 1.0).abs() < 1e-14);
        assert_eq!(mu.nabla0(), &[0.0]);
        let half = WindowMeasure::lebesgue(g, -0.5).unwrap();
        assert!((half.pair(x.as_ref()).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn atoms_at_zero_are_distinguished() {
        let g = grid();
        let mu = WindowMeasure::dirac(g, 0.0, &[2.0]).unwrap();
        assert_eq!(mu.nabla0(), &[2.0]);
        assert!(mu.interior_atoms().is_empty());
        let nu = WindowMeasure::dirac(g, -0.5, &[1.0]).unwrap();
        assert_eq!(nu.nabla0(), &[0.0]);
        assert_eq!(nu.interior_atoms().len(), 1);
    }

    #[test]
    fn off_grid_atom_pairs_by_interpolation() {
        let g = grid();
        let x = Segment::from_fn(g, |t| t * t).unwrap();
        let mu = WindowMeasure::dirac(g, -0.6, &[1.0]).unwrap();
        let expect = x.evaluate(-0.6).unwrap()[0];
        assert!((mu.pair(x.as_ref()).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn add_scaled_merges_atoms() {
        let g = grid();
        let mut mu = WindowMeasure::dirac(g, -0.5, &[1.0]).unwrap();
        let nu = WindowMeasure::dirac(g, -0.5, &[2.0]).unwrap();
        mu.add_scaled(&nu, 0.5).unwrap();
        assert_eq!(mu.interior_atoms(), &[(-0.5, alloc::vec![2.0])]);
    }

    #[test]
    fn json_keys() {
        let g = grid();
        let mut mu = WindowMeasure::lebesgue(g, -1.0).unwrap();
        mu.add_atom(0.0, &[1.0], 1.0).unwrap();
        mu.add_atom(-0.25, &[-2.0], 1.0).unwrap();
        let s = serde_json::to_string(&mu).unwrap();
        for key in [
            "\"atom0\":[1.0]",
            "\"atoms\":[[-0.25,[-2.0]]]",
            "\"density\":[[0.5],[1.0]",
        ] {
            assert!(s.contains(key), "{s}");
        }
        let back: WindowMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mu);
    }
}

use alloc::{sync::Arc, vec::Vec};
use core::fmt;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{GridSpec, SegmentRef, WindowMeasure};
use crate::error::{Error, Result};

/// A differentiable map `R^k → R` supplied by the caller.
pub trait SmoothMap: Send + Sync {
    fn value(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64], out: &mut [f64]);
    /// `(m, K)` with `|g(z)| ≤ K(1+|z|)^{m+1}` and `|∇g(z)|₁ ≤ K(1+|z|)^m`.
    fn growth(&self) -> (u32, f64);
}

/// Outer maps used by the functional library.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "map")]
pub enum OuterMap {
    /// `a·z + c`.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `Π z_i`.
    Product,
    /// `scale·|z|²`.
    Quadratic {
        scale: f64,
    },
    /// `max(z₀ − K, 0)`; not differentiable at the strike.
    Call {
        strike: f64,
    },
    /// `ln(1 + e^{β(z₀ − K)}) / β`, the smooth call.
    Softplus {
        strike: f64,
        beta: f64,
    },
    Constant {
        value: f64,
    },
    #[serde(skip)]
    Custom(Arc<dyn SmoothMap>),
}

impl fmt::Debug for OuterMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { coeffs, offset } => write!(f, "Linear({coeffs:?}, {offset})"),
            Self::Product => f.write_str("Product"),
            Self::Quadratic { scale } => write!(f, "Quadratic({scale})"),
            Self::Call { strike } => write!(f, "Call({strike})"),
            Self::Softplus { strike, beta } => write!(f, "Softplus({strike}, {beta})"),
            Self::Constant { value } => write!(f, "Constant({value})"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl OuterMap {
    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            Self::Linear { coeffs, offset } => {
                coeffs.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + offset
            }
            Self::Product => z.iter().product(),
            Self::Quadratic { scale } => scale * z.iter().map(|v| v * v).sum::<f64>(),
            Self::Call { strike } => (z[0] - strike).max(0.0),
            Self::Softplus { strike, beta } => softplus(beta * (z[0] - strike)) / beta,
            Self::Constant { value } => *value,
            Self::Custom(g) => g.value(z),
        }
    }

    pub fn gradient(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            Self::Linear { coeffs, .. } => out.iter_mut().zip(coeffs).for_each(|(o, a)| *o = *a),
            Self::Product => {
                for i in 0..z.len() {
                    out[i] = z
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, v)| v)
                        .product();
                }
            }
            Self::Quadratic { scale } => out
                .iter_mut()
                .zip(z)
                .for_each(|(o, v)| *o = 2.0 * scale * v),
            Self::Call { strike } => out[0] = if z[0] > *strike { 1.0 } else { 0.0 },
            Self::Softplus { strike, beta } => out[0] = logistic(beta * (z[0] - strike)),
            Self::Constant { .. } => {}
            Self::Custom(g) => g.gradient(z, out),
        }
    }

    /// `(m, K)` for `k` inputs, same convention as [`SmoothMap::growth`].
    pub fn growth(&self, k: usize) -> (u32, f64) {
        match self {
            Self::Linear { coeffs, offset } => (
                0,
                coeffs.iter().map(|a| a.abs()).sum::<f64>() + offset.abs(),
            ),
            Self::Product => {
                let k = k.max(1);
                ((k - 1) as u32, k as f64)
            }
            Self::Quadratic { scale } => (1, 2.0 * scale.abs() * k.max(1) as f64),
            Self::Call { strike } => (0, 1.0 + strike.abs()),
            Self::Softplus { strike, beta } => {
                (0, 1.0 + strike.abs() + core::f64::consts::LN_2 / beta.abs())
            }
            Self::Constant { value } => (0, value.abs()),
            Self::Custom(g) => g.growth(),
        }
    }
}

/// Structural class of a functional on the segment space.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FunctionalKind {
    /// `g(x(θ₁), …, x(θ_k))` with `g: R^{k·n} → R`.
    Cylindrical { angles: Vec<f64>, outer: OuterMap },
    /// `∫ g(x(θ)) μ(dθ)` with a scalar measure μ and `g: Rⁿ → R`.
    WindowIntegral {
        measure: WindowMeasure,
        pointwise: OuterMap,
    },
    /// `h(φ₁(x), …, φ_k(x))`.
    Composite {
        outer: OuterMap,
        inner: Vec<SegmentFunctional>,
    },
}

/// A functional `φ: C([-r,0]; Rⁿ) → R` with a declared gradient and growth.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "FunctionalKind", into = "FunctionalKind")]
pub struct SegmentFunctional {
    pub kind: FunctionalKind,
    pub growth_exponent: u32,
    pub growth_constant: f64,
}

impl From<FunctionalKind> for SegmentFunctional {
    fn from(kind: FunctionalKind) -> Self {
        Self::new(kind)
    }
}

impl From<SegmentFunctional> for FunctionalKind {
    fn from(f: SegmentFunctional) -> Self {
        f.kind
    }
}

impl SegmentFunctional {
    /// Wraps `kind`, deriving growth constants from its parts.
    pub fn new(kind: FunctionalKind) -> Self {
        let (growth_exponent, growth_constant) = match &kind {
            FunctionalKind::Cylindrical { angles, outer } => outer.growth(angles.len()),
            FunctionalKind::WindowIntegral { measure, pointwise } => {
                let (m, k) = pointwise.growth(measure.components());
                (m, k * measure.total_variation())
            }
            FunctionalKind::Composite { outer, inner } => {
                let (mo, ko) = outer.growth(inner.len());
                let max_m = inner.iter().map(|f| f.growth_exponent).max().unwrap_or(0);
                let kin = inner
                    .iter()
                    .map(|f| f.growth_constant)
                    .fold(1.0_f64, f64::max);
                (
                    (max_m + 1) * (mo + 1) - 1,
                    ko * (1.0 + kin).powi(mo as i32 + 1),
                )
            }
        };
        Self {
            kind,
            growth_exponent,
            growth_constant,
        }
    }

    /// `x ↦ x(θ)` for scalar segments.
    pub fn point(theta: f64) -> Self {
        Self::new(FunctionalKind::Cylindrical {
            angles: alloc::vec![theta],
            outer: OuterMap::Linear {
                coeffs: alloc::vec![1.0],
                offset: 0.0,
            },
        })
    }

    /// `x ↦ x(0)`.
    pub fn current() -> Self {
        Self::point(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(FunctionalKind::Cylindrical {
            angles: Vec::new(),
            outer: OuterMap::Constant { value },
        })
    }

    /// `x ↦ g(x(θ₁), …, x(θ_k))`.
    pub fn cylindrical(angles: Vec<f64>, outer: OuterMap) -> Self {
        Self::new(FunctionalKind::Cylindrical { angles, outer })
    }

    /// `x ↦ ∫ g(x(θ)) μ(dθ)`.
    pub fn window_integral(measure: WindowMeasure, pointwise: OuterMap) -> Self {
        Self::new(FunctionalKind::WindowIntegral { measure, pointwise })
    }

    pub fn composite(outer: OuterMap, inner: Vec<SegmentFunctional>) -> Self {
        Self::new(FunctionalKind::Composite { outer, inner })
    }

    /// `(1/r)∫_{−r}^0 x(θ) dθ` for scalar segments.
    pub fn window_average(grid: &GridSpec) -> Self {
        let mu = WindowMeasure::lebesgue(*grid, -grid.delay())
            .expect("−r is a grid node")
            .scaled(1.0 / grid.delay());
        Self::window_integral(
            mu,
            OuterMap::Linear {
                coeffs: alloc::vec![1.0],
                offset: 0.0,
            },
        )
    }

    /// Overrides the derived growth constants.
    pub fn with_growth(mut self, exponent: u32, constant: f64) -> Self {
        self.growth_exponent = exponent;
        self.growth_constant = constant;
        self
    }

    pub fn eval(&self, x: SegmentRef<'_>) -> Result<f64> {
        match &self.kind {
            FunctionalKind::Cylindrical { angles, outer } => {
                let n = x.grid().dim_n();
                let mut z = Vec::with_capacity(angles.len() * n);
                for &theta in angles {
                    let (j, w) = x.grid().locate(theta)?;
                    z.extend((0..n).map(|c| x.blend(j, w, c)));
                }
                Ok(outer.value(&z))
            }
            FunctionalKind::WindowIntegral { measure, pointwise } => {
                check_scalar_measure(measure, x.grid())?;
                let n = x.grid().dim_n();
                let mut z = alloc::vec![0.0; n];
                let mut acc = 0.0;
                let a0 = measure.nabla0()[0];
                if a0 != 0.0 {
                    acc += a0 * pointwise.value(x.now());
                }
                for (theta, mass) in measure.interior_atoms() {
                    let (j, w) = x.grid().locate(*theta)?;
                    z.iter_mut()
                        .enumerate()
                        .for_each(|(c, v)| *v = x.blend(j, w, c));
                    acc += mass[0] * pointwise.value(&z);
                }
                let dens = measure.density_weights();
                if !dens.is_empty() {
                    let h = x.grid().step();
                    for (j, wj) in dens.iter().enumerate() {
                        if *wj != 0.0 {
                            acc += h * wj * pointwise.value(&x.values()[j * n..(j + 1) * n]);
                        }
                    }
                }
                Ok(acc)
            }
            FunctionalKind::Composite { outer, inner } => {
                let z = inner
                    .iter()
                    .map(|f| f.eval(x))
                    .collect::<Result<Vec<_>>>()?;
                Ok(outer.value(&z))
            }
        }
    }

    /// Gâteaux gradient at `x`, as a measure on x's grid.
    pub fn gradient(&self, x: SegmentRef<'_>) -> Result<WindowMeasure> {
        let grid = *x.grid();
        let n = grid.dim_n();
        let mut mu = WindowMeasure::zero(grid);
        match &self.kind {
            FunctionalKind::Cylindrical { angles, outer } => {
                let mut z = Vec::with_capacity(angles.len() * n);
                let mut loc = Vec::with_capacity(angles.len());
                for &theta in angles {
                    let (j, w) = grid.locate(theta)?;
                    loc.push((j, w));
                    z.extend((0..n).map(|c| x.blend(j, w, c)));
                }
                let mut g = alloc::vec![0.0; z.len()];
                outer.gradient(&z, &mut g);
                for (i, (j, w)) in loc.into_iter().enumerate() {
                    let gi = &g[i * n..(i + 1) * n];
                    mu.add_atom(grid.theta(j), gi, 1.0 - w)?;
                    if w != 0.0 {
                        mu.add_atom(grid.theta(j + 1), gi, w)?;
                    }
                }
            }
            FunctionalKind::WindowIntegral { measure, pointwise } => {
                check_scalar_measure(measure, &grid)?;
                let mut z = alloc::vec![0.0; n];
                let mut g = alloc::vec![0.0; n];
                let a0 = measure.nabla0()[0];
                if a0 != 0.0 {
                    pointwise.gradient(x.now(), &mut g);
                    mu.add_atom(0.0, &g, a0)?;
                }
                for (theta, mass) in measure.interior_atoms() {
                    let (j, w) = grid.locate(*theta)?;
                    z.iter_mut()
                        .enumerate()
                        .for_each(|(c, v)| *v = x.blend(j, w, c));
                    pointwise.gradient(&z, &mut g);
                    mu.add_atom(grid.theta(j), &g, mass[0] * (1.0 - w))?;
                    if w != 0.0 {
                        mu.add_atom(grid.theta(j + 1), &g, mass[0] * w)?;
                    }
                }
                for (j, wj) in measure.density_weights().iter().enumerate() {
                    if *wj != 0.0 {
                        pointwise.gradient(&x.values()[j * n..(j + 1) * n], &mut g);
                        for (c, gc) in g.iter().enumerate() {
                            mu.add_density_weight(j, c, wj * gc);
                        }
                    }
                }
            }
            FunctionalKind::Composite { outer, inner } => {
                let z = inner
                    .iter()
                    .map(|f| f.eval(x))
                    .collect::<Result<Vec<_>>>()?;
                let mut g = alloc::vec![0.0; z.len()];
                outer.gradient(&z, &mut g);
                for (f, gi) in inner.iter().zip(&g) {
                    if *gi != 0.0 {
                        mu.add_scaled(&f.gradient(x)?, *gi)?;
                    }
                }
            }
        }
        Ok(mu)
    }
}

fn check_scalar_measure(measure: &WindowMeasure, grid: &GridSpec) -> Result<()> {
    if measure.components() != 1 || !measure.grid().same_nodes(grid) {
        return Err(Error::Config(
            "window-integral functionals need a scalar measure on the segment's nodes".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Segment;

    fn grid() -> GridSpec {
        GridSpec::with_delay(1.0, 10, 1, 1).unwrap()
    }

    #[test]
    fn point_evaluation_at_zero() {
        let g = grid();
        let x = Segment::from_fn(g, |t| 1.0 + t * t).unwrap();
        let f = SegmentFunctional::current();
        assert_eq!(f.eval(x.as_ref()).unwrap(), 1.0);
        let grad = f.gradient(x.as_ref()).unwrap();
        assert_eq!(grad.nabla0(), &[1.0]);
        assert!(grad.interior_atoms().is_empty());
    }

    #[test]
    fn lebesgue_integral_of_constant() {
        let g = grid();
        let mu = WindowMeasure::lebesgue(g, -1.0).unwrap();
        let f = SegmentFunctional::window_integral(
            mu,
            OuterMap::Linear {
                coeffs: alloc::vec![1.0],
                offset: 0.0,
            },
        );
        let x = Segment::constant(g, 2.0);
        assert!((f.eval(x.as_ref()).unwrap() - 2.0 * g.delay()).abs() < 1e-14);
        assert_eq!(f.gradient(x.as_ref()).unwrap().nabla0(), &[0.0]);
    }

    #[test]
    fn unit_atom_at_minus_r_of_square() {
        let g = grid();
        let mu = WindowMeasure::dirac(g, -1.0, &[1.0]).unwrap();
        let f = SegmentFunctional::window_integral(mu, OuterMap::Quadratic { scale: 1.0 });
        let x = Segment::from_fn(g, |t| t).unwrap();
        assert_eq!(f.eval(x.as_ref()).unwrap(), 1.0);
    }

    #[test]
    fn square_of_current_directional_derivative() {
        // d/dε (x(0) + ε k(0))² at x(0) = 3, k(0) = 1 is 6; frozen from a
        // central difference with ε = 1e-5.
        let g = grid();
        let f =
            SegmentFunctional::cylindrical(alloc::vec![0.0], OuterMap::Quadratic { scale: 1.0 });
        let x = Segment::from_fn(g, |t| 3.0 + t).unwrap();
        let k = Segment::from_fn(g, |t| 1.0 + 5.0 * t).unwrap();
        let eps = 1e-5;
        let fd = (f.eval(x.perturbed(&k, eps).unwrap().as_ref()).unwrap()
            - f.eval(x.perturbed(&k, -eps).unwrap().as_ref()).unwrap())
            / (2.0 * eps);
        assert!((fd - 6.0).abs() < 1e-8);
        let grad = f.gradient(x.as_ref()).unwrap();
        assert!((grad.pair(k.as_ref()).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn composite_chain_rule() {
        let g = grid();
        let avg = SegmentFunctional::window_average(&g);
        let f = SegmentFunctional::composite(
            OuterMap::Product,
            alloc::vec![SegmentFunctional::current(), avg.clone()],
        );
        let x = Segment::from_fn(g, |t| 2.0 + t).unwrap();
        let a = avg.eval(x.as_ref()).unwrap();
        assert!((a - 1.5).abs() < 1e-12);
        assert!((f.eval(x.as_ref()).unwrap() - 3.0).abs() < 1e-12);
        let grad = f.gradient(x.as_ref()).unwrap();
        assert!((grad.nabla0()[0] - a).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_behaviour() {
        let g = grid();
        let f = SegmentFunctional::composite(
            OuterMap::Softplus {
                strike: 1.0,
                beta: 50.0,
            },
            alloc::vec![SegmentFunctional::window_average(&g)],
        );
        let s = serde_json::to_string(&f).unwrap();
        let back: SegmentFunctional = serde_json::from_str(&s).unwrap();
        let x = Segment::from_fn(g, |t| 1.0 + 0.3 * t).unwrap();
        assert_eq!(f.eval(x.as_ref()).unwrap(), back.eval(x.as_ref()).unwrap());
        assert_eq!(back.growth_exponent, f.growth_exponent);
    }
}

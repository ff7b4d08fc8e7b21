use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{GridSpec, SegmentRef};
use crate::stats::quantile;

/// A scalar feature of the segment from which the regression basis is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// `x_c(θ)`.
    Lag {
        theta: f64,
        #[serde(default)]
        component: usize,
    },
    /// Trapezoidal mean of `x_c` over the window.
    WindowMean {
        #[serde(default)]
        component: usize,
    },
}

impl Primitive {
    pub fn eval(&self, x: SegmentRef<'_>) -> f64 {
        match *self {
            Primitive::Lag { theta, component } => {
                x.component_at(theta, component).unwrap_or(f64::NAN)
            }
            Primitive::WindowMean { component } => x.window_mean(component),
        }
    }

    fn label(&self) -> String {
        match self {
            Primitive::Lag { theta, component } => alloc::format!("x{component}({theta})"),
            Primitive::WindowMean { component } => alloc::format!("mean(x{component})"),
        }
    }
}

/// Piecewise-linear features `max(p − κ_i, 0)` of primitive `primitive`, with
/// knots `κ_i` placed at evenly spaced empirical quantiles at every step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeSpec {
    pub primitive: usize,
    pub knots: usize,
}

/// Feature map for the conditional expectations: a constant, the primitives,
/// optionally all their pairwise products (squares included) and hinges.
///
/// The default for scalar segments is `1, x(0), x(−r/2), x(−r), mean(x)` and
/// the ten products, fifteen features in all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub primitives: Vec<Primitive>,
    #[serde(default = "yes")]
    pub products: bool,
    #[serde(default)]
    pub hinges: Vec<HingeSpec>,
    /// Ridge scale: `λ = ridge · trace(G)/p` on the standardised design.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn yes() -> bool {
    true
}

fn default_ridge() -> f64 {
    1e-8
}

impl RegressionBasis {
    pub fn standard(grid: &GridSpec) -> Self {
        let r = grid.delay();
        let primitives = (0..grid.dim_n())
            .flat_map(|c| {
                [
                    Primitive::Lag {
                        theta: 0.0,
                        component: c,
                    },
                    Primitive::Lag {
                        theta: -0.5 * r,
                        component: c,
                    },
                    Primitive::Lag {
                        theta: -r,
                        component: c,
                    },
                    Primitive::WindowMean { component: c },
                ]
            })
            .collect();
        Self {
            primitives,
            products: true,
            hinges: Vec::new(),
            ridge: default_ridge(),
        }
    }

    /// Polynomial basis of degree 2 in the current value only.
    pub fn current_value(dim_n: usize) -> Self {
        let primitives = (0..dim_n)
            .map(|c| Primitive::Lag {
                theta: 0.0,
                component: c,
            })
            .collect();
        Self {
            primitives,
            products: true,
            hinges: Vec::new(),
            ridge: default_ridge(),
        }
    }

    pub fn with_hinges(mut self, primitive: usize, knots: usize) -> Self {
        self.hinges.push(HingeSpec { primitive, knots });
        self
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        for p in &self.primitives {
            let c = match *p {
                Primitive::Lag { theta, component } => {
                    grid.locate(theta)?;
                    component
                }
                Primitive::WindowMean { component } => component,
            };
            if c >= grid.dim_n() {
                return Err(Error::Config(alloc::format!(
                    "basis component {c} out of range"
                )));
            }
        }
        if let Some(h) = self
            .hinges
            .iter()
            .find(|h| h.primitive >= self.primitives.len())
        {
            return Err(Error::Config(alloc::format!(
                "hinge refers to missing primitive {}",
                h.primitive
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge scale must be nonnegative".into()));
        }
        Ok(())
    }

    fn products_len(&self) -> usize {
        let q = self.primitives.len();
        if self.products {
            q * (q + 1) / 2
        } else {
            0
        }
    }

    /// Number of raw features, the constant included.
    pub fn len(&self) -> usize {
        1 + self.primitives.len()
            + self.products_len()
            + self.hinges.iter().map(|h| h.knots).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = alloc::vec![String::from("1")];
        out.extend(self.primitives.iter().map(Primitive::label));
        if self.products {
            for i in 0..self.primitives.len() {
                for j in i..self.primitives.len() {
                    out.push(alloc::format!(
                        "{}*{}",
                        self.primitives[i].label(),
                        self.primitives[j].label()
                    ));
                }
            }
        }
        for h in &self.hinges {
            for i in 0..h.knots {
                out.push(alloc::format!(
                    "hinge{i}({})",
                    self.primitives[h.primitive].label()
                ));
            }
        }
        out
    }

    pub(crate) fn primitives_into(&self, x: SegmentRef<'_>, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.primitives) {
            *o = p.eval(x);
        }
    }

    /// Knots for every hinge spec from the primitive values of all paths
    /// (`prims` is `paths × q`, row-major).
    pub(crate) fn knots(&self, prims: &[f64]) -> Vec<Vec<f64>> {
        let q = self.primitives.len();
        self.hinges
            .iter()
            .map(|h| {
                let mut v: Vec<f64> = prims
                    .chunks(q)
                    .map(|row| row[h.primitive])
                    .filter(|v| v.is_finite())
                    .collect();
                v.sort_by(f64::total_cmp);
                (1..=h.knots)
                    .map(|i| quantile(&v, i as f64 / (h.knots + 1) as f64))
                    .collect()
            })
            .collect()
    }

    /// Full raw feature vector from the primitive values and the knots.
    pub(crate) fn expand(&self, prims: &[f64], knots: &[Vec<f64>], out: &mut [f64]) {
        let q = self.primitives.len();
        out[0] = 1.0;
        out[1..1 + q].copy_from_slice(prims);
        let mut i = 1 + q;
        if self.products {
            for a in 0..q {
                for b in a..q {
                    out[i] = prims[a] * prims[b];
                    i += 1;
                }
            }
        }
        for (h, ks) in self.hinges.iter().zip(knots) {
            for k in ks {
                out[i] = (prims[h.primitive] - k).max(0.0);
                i += 1;
            }
        }
    }
}

//! The segment space `C([-r, 0]; Rⁿ)` on a uniform grid, its dual objects
//! (measures housing gradients and ∇₀) and functionals on it.

mod functional;
mod grid;
mod measure;
mod values;

pub use functional::{FunctionalKind, OuterMap, SegmentFunctional, SmoothMap};
pub use grid::{GridConfig, GridSpec, GRID_COUPLING_TOL};
pub use measure::WindowMeasure;
pub use values::{Segment, SegmentRef};

use serde::{Deserialize, Serialize};

use crate::segment::SegmentRef;

/// The nonlinearity `ψ(t, x, y, z)` of `dY = ψ dt + Z dW`.
pub trait Driver: Send + Sync {
    fn value(&self, t: f64, x: SegmentRef<'_>, y: f64, z: &[f64]) -> f64;

    fn lipschitz_y(&self) -> f64;

    fn lipschitz_z(&self) -> f64;

    /// `(m, K)` with `|ψ(t, x, 0, 0)| ≤ K(1 + |x|)^m`.
    fn growth(&self) -> (u32, f64) {
        (0, 0.0)
    }
}

/// `ψ ≡ 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroDriver;

impl Driver for ZeroDriver {
    fn value(&self, _t: f64, _x: SegmentRef<'_>, _y: f64, _z: &[f64]) -> f64 {
        0.0
    }

    fn lipschitz_y(&self) -> f64 {
        0.0
    }

    fn lipschitz_z(&self) -> f64 {
        0.0
    }
}

/// `ψ(t, x, y, z) = rate · y`: discounting at a constant rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDriver {
    pub rate: f64,
}

impl Driver for LinearDriver {
    fn value(&self, _t: f64, _x: SegmentRef<'_>, y: f64, _z: &[f64]) -> f64 {
        self.rate * y
    }

    fn lipschitz_y(&self) -> f64 {
        self.rate.abs()
    }

    fn lipschitz_z(&self) -> f64 {
        0.0
    }
}

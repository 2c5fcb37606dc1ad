//! Scalar abstraction.
//!
//! Every numeric routine in the crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Spectral decompositions come from
//! `nalgebra`, so the bound includes its `RealField`; conversions and
//! constants come from `num-traits`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{Complex, RealField};
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the simulator.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + Display + Debug + LowerExp {
    /// Numerical tolerance used for structural checks (Hermiticity,
    /// normalization) when the caller does not supply one.
    fn tolerance() -> Self;

    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Real for f32 {
    fn tolerance() -> Self {
        1e-4
    }
}

impl Real for f64 {
    fn tolerance() -> Self {
        1e-10
    }
}

/// Complex amplitude over a [`Real`] scalar.
pub type Cx<T> = Complex<T>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn re<T: Real>(re: T) -> Cx<T> {
    Complex::new(re, T::zero())
}

/// `e^{i phi}`
#[inline]
pub fn phase<T: Real>(phi: T) -> Cx<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// Reduces an angle into `[0, 2pi)`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::two_pi();
    let mut r = theta % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_lands_in_range() {
        let two_pi = std::f64::consts::TAU;
        for x in [-7.0, -two_pi, 0.0, 1.0, two_pi, 13.0] {
            let w = wrap_angle(x);
            assert!((0.0..two_pi).contains(&w), "{x} -> {w}");
            assert!(((x - w) / two_pi - ((x - w) / two_pi).round()).abs() < 1e-12);
        }
        assert!(wrap_angle(-1e-20_f32) < std::f32::consts::TAU);
    }
}

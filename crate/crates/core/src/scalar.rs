//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the kinematic, static and workspace code.
///
/// The tolerance constants are expressed in the working units (metres,
/// radians) and are sized to the precision of the concrete type.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Discriminants in `(-DISC_CLAMP, 0]` are treated as double roots.
    const DISC_CLAMP: f64;
    /// Margin kept from the torus boundary before attempting inverse kinematics.
    const INTERIOR_MARGIN: f64;
    /// Scale-relative threshold for reporting singular 3x3 matrices.
    const SINGULAR_EPS: f64;

    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const DISC_CLAMP: f64 = 1e-12;
    const INTERIOR_MARGIN: f64 = 1e-9;
    const SINGULAR_EPS: f64 = 1e-12;
}

impl Scalar for f32 {
    const DISC_CLAMP: f64 = 1e-5;
    const INTERIOR_MARGIN: f64 = 1e-4;
    const SINGULAR_EPS: f64 = 1e-5;
}

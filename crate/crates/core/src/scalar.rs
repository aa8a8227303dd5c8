use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the solver is generic over: `f32` or `f64`.
///
/// All tolerances in the crate are written as `f64` literals and converted
/// through [`Real::lit`]. Tolerances that would sit below the working
/// precision of the type are lifted with [`Real::tol`].
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(v, 64 eps)`.
    fn tol(v: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(64.0);
        Self::lit(v).max(floor)
    }

    fn from_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

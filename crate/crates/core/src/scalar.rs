use std::fmt::{Debug, Display};

use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used by the simulator and the concurrent model.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn from_rational(r: &BigRational) -> Self {
        Self::from_f64(r.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(Self::nan)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

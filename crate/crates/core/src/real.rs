use num_traits::{Float, FloatConst, FromPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Scalar type used throughout the geometry and map layers.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal out of range")
    }

    #[inline]
    fn tau() -> Self {
        Self::TAU()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac<T: Real>(x: T) -> T {
    let f = x - x.floor();
    if f >= T::one() {
        T::zero()
    } else {
        f
    }
}

/// Signed representative of `d` modulo 1 in `[-1/2, 1/2]`.
#[inline]
pub fn wrap_signed<T: Real>(d: T) -> T {
    d - d.round()
}

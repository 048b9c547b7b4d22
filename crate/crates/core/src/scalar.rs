//! Floating-point abstraction shared by every model in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for prices ($/kWh), quantities (kWh) and money ($).
///
/// Implemented for `f32` and `f64`. Numerical tolerances are written as `f64`
/// literals and pulled through [`Scalar::tolerance`], which never returns
/// anything tighter than a small multiple of the type's machine epsilon.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// A requested absolute tolerance, floored at `1000 * epsilon`.
    fn tolerance(requested: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(1000.0);
        Self::lit(requested).max(floor)
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum in iteration order. Kept separate from `Iterator::sum` so that the
/// reduction order is explicit wherever results must be reproducible.
pub(crate) fn ordered_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

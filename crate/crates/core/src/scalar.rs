use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric modules are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an integer token count.
    fn from_count(c: u64) -> Self {
        Self::from_u64(c).expect("every u64 is representable as a float")
    }

    /// Lossy conversion from an `f64` literal or parameter.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a count vector to scalars.
pub fn counts_as<F: Scalar>(counts: &[u64]) -> Vec<F> {
    counts.iter().map(|&c| F::from_count(c)).collect()
}

//! Scalar abstraction for the floating-point parts of the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the cost model and layout scores.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from a byte or block count.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("u64 is representable in every float type")
    }

    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every float type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

//! Scalar abstraction: all geometry and optimization code is generic over
//! [`Real`], instantiated at `f32` or `f64` (see the aliases at the crate root).

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64` for constants and tolerances.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }

    /// Widening (f32) or identity (f64) conversion, for logging and metrics.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the relaxation kernels are generic over.
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lower clamp applied to probabilities before taking logarithms.
    const PROB_FLOOR: Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl Scalar for f64 {
    const PROB_FLOOR: Self = 1e-12;
}

// 1 - 1e-12 rounds to 1 in single precision, so the floor has to sit above
// the unit roundoff.
impl Scalar for f32 {
    const PROB_FLOOR: Self = 1e-7;
}

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar accepted by the geometric kernels.
pub trait Real: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn idx(i: usize) -> Self {
        Self::from_usize(i).expect("index not representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

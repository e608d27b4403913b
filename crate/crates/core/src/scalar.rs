use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Scalar type the geometry and flow code is generic over.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
}

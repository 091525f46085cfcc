//! Floating point abstraction shared by every numeric module.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the toolkit is generic over: `f32` or `f64`.
///
/// Math goes through [`RealField`] so the same bound also drives the
/// `nalgebra` decompositions used by the pixel fusion solver.
pub trait Scalar:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::lit(v as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_tie() {
        assert_eq!(argmax(&[1.0f64, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax::<f32>(&[]), None);
    }

    #[test]
    fn literals_round_trip() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(0.25f64.as_f64(), 0.25);
    }
}

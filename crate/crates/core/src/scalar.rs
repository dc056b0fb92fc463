//! Scalar abstraction shared by the analytic models.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the optical and signal-integrity models are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion back to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used to absorb representation error in floor/ceil decisions.
    fn rounding_slack() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts decibels to a linear power ratio.
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db<T: Scalar>(ratio: T) -> T {
    T::lit(10.0) * ratio.log10()
}

/// `floor(num / den)` that does not lose a step to representation error
/// (e.g. `0.99 / 0.33`).
pub(crate) fn floor_ratio<T: Scalar>(num: T, den: T) -> u64 {
    let q = num / den;
    let q = (q + q.abs().max(T::one()) * T::rounding_slack()).floor();
    q.to_u64().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for db in [-20.0, -3.0, 0.0, 0.26, 15.2] {
            let back: f64 = linear_to_db(db_to_linear(db));
            assert!((back - db).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_ratio_absorbs_representation_error() {
        assert_eq!(floor_ratio(0.99_f64, 0.33), 3);
        assert_eq!(floor_ratio(0.33_f32, 0.33), 1);
        assert_eq!(floor_ratio(15.2_f64, 0.33), 46);
        assert_eq!(floor_ratio(0.26_f64, 0.33), 0);
    }
}

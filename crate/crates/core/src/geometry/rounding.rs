//! Outward conversion of double-precision coordinates to single precision.

use super::GeometryError;

/// Largest `f32` that is `<= x` when compared at double precision.
///
/// Rounds to nearest first and steps one representable value toward
/// negative infinity when the nearest value landed above `x`.
pub fn round_down_reduced(x: f64) -> Result<f32, GeometryError> {
    if !x.is_finite() {
        return Err(GeometryError::NonFinite(x));
    }
    Ok(f32_below(x))
}

/// Smallest `f32` that is `>= x` when compared at double precision.
pub fn round_up_reduced(x: f64) -> Result<f32, GeometryError> {
    if !x.is_finite() {
        return Err(GeometryError::NonFinite(x));
    }
    Ok(f32_above(x))
}

#[inline]
pub(crate) fn f32_below(x: f64) -> f32 {
    let r = x as f32;
    if f64::from(r) > x {
        r.next_down()
    } else {
        r
    }
}

#[inline]
pub(crate) fn f32_above(x: f64) -> f32 {
    let r = x as f32;
    if f64::from(r) < x {
        r.next_up()
    } else {
        r
    }
}

//! Closed `f64` intervals with outward rounding.
//!
//! The FPU stays in round-to-nearest. Each endpoint result is corrected with
//! the exact rounding error of the operation (TwoSum for sums, Dekker's
//! product for products): when the error shows the rounded value landed on
//! the wrong side, the endpoint steps one ulp outward. Exact operations
//! therefore stay exact.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
pub(crate) fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_infinite() {
        return if s > 0.0 { f64::MAX } else { s };
    }
    if e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_infinite() {
        return if s < 0.0 { f64::MIN } else { s };
    }
    if e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = SPLITTER * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

/// `a * b` rounded to nearest plus the sign of its rounding error, or `None`
/// when the product is outside the range where Dekker's error term is exact.
#[inline]
fn product_error_sign(a: f64, b: f64) -> (f64, Option<f64>) {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return (p, Some(0.0));
    }
    let (fa, fb, fp) = (a.abs(), b.abs(), p.abs());
    if !(1e-290..=1e290).contains(&fp) || fa > 1e290 || fb > 1e290 {
        return (p, None);
    }
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, Some(e))
}

#[inline]
pub(crate) fn mul_down(a: f64, b: f64) -> f64 {
    match product_error_sign(a, b) {
        (p, Some(e)) if e >= 0.0 => p,
        (p, _) if p == f64::INFINITY => f64::MAX,
        (p, _) => p.next_down(),
    }
}

#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    match product_error_sign(a, b) {
        (p, Some(e)) if e <= 0.0 => p,
        (p, _) if p == f64::NEG_INFINITY => f64::MIN,
        (p, _) => p.next_up(),
    }
}

// Inherent methods rather than operator traits: every result is rounded
// outward, which should stay visible at the call site.
#[allow(clippy::should_implement_trait)]
impl Interval {
    #[inline]
    pub const fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    #[inline]
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "[{lo}, {hi}]");
        Self { lo, hi }
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Self { lo: add_down(self.lo, o.lo), hi: add_up(self.hi, o.hi) }
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Self { lo: add_down(self.lo, -o.hi), hi: add_up(self.hi, -o.lo) }
    }

    /// Product with an exact scalar.
    #[inline]
    pub fn scale(self, s: f64) -> Self {
        if s >= 0.0 {
            Self { lo: mul_down(self.lo, s), hi: mul_up(self.hi, s) }
        } else {
            Self { lo: mul_down(self.hi, s), hi: mul_up(self.lo, s) }
        }
    }

    pub fn mul(self, o: Self) -> Self {
        let pairs = [(self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi)];
        let lo = pairs.iter().map(|&(a, b)| mul_down(a, b)).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|&(a, b)| mul_up(a, b)).fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi }
    }

    #[inline]
    pub fn hull(self, o: Self) -> Self {
        Self { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    #[inline]
    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    #[inline]
    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::FromPrimitive;
    use proptest::prelude::*;

    fn exact(x: f64) -> BigRational {
        BigRational::from_f64(x).unwrap()
    }

    fn encloses(i: Interval, v: &BigRational) -> bool {
        exact(i.lo) <= *v && *v <= exact(i.hi)
    }

    #[test]
    fn exact_operations_stay_points() {
        let a = Interval::point(0.5).add(Interval::point(0.25));
        assert_eq!(a, Interval::point(0.75));
        assert_eq!(Interval::point(3.0).scale(-2.0), Interval::point(-6.0));
        assert_eq!(Interval::point(0.0).scale(1e-300), Interval::point(0.0));
    }

    #[test]
    fn inexact_sum_brackets_value() {
        let s = Interval::point(0.1).add(Interval::point(0.2));
        let v = exact(0.1) + exact(0.2);
        assert!(encloses(s, &v));
        assert!(s.lo < s.hi);
        assert_eq!(s.hi, s.lo.next_up());
    }

    #[test]
    fn underflowing_product_is_widened() {
        let p = Interval::point(1e-200).scale(1e-200);
        assert!(p.lo <= 0.0);
        assert!(p.hi > 0.0);
    }

    proptest! {
        #[test]
        fn ops_enclose_exact_results(a in -1e6f64..1e6, b in -1e6f64..1e6, c in -1e3f64..1e3, d in -1e3f64..1e3) {
            let (x, y) = (Interval::new(a.min(b), a.max(b)), Interval::new(c.min(d), c.max(d)));
            for (u, v) in [(x.lo, y.lo), (x.lo, y.hi), (x.hi, y.lo), (x.hi, y.hi)] {
                prop_assert!(encloses(x.add(y), &(exact(u) + exact(v))));
                prop_assert!(encloses(x.sub(y), &(exact(u) - exact(v))));
                prop_assert!(encloses(x.mul(y), &(exact(u) * exact(v))));
                prop_assert!(encloses(x.scale(c), &(exact(u) * exact(c))));
            }
        }

        #[test]
        fn directed_products_are_tight(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let v = exact(a) * exact(b);
            let (lo, hi) = (mul_down(a, b), mul_up(a, b));
            prop_assert!(exact(lo) <= v && v <= exact(hi));
            prop_assert!(hi == lo || hi == lo.next_up());
        }
    }
}

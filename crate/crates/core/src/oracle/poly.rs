//! Exact univariate polynomials over the rationals, with Sturm-sequence root
//! isolation on dyadic points.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Coefficients from the constant term upward, without trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatPoly(pub Vec<BigRational>);

impl RatPoly {
    pub fn new(mut c: Vec<BigRational>) -> Self {
        while c.last().is_some_and(Zero::is_zero) {
            c.pop();
        }
        Self(c)
    }

    pub fn constant(c: BigRational) -> Self {
        Self::new(vec![c])
    }

    /// `a + b t`.
    pub fn linear(a: BigRational, b: BigRational) -> Self {
        Self::new(vec![a, b])
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree, with the zero polynomial reported as `None`.
    pub fn degree(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    fn lead(&self) -> &BigRational {
        self.0.last().expect("non-zero polynomial")
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigRational::zero();
        Self::new((0..n).map(|i| self.0.get(i).unwrap_or(&z) + o.0.get(i).unwrap_or(&z)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigRational::zero();
        Self::new((0..n).map(|i| self.0.get(i).unwrap_or(&z) - o.0.get(i).unwrap_or(&z)).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self(Vec::new());
        }
        let mut c = vec![BigRational::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
                .collect(),
        )
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.0.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    /// Quotient and remainder of long division by a non-zero divisor.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        let dd = d.degree().expect("division by zero polynomial");
        let mut rem = self.0.clone();
        if rem.len() <= dd {
            return (Self(Vec::new()), self.clone());
        }
        let mut quot = vec![BigRational::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let coef = &rem[k + dd] / d.lead();
            for (j, dc) in d.0.iter().enumerate() {
                rem[k + j] -= &coef * dc;
            }
            quot[k] = coef;
        }
        rem.truncate(dd);
        (Self::new(quot), Self::new(rem))
    }

    pub fn monic(&self) -> Self {
        let l = self.lead().clone();
        Self(self.0.iter().map(|c| c / &l).collect())
    }

    pub fn gcd(&self, o: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        if a.is_zero() {
            a
        } else {
            a.monic()
        }
    }

    /// Same distinct roots, all simple.
    pub fn square_free(&self) -> Self {
        let g = self.gcd(&self.derivative());
        if g.degree().unwrap_or(0) == 0 {
            self.clone()
        } else {
            self.div_rem(&g).0
        }
    }

    /// Coefficients of `s -> p(x + s)`.
    pub fn taylor_shift(&self, x: &BigRational) -> Vec<BigRational> {
        let mut c = self.0.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let t = &c[j + 1] * x;
                c[j] += t;
            }
        }
        c
    }

    /// Enclosure of `{p(t) : t in [lo, lo + w]}`.
    pub fn range(&self, lo: &BigRational, w: &BigRational) -> (BigRational, BigRational) {
        let b = self.taylor_shift(lo);
        let Some((b0, rest)) = b.split_first() else {
            return (BigRational::zero(), BigRational::zero());
        };
        let (mut min, mut max) = (b0.clone(), b0.clone());
        let mut wp = BigRational::one();
        for c in rest {
            wp = &wp * w;
            let term = c * &wp;
            if term.is_negative() {
                min += term;
            } else {
                max += term;
            }
        }
        (min, max)
    }

    /// Positive multiple with coprime integer coefficients.
    pub fn to_int(&self) -> IntPoly {
        let lcm = self.0.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let ints: Vec<BigInt> = self.0.iter().map(|c| c.numer() * (&lcm / c.denom())).collect();
        let content = ints.iter().fold(BigInt::zero(), |acc, c| acc.gcd(c));
        if content.is_zero() {
            return IntPoly(ints);
        }
        IntPoly(ints.into_iter().map(|c| c / &content).collect())
    }
}

/// `k / 2^e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    pub k: BigInt,
    pub e: u32,
}

impl Dyadic {
    pub fn new(k: BigInt, e: u32) -> Self {
        Self { k, e }
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.k.clone(), BigInt::one() << self.e)
    }

    /// Midpoint of `[a, b]`.
    pub fn midpoint(a: &Self, b: &Self) -> Self {
        let e = a.e.max(b.e) + 1;
        let ka = &a.k << (e - a.e);
        let kb = &b.k << (e - b.e);
        Self::new((ka + kb) >> 1u32, e)
    }
}

/// Integer coefficients from the constant term upward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPoly(pub Vec<BigInt>);

impl IntPoly {
    pub fn new(mut c: Vec<BigInt>) -> Self {
        while c.last().is_some_and(Zero::is_zero) {
            c.pop();
        }
        Self(c)
    }

    /// `a + b t`.
    pub fn linear(a: BigInt, b: BigInt) -> Self {
        Self::new(vec![a, b])
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigInt::zero();
        Self::new((0..n).map(|i| self.0.get(i).unwrap_or(&z) + o.0.get(i).unwrap_or(&z)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigInt::zero();
        Self::new((0..n).map(|i| self.0.get(i).unwrap_or(&z) - o.0.get(i).unwrap_or(&z)).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self(Vec::new());
        }
        let mut c = vec![BigInt::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Self::new(c)
    }

    pub fn to_rat(&self) -> RatPoly {
        RatPoly::new(self.0.iter().cloned().map(BigRational::from_integer).collect())
    }

    /// Enclosure of `{p(t) : t in [lo, hi]}`, multiplied by the positive
    /// constant `2^(e d)` where `e` is the finer exponent of the endpoints and
    /// `d` the degree. Only the signs of the bounds are meaningful.
    pub fn range(&self, lo: &Dyadic, hi: &Dyadic) -> (BigInt, BigInt) {
        let Some(d) = self.0.len().checked_sub(1) else {
            return (BigInt::zero(), BigInt::zero());
        };
        let e = lo.e.max(hi.e) as usize;
        let a = &lo.k << (e - lo.e as usize);
        let w = (&hi.k << (e - hi.e as usize)) - &a;
        // g(y) = 2^(e d) p(y / 2^e), shifted to s = y - a.
        let mut g: Vec<BigInt> = self.0.iter().enumerate().map(|(i, c)| c << (e * (d - i))).collect();
        for i in 0..d {
            for j in (i..d).rev() {
                let t = &g[j + 1] * &a;
                g[j] += t;
            }
        }
        let (mut min, mut max) = (g[0].clone(), g[0].clone());
        let mut wp = BigInt::one();
        for c in &g[1..] {
            wp *= &w;
            let term = c * &wp;
            if term.is_negative() {
                min += term;
            } else {
                max += term;
            }
        }
        (min, max)
    }

    /// Sign of `p(k / 2^e)`, computed as `sum c_i k^i 2^(e (d - i))`.
    pub fn sign_at(&self, x: &Dyadic) -> Sign {
        let Some(d) = self.0.len().checked_sub(1) else {
            return Sign::NoSign;
        };
        let mut acc = BigInt::zero();
        let mut kp = BigInt::one();
        for (i, c) in self.0.iter().enumerate() {
            if !c.is_zero() {
                acc += (c * &kp) << (x.e as usize * (d - i));
            }
            kp *= &x.k;
        }
        acc.sign()
    }
}

/// Sturm sequence of a square-free polynomial, scaled to integers.
pub struct Sturm(Vec<IntPoly>);

impl Sturm {
    pub fn new(p: &RatPoly) -> Self {
        let mut seq = vec![p.clone(), p.derivative()];
        while !seq.last().unwrap().is_zero() {
            let n = seq.len();
            let r = seq[n - 2].div_rem(&seq[n - 1]).1.neg();
            seq.push(r);
        }
        seq.pop();
        Self(seq.iter().map(RatPoly::to_int).collect())
    }

    pub fn sign_changes(&self, x: &Dyadic) -> usize {
        let mut last = Sign::NoSign;
        let mut changes = 0;
        for p in &self.0 {
            let s = p.sign_at(x);
            if s != Sign::NoSign {
                if last != Sign::NoSign && s != last {
                    changes += 1;
                }
                last = s;
            }
        }
        changes
    }

    pub fn sign(&self, x: &Dyadic) -> Sign {
        self.0[0].sign_at(x)
    }
}

/// A real root either known exactly or bracketed by `(lo, hi)` with a sign
/// change of the square-free polynomial across it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RootBracket {
    Exact(Dyadic),
    Open(Dyadic, Dyadic),
}

impl RootBracket {
    pub fn dyadic_bounds(&self) -> (&Dyadic, &Dyadic) {
        match self {
            RootBracket::Exact(x) => (x, x),
            RootBracket::Open(a, b) => (a, b),
        }
    }

    pub fn bounds(&self) -> (BigRational, BigRational) {
        match self {
            RootBracket::Exact(x) => (x.to_rational(), x.to_rational()),
            RootBracket::Open(a, b) => (a.to_rational(), b.to_rational()),
        }
    }

    /// Bisects until the bracket is at most `2^-bits` wide.
    pub fn refine(&self, sturm: &Sturm, bits: u32) -> Self {
        let RootBracket::Open(a, b) = self else {
            return self.clone();
        };
        let (mut a, mut b) = (a.clone(), b.clone());
        // `b` is never a root; `a` may be the previous root.
        let sb = sturm.sign(&b);
        while !within(&a, &b, bits) {
            let m = Dyadic::midpoint(&a, &b);
            match sturm.sign(&m) {
                Sign::NoSign => return RootBracket::Exact(m),
                s if s == sb => b = m,
                _ => a = m,
            }
        }
        RootBracket::Open(a, b)
    }
}

/// `b - a <= 2^-bits`.
fn within(a: &Dyadic, b: &Dyadic, bits: u32) -> bool {
    let e = a.e.max(b.e);
    let diff = (&b.k << (e - b.e)) - (&a.k << (e - a.e));
    (diff << bits) <= (BigInt::one() << e)
}

/// Distinct real roots of a square-free polynomial in `[0, 1]`, ascending,
/// each bracketed to width at most `2^-bits`.
pub fn isolate_unit_roots(q: &RatPoly, bits: u32) -> (Sturm, Vec<RootBracket>) {
    let sturm = Sturm::new(q);
    let zero = Dyadic::new(BigInt::zero(), 0);
    let one = Dyadic::new(BigInt::one(), 0);
    let mut roots = Vec::new();
    if sturm.sign(&zero) == Sign::NoSign {
        roots.push(RootBracket::Exact(zero.clone()));
    }
    // Sturm counts cover half-open `(a, b]`, so a root at `a` is excluded.
    let mut stack = vec![(zero, one)];
    while let Some((a, b)) = stack.pop() {
        let c = count(&sturm, &a, &b);
        if c == 0 {
            continue;
        }
        if c == 1 {
            if sturm.sign(&b) == Sign::NoSign {
                roots.push(RootBracket::Exact(b));
            } else {
                roots.push(RootBracket::Open(a, b).refine(&sturm, bits));
            }
            continue;
        }
        let m = Dyadic::midpoint(&a, &b);
        stack.push((m.clone(), b));
        stack.push((a, m));
    }
    (sturm, roots)
}

/// Distinct roots in `(a, b]`.
fn count(sturm: &Sturm, a: &Dyadic, b: &Dyadic) -> usize {
    sturm.sign_changes(a).saturating_sub(sturm.sign_changes(b))
}

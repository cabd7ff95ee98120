//! Exact Gaussian rationals `p + q i` with `p, q` in Q.
//!
//! Every series coefficient, matrix entry and automorphism parameter in the
//! crate lives here. Both parts are `BigRational`, so they are always kept in
//! lowest terms with a positive denominator.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::Error;

pub type Rational = BigRational;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct GaussianRational {
    pub re: Rational,
    pub im: Rational,
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

impl GaussianRational {
    pub fn new(re: Rational, im: Rational) -> Self {
        GaussianRational { re, im }
    }

    pub fn from_real(re: Rational) -> Self {
        GaussianRational { re, im: Rational::zero() }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        GaussianRational::new(rat_int(re), rat_int(im))
    }

    pub fn zero() -> Self {
        GaussianRational { re: Rational::zero(), im: Rational::zero() }
    }

    pub fn one() -> Self {
        GaussianRational::from_real(Rational::one())
    }

    pub fn i() -> Self {
        GaussianRational::new(Rational::zero(), Rational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        GaussianRational::new(self.re.clone(), -self.im.clone())
    }

    /// `|z|^2`, which is always rational.
    pub fn norm_sqr(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn scale(&self, r: &Rational) -> Self {
        GaussianRational::new(&self.re * r, &self.im * r)
    }

    /// Multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        GaussianRational::new(-self.im.clone(), self.re.clone())
    }

    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = self.norm_sqr();
        Some(GaussianRational::new(&self.re / &n, -&self.im / &n))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = GaussianRational::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

impl From<i64> for GaussianRational {
    fn from(v: i64) -> Self {
        GaussianRational::from_ints(v, 0)
    }
}

impl From<Rational> for GaussianRational {
    fn from(v: Rational) -> Self {
        GaussianRational::from_real(v)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl<'a, 'b> $tr<&'b GaussianRational> for &'a GaussianRational {
            type Output = GaussianRational;
            fn $m(self, rhs: &'b GaussianRational) -> GaussianRational {
                let f: fn(&GaussianRational, &GaussianRational) -> GaussianRational = $body;
                f(self, rhs)
            }
        }
        impl $tr<GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $m(self, rhs: GaussianRational) -> GaussianRational {
                (&self).$m(&rhs)
            }
        }
        impl<'b> $tr<&'b GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $m(self, rhs: &'b GaussianRational) -> GaussianRational {
                (&self).$m(rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| GaussianRational::new(&a.re + &b.re, &a.im + &b.im));
binop!(Sub, sub, |a, b| GaussianRational::new(&a.re - &b.re, &a.im - &b.im));
binop!(Mul, mul, |a, b| {
    if a.im.is_zero() && b.im.is_zero() {
        return GaussianRational::from_real(&a.re * &b.re);
    }
    GaussianRational::new(
        &a.re * &b.re - &a.im * &b.im,
        &a.re * &b.im + &a.im * &b.re,
    )
});
binop!(Div, div, |a, b| {
    let inv = b.inv().expect("division by zero Gaussian rational");
    a * &inv
});

impl AddAssign<&GaussianRational> for GaussianRational {
    fn add_assign(&mut self, rhs: &GaussianRational) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign<&GaussianRational> for GaussianRational {
    fn sub_assign(&mut self, rhs: &GaussianRational) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

impl MulAssign<&GaussianRational> for GaussianRational {
    fn mul_assign(&mut self, rhs: &GaussianRational) {
        *self = &*self * rhs;
    }
}

impl Neg for GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re, -self.im)
    }
}

impl Neg for &GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re.clone(), -self.im.clone())
    }
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.re.is_zero() {
            write!(f, "{}i", self.im)
        } else if self.im.is_negative() {
            write!(f, "({} - {}i)", self.re, -self.im.clone())
        } else {
            write!(f, "({} + {}i)", self.re, self.im)
        }
    }
}

/// Serializes as `"p/q"`, the interchange format used by every JSON file.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `"p/q"` or a bare integer `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational, Error> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed rational {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            Ok(Rational::new(p, q))
        }
        None => {
            let p: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rational::from_integer(p))
        }
    }
}

/// Exact square root of a nonnegative rational, if it is a perfect square.
pub fn rational_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    if &(&n * &n) == r.numer() && &(&d * &d) == r.denom() {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

/// Finds `c` in Q(i) with `|c|^2 = r` when `r` is a norm and the search is
/// small enough to be exhaustive. `r = p/q` is a norm iff `p*q` is a sum of
/// two integer squares.
pub fn find_norm_root(r: &Rational) -> Option<GaussianRational> {
    if r.is_negative() {
        return None;
    }
    if r.is_zero() {
        return Some(GaussianRational::zero());
    }
    if let Some(s) = rational_sqrt(r) {
        return Some(GaussianRational::from_real(s));
    }
    let m = r.numer() * r.denom();
    let m = m.to_u128()?;
    // brute force over x <= sqrt(m / 2); capped to keep the call cheap
    const LIMIT: u128 = 2_000_000;
    let mut x: u128 = 0;
    while x * x * 2 <= m {
        if x > LIMIT {
            return None;
        }
        let rest = m - x * x;
        let y = isqrt(rest);
        if y * y == rest {
            let q = BigInt::from(r.denom().clone());
            let re = Rational::new(BigInt::from(x), q.clone());
            let im = Rational::new(BigInt::from(y), q);
            return Some(GaussianRational::new(re, im));
        }
        x += 1;
    }
    None
}

fn isqrt(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u128;
    while x * x > v {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= v {
        x += 1;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_ops() {
        let a = GaussianRational::new(rat(1, 2), rat(3, 4));
        let b = GaussianRational::from_ints(-2, 5);
        assert_eq!(&(&a * &b) / &b, a);
        assert_eq!(&a - &a, GaussianRational::zero());
        assert_eq!(a.conj().conj(), a);
        assert_eq!((&a * &a.conj()).im, Rational::zero());
        assert_eq!(GaussianRational::i().mul_i(), GaussianRational::from(-1));
        assert!(GaussianRational::zero().inv().is_none());
    }

    #[test]
    fn rational_text_format() {
        let r = parse_rational("-6/4").unwrap();
        assert_eq!(format_rational(&r), "-3/2");
        assert_eq!(format_rational(&parse_rational("7").unwrap()), "7/1");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn norm_roots() {
        assert_eq!(rational_sqrt(&rat(9, 4)), Some(rat(3, 2)));
        assert_eq!(rational_sqrt(&rat(2, 1)), None);
        let c = find_norm_root(&rat(2, 1)).unwrap();
        assert_eq!(c.norm_sqr(), rat(2, 1));
        let c = find_norm_root(&rat(5, 9)).unwrap();
        assert_eq!(c.norm_sqr(), rat(5, 9));
        assert!(find_norm_root(&rat(3, 1)).is_none());
        assert!(find_norm_root(&rat(-1, 1)).is_none());
    }
}

//! The `Real` abstraction shared by every algorithm, and its backends.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::IBig;
use num_bigint::BigInt;
use num_rational::BigRational;

use super::field::FieldElement;
use super::golden_int::GoldenInt;
use super::scalar::Scalar;

/// Ordered field operations plus conversions from the exact types.
///
/// Implemented by `f64`, exact [`FieldElement`], fixed precision [`HpFloat`]
/// and forward-mode [`Dual`] numbers.
pub trait Real:
    Clone
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const EXACT: bool;

    fn from_field(x: &FieldElement) -> Self;
    fn from_golden(x: GoldenInt) -> Self;
    fn from_i64(n: i64) -> Self;
    /// Exact value of a double (a dyadic rational).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn to_scalar(&self) -> Scalar;

    fn zero() -> Self {
        Self::from_i64(0)
    }
    fn one() -> Self {
        Self::from_i64(1)
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        Self::from_i64(n) / Self::from_i64(d)
    }
    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
    fn powi(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Real for f64 {
    const EXACT: bool = false;
    fn from_field(x: &FieldElement) -> Self {
        x.to_f64()
    }
    fn from_golden(x: GoldenInt) -> Self {
        x.to_f64()
    }
    fn from_i64(n: i64) -> Self {
        n as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_scalar(&self) -> Scalar {
        Scalar::from_f64(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl Real for FieldElement {
    const EXACT: bool = true;
    fn from_field(x: &FieldElement) -> Self {
        x.clone()
    }
    fn from_golden(x: GoldenInt) -> Self {
        x.to_field()
    }
    fn from_i64(n: i64) -> Self {
        FieldElement::from_int(n)
    }
    fn from_f64(x: f64) -> Self {
        FieldElement::from_rational(BigRational::from_float(x).expect("finite double"))
    }
    fn to_f64(&self) -> f64 {
        FieldElement::to_f64(self)
    }
    fn to_scalar(&self) -> Scalar {
        Scalar::Exact(self.clone())
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        FieldElement::from_ratio(n, d)
    }
}

type Big = FBig<HalfEven, 2>;

/// Binary floating point with `BITS` bits of mantissa and round-half-even
/// arithmetic (every operation is correctly rounded).
#[derive(Clone, PartialEq, PartialOrd)]
pub struct HpFloat<const BITS: usize>(Big);

impl<const BITS: usize> HpFloat<BITS> {
    fn wrap(x: Big) -> Self {
        HpFloat(x.with_precision(BITS).value())
    }

    fn from_binary(m: BigInt, e: i64) -> Self {
        let (sign, digits) = m.to_u64_digits();
        let mut mag = IBig::from(0u8);
        for d in digits.iter().rev() {
            mag = (mag << 64) + IBig::from(*d);
        }
        if sign == num_bigint::Sign::Minus {
            mag = -mag;
        }
        Self::wrap(Big::from_parts(mag, e as isize))
    }

    pub fn inner(&self) -> &Big {
        &self.0
    }
}

impl<const BITS: usize> fmt::Debug for HpFloat<BITS> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const BITS: usize> fmt::Display for HpFloat<BITS> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! hp_binop {
    ($tr:ident, $f:ident) => {
        impl<const BITS: usize> $tr for HpFloat<BITS> {
            type Output = Self;
            fn $f(self, rhs: Self) -> Self {
                HpFloat($tr::$f(self.0, rhs.0))
            }
        }
    };
}
hp_binop!(Add, add);
hp_binop!(Sub, sub);
hp_binop!(Mul, mul);
hp_binop!(Div, div);

impl<const BITS: usize> Neg for HpFloat<BITS> {
    type Output = Self;
    fn neg(self) -> Self {
        HpFloat(-self.0)
    }
}

impl<const BITS: usize> Real for HpFloat<BITS> {
    const EXACT: bool = false;
    fn from_field(x: &FieldElement) -> Self {
        let (m, e) = x.to_binary(BITS as u32);
        Self::from_binary(m, e)
    }
    fn from_golden(x: GoldenInt) -> Self {
        Self::from_field(&x.to_field())
    }
    fn from_i64(n: i64) -> Self {
        Self::wrap(Big::from(n))
    }
    fn from_f64(x: f64) -> Self {
        Self::wrap(Big::try_from(x).expect("finite double"))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }
    fn to_scalar(&self) -> Scalar {
        Scalar::Float { value: self.0.to_string(), bits: BITS as u32 }
    }
}

/// Forward-mode dual number `v + d*eps` with `eps^2 = 0`.
///
/// Ordering looks only at the value, so branch selection inside piecewise
/// definitions follows the primal computation.
#[derive(Clone, Debug)]
pub struct Dual<R: Real> {
    pub v: R,
    pub d: R,
}

impl<R: Real> Dual<R> {
    pub fn new(v: R, d: R) -> Self {
        Dual { v, d }
    }

    pub fn constant(v: R) -> Self {
        Dual { v, d: R::zero() }
    }

    pub fn variable(v: R) -> Self {
        Dual { v, d: R::one() }
    }
}

impl<R: Real> PartialEq for Dual<R> {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl<R: Real> PartialOrd for Dual<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl<R: Real> Add for Dual<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl<R: Real> Sub for Dual<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl<R: Real> Mul for Dual<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { d: self.d * o.v.clone() + self.v.clone() * o.d, v: self.v * o.v }
    }
}

impl<R: Real> Div for Dual<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let v = self.v.clone() / o.v.clone();
        let d = (self.d - v.clone() * o.d) / o.v;
        Dual { v, d }
    }
}

impl<R: Real> Neg for Dual<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: -self.d }
    }
}

impl<R: Real> Real for Dual<R> {
    const EXACT: bool = R::EXACT;
    fn from_field(x: &FieldElement) -> Self {
        Dual::constant(R::from_field(x))
    }
    fn from_golden(x: GoldenInt) -> Self {
        Dual::constant(R::from_golden(x))
    }
    fn from_i64(n: i64) -> Self {
        Dual::constant(R::from_i64(n))
    }
    fn from_f64(x: f64) -> Self {
        Dual::constant(R::from_f64(x))
    }
    fn to_f64(&self) -> f64 {
        self.v.to_f64()
    }
    fn to_scalar(&self) -> Scalar {
        self.v.to_scalar()
    }
}

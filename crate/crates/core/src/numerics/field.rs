//! Exact arithmetic in the quadratic field Q(sqrt 5), stored in the basis {1, phi}.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An element `a + b*phi` of Q(sqrt 5), where `phi = (1 + sqrt 5) / 2`.
///
/// Both coordinates are reduced rationals, so equality is structural.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct FieldElement {
    a: BigRational,
    b: BigRational,
}

impl FieldElement {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        FieldElement { a, b }
    }

    pub fn zero() -> Self {
        FieldElement::default()
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn phi() -> Self {
        FieldElement { a: BigRational::zero(), b: BigRational::one() }
    }

    /// `1/phi = phi - 1`.
    pub fn inv_phi() -> Self {
        Self::from_parts(-1, 1, 1, 1)
    }

    /// `sqrt 5 = 2 phi - 1`.
    pub fn sqrt5() -> Self {
        Self::from_parts(-1, 1, 2, 1)
    }

    pub fn from_int(n: i64) -> Self {
        FieldElement { a: BigRational::from_integer(n.into()), b: BigRational::zero() }
    }

    pub fn from_ratio(n: i64, d: i64) -> Self {
        FieldElement { a: BigRational::new(n.into(), d.into()), b: BigRational::zero() }
    }

    pub fn from_rational(a: BigRational) -> Self {
        FieldElement { a, b: BigRational::zero() }
    }

    /// `an/ad + (bn/bd) phi`.
    pub fn from_parts(an: i64, ad: i64, bn: i64, bd: i64) -> Self {
        FieldElement {
            a: BigRational::new(an.into(), ad.into()),
            b: BigRational::new(bn.into(), bd.into()),
        }
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.a
    }

    pub fn phi_part(&self) -> &BigRational {
        &self.b
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Galois conjugate, sending phi to `1 - phi`.
    pub fn conjugate(&self) -> Self {
        FieldElement { a: &self.a + &self.b, b: -&self.b }
    }

    /// Field norm `a^2 + ab - b^2`.
    pub fn norm(&self) -> BigRational {
        &self.a * &self.a + &self.a * &self.b - &self.b * &self.b
    }

    pub fn signum(&self) -> i8 {
        // 2(a + b phi) = (2a + b) + b sqrt5
        let c = &self.a * BigInt::from(2) + &self.b;
        sign_of_c_plus_d_sqrt5(&c, &self.b)
    }

    pub fn abs(&self) -> Self {
        if self.signum() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let n = self.norm();
        let c = self.conjugate();
        Ok(FieldElement { a: c.a / &n, b: c.b / &n })
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        Ok(self * &rhs.inv()?)
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    /// Integer power, negative exponents allowed for nonzero elements.
    pub fn powi(&self, e: i64) -> Result<Self> {
        if e >= 0 {
            Ok(self.pow(e as u64))
        } else {
            Ok(self.inv()?.pow(e.unsigned_abs()))
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Correctly rounded (round-half-even) binary float with `bits` of mantissa,
    /// returned as `(m, e)` with value `m * 2^e` and `|m| < 2^bits`.
    pub fn to_binary(&self, bits: u32) -> (BigInt, i64) {
        assert!(bits >= 2, "precision must be at least 2 bits");
        if self.is_zero() {
            return (BigInt::zero(), 0);
        }
        let neg = self.signum() < 0;
        let x = if neg { -self.clone() } else { self.clone() };
        // x = (A + B sqrt5) / D with D > 0
        let two = BigRational::from_integer(2.into());
        let c = &x.a * &two + &x.b; // 2x = c + b sqrt5
        let d = x.b.clone();
        let den = c.denom().lcm(d.denom()) * BigInt::from(2);
        let big_a = (&c * BigRational::from_integer(den.clone()) / &two).to_integer();
        let big_b = (&d * BigRational::from_integer(den.clone()) / &two).to_integer();

        // floor(x * 2^k) for integer k (possibly negative)
        let floor_scaled = |k: i64| -> (BigInt, bool) {
            let (num_a, num_b, dd) = if k >= 0 {
                (&big_a << k as usize, &big_b << k as usize, den.clone())
            } else {
                (big_a.clone(), big_b.clone(), &den << (-k) as usize)
            };
            // floor((num_a + num_b sqrt5) / dd), and whether the quotient is exact
            let five_b2: BigUint = (&num_b * &num_b * BigInt::from(5)).magnitude().clone();
            let r = five_b2.sqrt();
            let root_exact = &r * &r == five_b2;
            let r = BigInt::from_biguint(Sign::Plus, r);
            let s_floor = if num_b.sign() == Sign::Minus {
                if root_exact {
                    -r
                } else {
                    -r - 1
                }
            } else {
                r
            };
            let total = num_a + s_floor;
            let (q, rem) = total.div_mod_floor(&dd);
            let exact = root_exact && rem.is_zero();
            (q, exact)
        };

        // Estimate the binary exponent from an f64 approximation, then correct it.
        let approx = x.to_f64_naive().abs();
        let mut e = if approx > 0.0 && approx.is_finite() { approx.log2().floor() as i64 } else { 0 };
        // find e with 2^e <= x < 2^(e+1)
        loop {
            let (q, _) = floor_scaled(-e);
            if q.is_zero() {
                e -= 1;
            } else if q >= BigInt::from(2) {
                e += 1;
            } else {
                break;
            }
        }
        // keep bits+1 bits: floor(x * 2^(bits - e)) has bits+1 bits
        let k = bits as i64 - e;
        let (q, exact) = floor_scaled(k);
        let round_bit = q.bit(0);
        let mut m: BigInt = &q >> 1usize;
        let mut exp = e - bits as i64 + 1;
        let round_up = if !round_bit {
            false
        } else if !exact {
            true
        } else {
            // exact tie: round half to even
            m.bit(0)
        };
        if round_up {
            m += 1;
            if m.bits() > bits as u64 {
                m >>= 1usize;
                exp += 1;
            }
        }
        if neg {
            m = -m;
        }
        (m, exp)
    }

    /// Correctly rounded conversion to `f64` (normal range).
    pub fn to_f64(&self) -> f64 {
        let (m, e) = self.to_binary(53);
        let mf = m.to_f64().unwrap_or(f64::NAN);
        mf * 2f64.powi(e as i32)
    }

    fn to_f64_naive(&self) -> f64 {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let a = self.a.to_f64().unwrap_or(0.0);
        let b = self.b.to_f64().unwrap_or(0.0);
        a + b * phi
    }

    /// Size of the largest numerator or denominator, in bits.
    pub fn height_bits(&self) -> u64 {
        [self.a.numer(), self.a.denom(), self.b.numer(), self.b.denom()]
            .iter()
            .map(|v| v.bits())
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn sign_of_c_plus_d_sqrt5(c: &BigRational, d: &BigRational) -> i8 {
    let sc = sgn(c);
    let sd = sgn(d);
    if sc == 0 {
        return sd;
    }
    if sd == 0 || sc == sd {
        return sc;
    }
    let c2 = c * c;
    let d2 = d * d * BigInt::from(5);
    match c2.cmp(&d2) {
        Ordering::Greater => sc,
        Ordering::Less => sd,
        Ordering::Equal => 0,
    }
}

fn sgn(x: &BigRational) -> i8 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        (self - other).signum().cmp(&0)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $f:ident, $body:expr) => {
        impl<'a> $tr<&'a FieldElement> for &'a FieldElement {
            type Output = FieldElement;
            fn $f(self, rhs: &'a FieldElement) -> FieldElement {
                let g: fn(&FieldElement, &FieldElement) -> FieldElement = $body;
                g(self, rhs)
            }
        }
        impl $tr<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $f(self, rhs: FieldElement) -> FieldElement {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $f(self, rhs: &'a FieldElement) -> FieldElement {
                (&self).$f(rhs)
            }
        }
    };
}

forward_binop!(Add, add, |x, y| FieldElement { a: &x.a + &y.a, b: &x.b + &y.b });
forward_binop!(Sub, sub, |x, y| FieldElement { a: &x.a - &y.a, b: &x.b - &y.b });
forward_binop!(Mul, mul, |x, y| {
    let bd = &x.b * &y.b;
    FieldElement { a: &x.a * &y.a + &bd, b: &x.a * &y.b + &x.b * &y.a + bd }
});
forward_binop!(Div, div, |x, y| x.checked_div(y).expect("division by zero in Q(sqrt 5)"));

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement { a: -self.a, b: -self.b }
    }
}

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement { a: -&self.a, b: -&self.b }
    }
}

fn fmt_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}·phi", fmt_rational(&self.a), fmt_rational(&self.b))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self} (~{:.17})", self.to_f64_naive())
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("bad rational `{s}`"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

impl FromStr for FieldElement {
    type Err = Error;

    /// Parses `p/q + r/s·phi` (also accepts `*phi` and a bare rational).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let body = t
            .strip_suffix("·phi")
            .or_else(|| t.strip_suffix("*phi"))
            .map(str::trim_end);
        match body {
            None => Ok(FieldElement::from_rational(parse_rational(t)?)),
            Some(body) => {
                let (a, b) = body
                    .split_once(" + ")
                    .ok_or_else(|| Error::Parse(format!("bad field element `{s}`")))?;
                Ok(FieldElement { a: parse_rational(a)?, b: parse_rational(b)? })
            }
        }
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

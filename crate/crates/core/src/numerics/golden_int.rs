//! The ring Z[phi], which holds every endpoint of a golden-mean cylinder.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::field::FieldElement;

/// `p + q*phi` with machine-integer coordinates.
///
/// `1/phi = phi - 1` is a unit, so the ring is closed under the inverse branches
/// of the golden-mean map. Coordinates grow like Fibonacci numbers, which keeps
/// `i128` exact far beyond any depth used here.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GoldenInt {
    pub p: i128,
    pub q: i128,
}

const PHI: f64 = 1.618_033_988_749_895;
const PHI_BAR: f64 = -0.618_033_988_749_894_8;

impl GoldenInt {
    pub const ZERO: GoldenInt = GoldenInt { p: 0, q: 0 };
    pub const ONE: GoldenInt = GoldenInt { p: 1, q: 0 };
    pub const PHI: GoldenInt = GoldenInt { p: 0, q: 1 };

    pub const fn new(p: i128, q: i128) -> Self {
        GoldenInt { p, q }
    }

    /// `phi^-k` for `k >= 0`.
    pub fn inv_phi_pow(k: u32) -> Self {
        let mut x = GoldenInt::ONE;
        for _ in 0..k {
            x = x.div_phi();
        }
        x
    }

    /// Multiplication by `1/phi = phi - 1`.
    pub fn div_phi(self) -> Self {
        GoldenInt { p: self.q - self.p, q: self.p }
    }

    pub fn mul_phi(self) -> Self {
        GoldenInt { p: self.q, q: self.p + self.q }
    }

    pub fn mul_int(self, k: i128) -> Self {
        GoldenInt { p: self.p * k, q: self.q * k }
    }

    /// Norm `p^2 + pq - q^2`.
    pub fn norm(self) -> i128 {
        self.p * self.p + self.p * self.q - self.q * self.q
    }

    pub fn signum(self) -> i8 {
        // 2x = (2p + q) + q sqrt5
        let c = 2 * self.p + self.q;
        let d = self.q;
        let (sc, sd) = (c.signum() as i8, d.signum() as i8);
        if sc == 0 {
            return sd;
        }
        if sd == 0 || sc == sd {
            return sc;
        }
        match (c * c).cmp(&(5 * d * d)) {
            Ordering::Greater => sc,
            Ordering::Less => sd,
            Ordering::Equal => 0,
        }
    }

    /// Accurate `f64` value even when `p` and `q` nearly cancel.
    pub fn to_f64(self) -> f64 {
        let direct = self.p as f64 + self.q as f64 * PHI;
        let conj = self.p as f64 + self.q as f64 * PHI_BAR;
        if conj.abs() > direct.abs() && conj != 0.0 {
            self.norm() as f64 / conj
        } else {
            direct
        }
    }

    pub fn to_field(self) -> FieldElement {
        FieldElement::new(
            BigRational::from_integer(BigInt::from(self.p)),
            BigRational::from_integer(BigInt::from(self.q)),
        )
    }

    pub fn is_zero(self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }
}

impl Add for GoldenInt {
    type Output = GoldenInt;
    fn add(self, o: GoldenInt) -> GoldenInt {
        GoldenInt { p: self.p + o.p, q: self.q + o.q }
    }
}

impl Sub for GoldenInt {
    type Output = GoldenInt;
    fn sub(self, o: GoldenInt) -> GoldenInt {
        GoldenInt { p: self.p - o.p, q: self.q - o.q }
    }
}

impl Neg for GoldenInt {
    type Output = GoldenInt;
    fn neg(self) -> GoldenInt {
        GoldenInt { p: -self.p, q: -self.q }
    }
}

impl PartialOrd for GoldenInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GoldenInt {
    fn cmp(&self, other: &Self) -> Ordering {
        (*self - *other).signum().cmp(&0)
    }
}

impl fmt::Debug for GoldenInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}φ(~{:.15})", self.p, self.q, self.to_f64())
    }
}

impl fmt::Display for GoldenInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_field().fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_relations() {
        assert_eq!(GoldenInt::PHI.div_phi(), GoldenInt::ONE);
        assert_eq!(GoldenInt::ONE.mul_phi(), GoldenInt::PHI);
        let x = GoldenInt::new(-7, 12);
        assert_eq!(x.mul_phi().div_phi(), x);
    }

    #[test]
    fn small_powers_are_accurate() {
        let x = GoldenInt::inv_phi_pow(60);
        let want = PHI.powi(-60);
        assert!((x.to_f64() - want).abs() / want < 1e-14);
        assert!(x.signum() > 0);
        assert_eq!(x.norm(), 1);
    }

    #[test]
    fn ordering_matches_field() {
        let a = GoldenInt::inv_phi_pow(2);
        let b = GoldenInt::ONE - GoldenInt::inv_phi_pow(1);
        assert_eq!(a, b);
        assert!(GoldenInt::inv_phi_pow(3) < a);
        assert_eq!(a.to_field(), FieldElement::inv_phi().pow(2));
    }
}

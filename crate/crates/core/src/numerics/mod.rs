//! Number systems: exact Q(sqrt 5), the integer ring Z[phi], fixed precision
//! floats and dual numbers, behind the [`Real`] trait.

mod field;
mod golden_int;
mod real;
mod scalar;

pub use field::FieldElement;
pub use golden_int::GoldenInt;
pub use real::{Dual, HpFloat, Real};
pub use scalar::{Backend, Scalar, DEFAULT_FLOAT_BITS, SUPPORTED_BITS};

use crate::error::Result;

pub fn field_add(x: &FieldElement, y: &FieldElement) -> FieldElement {
    x + y
}

pub fn field_mul(x: &FieldElement, y: &FieldElement) -> FieldElement {
    x * y
}

/// Fails with [`crate::Error::DivisionByZero`] when `y == 0`.
pub fn field_div(x: &FieldElement, y: &FieldElement) -> Result<FieldElement> {
    x.checked_div(y)
}

pub fn field_cmp(x: &FieldElement, y: &FieldElement) -> std::cmp::Ordering {
    x.cmp(y)
}

/// Correctly rounded float of `bits` mantissa bits.
pub fn to_float(x: &FieldElement, bits: u32) -> Scalar {
    match bits {
        53 => Scalar::from_f64(x.to_f64()),
        80 => HpFloat::<80>::from_field(x).to_scalar(),
        128 => HpFloat::<128>::from_field(x).to_scalar(),
        256 => HpFloat::<256>::from_field(x).to_scalar(),
        _ => {
            let (m, e) = x.to_binary(bits);
            Scalar::Float { value: format!("{m}p{e}"), bits }
        }
    }
}

/// The golden ratio in any backend.
pub fn phi<R: Real>() -> R {
    R::from_field(&FieldElement::phi())
}

pub fn inv_phi<R: Real>() -> R {
    R::from_field(&FieldElement::inv_phi())
}

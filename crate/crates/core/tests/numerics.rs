use golden_anosov::{Dual, FieldElement, GoldenInt, HpFloat, Real};
use proptest::prelude::*;

fn field() -> impl Strategy<Value = FieldElement> {
    (-40i64..40, 1i64..12, -40i64..40, 1i64..12).prop_map(|(a, b, c, d)| FieldElement::from_parts(a, b, c, d))
}

proptest! {
    #[test]
    fn ring_laws(x in field(), y in field(), z in field()) {
        prop_assert_eq!(&(&x + &y) - &y, x.clone());
        prop_assert_eq!(&x * &y, &y * &x);
        prop_assert_eq!(&x * &(&y + &z), &(&x * &y) + &(&x * &z));
    }

    #[test]
    fn inverse_and_norm(x in field(), y in field()) {
        prop_assume!(!x.is_zero());
        prop_assert_eq!(&x * &x.inv().unwrap(), FieldElement::one());
        prop_assert_eq!((&x * &y).norm(), x.norm() * y.norm());
        prop_assert_eq!((&x * &y).conjugate(), &x.conjugate() * &y.conjugate());
    }

    #[test]
    fn order_agrees_with_floats(x in field(), y in field()) {
        let (a, b) = (x.to_f64(), y.to_f64());
        if (a - b).abs() > 1e-9 {
            prop_assert_eq!(x < y, a < b);
        }
        prop_assert_eq!(x.signum() < 0, a < -1e-12 || (a.abs() <= 1e-12 && x.signum() < 0));
    }

    #[test]
    fn wide_float_tracks_exact(x in field(), y in field()) {
        prop_assume!(!y.is_zero());
        let q = x.checked_div(&y).unwrap();
        let h = HpFloat::<128>::from_field(&x) / HpFloat::<128>::from_field(&y);
        let err = (h - HpFloat::<128>::from_field(&q)).to_f64().abs();
        prop_assert!(err <= 1e-30 * (1.0 + q.to_f64().abs()));
    }

    #[test]
    fn golden_ints_shift_by_phi(p in -1000i128..1000, q in -1000i128..1000) {
        let g = GoldenInt::new(p, q);
        prop_assert_eq!(g.mul_phi().div_phi(), g);
        prop_assert!((g.mul_phi().to_f64() - g.to_f64() * 1.618_033_988_749_895).abs() < 1e-9 * (1.0 + g.to_f64().abs()));
        prop_assert_eq!(g.to_field(), FieldElement::from_int(p as i64) + FieldElement::phi() * FieldElement::from_int(q as i64));
    }
}

#[test]
fn inverse_powers_of_phi() {
    for k in 0..60u32 {
        let g = GoldenInt::inv_phi_pow(k);
        assert_eq!(g.to_field(), FieldElement::inv_phi().pow(k as u64));
        let rel = (g.to_f64() - 1.618_033_988_749_895f64.powi(-(k as i32))).abs() * 1.618_033_988_749_895f64.powi(k as i32);
        assert!(rel < 1e-12, "k = {k}");
    }
}

#[test]
fn dual_numbers_differentiate_polynomials() {
    let x = Dual::variable(FieldElement::from_ratio(3, 7));
    let p = x.clone() * x.clone() * x.clone() - Dual::constant(FieldElement::phi()) * x;
    let v = FieldElement::from_ratio(3, 7);
    assert_eq!(p.d, FieldElement::from_int(3) * &v * &v - FieldElement::phi());
}

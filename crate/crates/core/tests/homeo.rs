use golden_anosov::homeo1d::*;
use golden_anosov::schedule::{base_case_schedule, toy_schedule, Schedule, StageKind};
use golden_anosov::symbolic::{enumerate_cylinders, partition_interval, Word};
use std::collections::HashMap;
use golden_anosov::{FieldElement, GoldenInt};
use proptest::prelude::*;
use std::sync::OnceLock;

fn fe(p: i64, q: i64) -> FieldElement {
    FieldElement::from_ratio(p, q)
}

fn toy() -> &'static Schedule {
    static S: OnceLock<Schedule> = OnceLock::new();
    S.get_or_init(toy_schedule)
}

fn base_f64() -> &'static Circle<f64> {
    static C: OnceLock<Circle<f64>> = OnceLock::new();
    C.get_or_init(|| Circle::new(&base_case_schedule()))
}

fn toy_f64() -> &'static Circle<f64> {
    static C: OnceLock<Circle<f64>> = OnceLock::new();
    C.get_or_init(|| Circle::new(toy()))
}

// Simpson's rule is exact on each third, where the profile is at most linear.
fn simpson_mean(alpha: &FieldElement) -> FieldElement {
    let mut total = FieldElement::zero();
    for k in 0..3 {
        let a = fe(k, 3);
        let b = fe(k + 1, 3);
        let m = (&a + &b) / fe(2, 1);
        let f = |s: &FieldElement| g_alpha(alpha, s).0;
        total = total + (&b - &a) / fe(6, 1) * (f(&a) + fe(4, 1) * f(&m) + f(&b));
    }
    total
}

#[test]
fn g_alpha_mean_is_alpha() {
    for alpha in [fe(1, 4), fe(1, 2), fe(3, 2), fe(7, 3), FieldElement::phi(), FieldElement::inv_phi()] {
        assert_eq!(simpson_mean(&alpha), alpha);
        assert_eq!(g_alpha(&alpha, &FieldElement::zero()).0, FieldElement::one());
        assert_eq!(g_alpha(&alpha, &FieldElement::one()).0, alpha);
    }
}

#[test]
fn psi_exact_anchor_values() {
    let s = toy();
    for t in 1..=2 {
        let st = s.stage(t);
        let psi = Psi::<FieldElement>::new(&st.lambda, &st.eps);
        let lp = &st.lambda * &FieldElement::phi();
        assert_eq!(psi.value(&FieldElement::inv_phi()), &lp / &(FieldElement::one() + &lp));
        assert_eq!(psi.value(&FieldElement::zero()), FieldElement::zero());
        assert_eq!(psi.eval(&FieldElement::zero()).1, FieldElement::one());
        assert_eq!(psi.eval(&FieldElement::one()).1, FieldElement::one());
        assert_eq!(psi.eval(&FieldElement::inv_phi()).1, FieldElement::one());
    }
}

#[test]
fn psi_derivative_band() {
    let s = toy();
    for t in 1..=2 {
        let st = s.stage(t);
        let l2 = st.lambda.to_f64().powi(2);
        let psi = Psi::<f64>::new(&st.lambda, &st.eps);
        for i in 0..=10_000 {
            let d = psi.eval(&(i as f64 / 1e4)).1;
            assert!(d > 1.0 / l2 && d < l2, "t={t} i={i} d={d}");
        }
    }
}

#[test]
fn unit_lambda_psi_is_identity() {
    let psi = Psi::<FieldElement>::new(&FieldElement::one(), &fe(1, 64));
    for k in 0..=20 {
        let z = fe(k, 20);
        assert_eq!(psi.value(&z), z);
    }
}

#[test]
fn partition_is_preserved() {
    let c = Circle::<FieldElement>::new(&base_case_schedule());
    for e in [GoldenInt::ZERO, GoldenInt::inv_phi_pow(2), GoldenInt::inv_phi_pow(1)] {
        for n in 0..=c.max_depth() {
            assert_eq!(c.eval_point(n, &Pt::golden(e)).unwrap().value, e.to_field(), "n={n}");
        }
    }
}

#[test]
fn stages_fix_cylinder_images() {
    let c = Circle::<FieldElement>::new(&base_case_schedule());
    for n in 1..=13 {
        for cy in enumerate_cylinders(n) {
            for e in [cy.lo, cy.hi] {
                if e == GoldenInt::ONE {
                    continue;
                }
                let y = c.eval_point(n - 1, &Pt::golden(e)).unwrap().value;
                assert_eq!(c.stage_map(n, &y).unwrap(), y, "n={n} e={e:?}");
                assert_eq!(c.eval_point(n, &Pt::golden(e)).unwrap().value, y);
            }
        }
    }
}

#[test]
fn first_stage_is_scaled_psi_on_j1() {
    let s = base_case_schedule();
    let c = Circle::<FieldElement>::new(&s);
    let st = s.stage(1);
    let psi = Psi::<FieldElement>::new(&st.lambda, &st.eps);
    let (lo, hi) = partition_interval(1);
    let len = (hi - lo).to_field();
    for k in 0..10 {
        let x = &len * &fe(k, 10);
        let want = &len * &psi.value(&fe(k, 10));
        if s.stage_kind(1).unwrap() == StageKind::Identity {
            assert_eq!(c.eval_h(1, &x).unwrap().0, x);
        } else {
            assert_eq!(c.eval_h(1, &x).unwrap().0, want);
        }
    }
}

#[test]
fn stage_contraction() {
    let s = toy();
    let c = toy_f64();
    for i in 0..10_000 {
        let x = (i as f64 + 0.5) / 1e4;
        let tr = c.trace(s.big_n(2), &x).unwrap();
        for n in 1..tr.len() {
            let bound = std::f64::consts::E * 1.6f64.powi(-(n as i32));
            assert!((tr[n] - tr[n - 1]).abs() <= bound, "x={x} n={n}");
        }
    }
}

#[test]
fn correction_is_mass_proportional() {
    let s = base_case_schedule();
    let c = Circle::<FieldElement>::new(&s);
    let (m1, n2) = (s.big_m(1), s.big_n(2));
    for cy in enumerate_cylinders(n2) {
        let w = cy.word.prefix(m1);
        let parent = golden_anosov::symbolic::cylinder_of(&w).unwrap();
        let h = |e: GoldenInt| {
            if e == GoldenInt::ONE {
                FieldElement::one()
            } else {
                c.eval_point(m1, &Pt::golden(e)).unwrap().value
            }
        };
        let (a, b) = (h(cy.lo), h(cy.hi));
        let (pa, pb) = (h(parent.lo), h(parent.hi));
        let lhs = (&b - &a) / (&pb - &pa);
        assert_eq!(lhs, cy.length().to_field() / parent.length().to_field());
    }
}

#[test]
fn correction_derivative_is_flat() {
    let s = toy();
    let c = toy_f64();
    let delta = 1.0 / 64.0;
    for t in 1..=2 {
        let m = s.big_m(t);
        if m > c.max_depth() {
            continue;
        }
        for i in 0..10_000 {
            let x = (i as f64 + 0.5) / 1e4;
            let r = c.eval_h(m, &x).unwrap().1 / c.eval_h(m - 1, &x).unwrap().1;
            assert!(r.ln().abs() <= delta, "t={t} x={x}");
        }
    }
}

#[test]
fn golden_proportion_travels_off_collars() {
    let s = base_case_schedule();
    let c = Circle::<FieldElement>::new(&s);
    let inv_phi = FieldElement::inv_phi();
    let mut checked = 0;
    let mut collars: HashMap<Word, Vec<(FieldElement, FieldElement)>> = HashMap::new();
    for n in s.big_m(1) + 1..=s.big_n(2) {
        for cy in enumerate_cylinders(n) {
            let hit = (s.big_m(1) + 1..n).any(|k| {
                let u = cy.word.prefix(k);
                let bad = collars.entry(u.clone()).or_insert_with(|| c.bad_set(k, &u).unwrap().intervals);
                bad.iter().any(|(p, q)| *p < cy.hi_field() && *q > cy.lo_field())
            });
            if hit {
                continue;
            }
            let xi = cy.lo_field() + &inv_phi * &cy.length().to_field();
            let h = |x: &FieldElement| c.eval_h(n - 1, x).unwrap().0;
            let top = if cy.hi == GoldenInt::ONE { FieldElement::one() } else { h(&cy.hi_field()) };
            let lo = h(&cy.lo_field());
            assert_eq!((h(&xi) - &lo) / (top - &lo), inv_phi, "n={n} {}", cy.word);
            checked += 1;
        }
    }
    assert!(checked > 100, "{checked}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn h_is_increasing(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 0usize..=38) {
        prop_assume!(x < y);
        let c = base_f64();
        prop_assert!(c.eval_h(n, &x).unwrap().0 < c.eval_h(n, &y).unwrap().0);
    }

    #[test]
    fn inverse_round_trip(x in 0.0f64..1.0, n in 0usize..=38) {
        let c = base_f64();
        let y = c.eval_h(n, &x).unwrap().0;
        prop_assert!((c.invert(n, &y).unwrap() - x).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_difference_quotient(x in 0.01f64..0.99) {
        let c = toy_f64();
        let n = 23;
        let h = 1e-7;
        let (v, d) = c.eval_h(n, &x).unwrap();
        let fd = (c.eval_h(n, &(x + h)).unwrap().0 - v) / h;
        prop_assert!((fd - d).abs() < 1e-3, "{} {}", fd, d);
    }

    #[test]
    fn psi_inverse_round_trip(z in 0.0f64..1.0, t in 1usize..=2) {
        let st = toy().stage(t);
        let psi = Psi::<f64>::new(&st.lambda, &st.eps);
        prop_assert!((psi.inverse(&psi.value(&z)) - z).abs() < 1e-12);
    }
}

use golden_anosov::density::*;
use golden_anosov::markov::cylinder_mass;
use golden_anosov::schedule::{base_case_schedule, toy_schedule, Schedule};
use golden_anosov::symbolic::enumerate_cylinders;
use golden_anosov::{FieldElement, GoldenInt};
use proptest::prelude::*;
use std::sync::OnceLock;

fn base() -> &'static Schedule {
    static S: OnceLock<Schedule> = OnceLock::new();
    S.get_or_init(base_case_schedule)
}

fn base_density() -> &'static Density<f64> {
    static D: OnceLock<Density<f64>> = OnceLock::new();
    D.get_or_init(|| Density::new(base()))
}

#[test]
fn affine_construction_realizes_mu_plus() {
    let s = base();
    let spec = s.measure_circle();
    let d = Density::<FieldElement>::new(s);
    let c0 = d.circle(0);
    for n in 1..=s.big_n(2) {
        for cy in enumerate_cylinders(n) {
            let mass = c0.endpoint_image(cy.hi) - c0.endpoint_image(cy.lo);
            assert_eq!(mass, cylinder_mass(&spec, &cy.word, 0), "{}", cy.word);
            let cdf = mu_plus_cdf_exact(&spec, n, cy.lo).unwrap();
            assert_eq!(cdf, c0.endpoint_image(cy.lo));
        }
    }
}

#[test]
fn cylinder_averages_form_a_martingale_exactly() {
    let s = base();
    let d = Density::<FieldElement>::new(s);
    for cy in enumerate_cylinders(s.big_n(1)) {
        let a1 = d.cylinder_average(1, cy.lo, cy.hi).unwrap();
        let a2 = d.cylinder_average(2, cy.lo, cy.hi).unwrap();
        assert_eq!(a1, a2, "{}", cy.word);
    }
    assert_eq!(d.expectation(1).unwrap(), FieldElement::one());
    assert_eq!(d.expectation(2).unwrap(), FieldElement::one());
}

#[test]
fn toy_martingale_in_floating_point() {
    let s = toy_schedule();
    let d = Density::<f64>::new(&s);
    let tol = 2f64.powi(-40);
    for cy in enumerate_cylinders(s.big_n(1)) {
        let a1 = d.cylinder_average(1, cy.lo, cy.hi).unwrap();
        let a2 = d.cylinder_average(2, cy.lo, cy.hi).unwrap();
        assert!((a1 - a2).abs() <= tol);
    }
    for t in 1..=2 {
        assert!((d.expectation(t).unwrap() - 1.0).abs() <= tol);
    }
}

#[test]
fn tail_table_is_monotone() {
    let d = base_density();
    let grid = [0.5, 0.9, 1.0, 1.01, 1.1, 2.0, 4.0];
    let ui = d.ui_diagnostic(2, &grid, 4).unwrap();
    assert!(ui.monotone);
    assert_eq!(ui.rows.len(), grid.len());
    assert!(ui.rows[0].sup <= 1.0 + 1e-12);
    assert_eq!(ui.rows.last().unwrap().sup, 0.0);
    assert!(d.ui_diagnostic(1, &grid, 0).is_err());
}

#[test]
fn z_rejects_bad_arguments() {
    let d = base_density();
    assert!(d.z_eval(0, &0.3).is_err());
    assert!(d.z_eval(3, &0.3).is_err());
    assert!(d.z_eval(1, &GoldenInt::inv_phi_pow(2).to_f64()).is_err());
}

proptest! {
    #[test]
    fn z_routes_agree(x in 0.0f64..1.0, t in 1usize..=2) {
        let z = base_density().z_eval(t, &x);
        prop_assume!(z.is_ok());
        let z = z.unwrap();
        prop_assert!(z.direct > 0.0);
        prop_assert!((z.direct - z.telescoping).abs() <= 1e-12 * z.direct);
    }

    #[test]
    fn cdf_is_monotone(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let spec = base().measure_circle();
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        let fa = mu_plus_cdf(&spec, 12, &a).unwrap();
        let fb = mu_plus_cdf(&spec, 12, &b).unwrap();
        prop_assert!(fa <= fb + 1e-15);
        prop_assert!((0.0..=1.0).contains(&fa));
    }
}

use golden_anosov::markov::lattice_f;
use golden_anosov::FieldElement;
use golden_anosov::schedule::*;

const PHI: f64 = 1.618_033_988_749_895;

// f^{-1}(r) evaluated directly in floating point.
fn lambda_oracle(theta: f64, a: u32) -> f64 {
    let r = theta.powi(a as i32);
    r / ((1.0 + PHI) - PHI * r)
}

fn layout(s: &Schedule) -> Vec<(usize, usize, usize, usize)> {
    s.stages.iter().map(|t| (t.n, t.big_n, t.m, t.big_m)).collect()
}

#[test]
fn base_case_frozen_values() {
    let s = base_case_schedule();
    assert_eq!(s.theta, FieldElement::one() + FieldElement::from_ratio(1, 256));
    assert_eq!(layout(&s), vec![(2, 3, 3, 6), (7, 13, 26, 39)]);
    assert_eq!(s.stage(1).eps, FieldElement::from_ratio(1, 32));
    assert_eq!(s.stage(2).eps, FieldElement::from_ratio(1, 128));
    assert_eq!(s.max_depth(), 38);
    let frozen = [2.0756228230006446e-2, 1.0291743671145825e-2];
    for (t, want) in frozen.iter().enumerate() {
        let got = s.stage(t + 1).lambda.to_f64() - 1.0;
        assert!((got - want).abs() < 1e-15, "stage {} lambda", t + 1);
        let oracle = lambda_oracle(1.0 + 1.0 / 256.0, 1 << (1 - t)) - 1.0;
        assert!((got - oracle).abs() < 1e-12);
    }
    assert!((s.stage(2).eps_bounds.collar - 0.034441853748633025).abs() < 1e-15);
    assert!(s.all_passed(), "{:?}", s.failures());
}

#[test]
fn toy_frozen_values() {
    let s = toy_schedule();
    assert_eq!(s.theta, FieldElement::one() + FieldElement::from_ratio(1, 1 << 18));
    assert_eq!(layout(&s), vec![(10, 11, 5, 16), (7, 23, 16, 39)]);
    assert_eq!(s.stage(1).eps, FieldElement::from_ratio(1, 256));
    assert_eq!(s.stage(2).eps, FieldElement::from_ratio(1, 128));
    assert_eq!(s.big_n(2), 23);
    let frozen = [1.997429886935187e-5, 9.987068741557081e-6];
    for (t, want) in frozen.iter().enumerate() {
        let got = s.stage(t + 1).lambda.to_f64() - 1.0;
        assert!((got - want).abs() < 1e-18);
        let oracle = lambda_oracle(1.0 + 2f64.powi(-18), 1 << (1 - t)) - 1.0;
        assert!((got - oracle).abs() < 1e-14);
    }
    assert!(s.all_passed(), "{:?}", s.failures());
}

#[test]
fn lambdas_sit_on_the_lattice() {
    let s = toy_schedule();
    let (a, b) = (&s.stage(1).lambda, &s.stage(2).lambda);
    assert_eq!(lattice_f(b).pow(2), lattice_f(a));
    assert_eq!(lattice_f(b), s.theta);
}

#[test]
fn psi_slopes_are_reciprocal_pair() {
    // a/phi + b/phi^2 = 1 and a/b = lambda
    let l = FieldElement::from_ratio(21, 20);
    let (a, b) = psi_slopes(&l);
    assert_eq!(&a / &b, l);
    let phi = FieldElement::phi();
    assert_eq!(&a / &phi + &b / &phi.pow(2), FieldElement::one());
}

#[test]
fn json_round_trip() {
    let s = toy_schedule();
    let back = Schedule::from_json(&s.to_json()).unwrap();
    assert_eq!(back.theta, s.theta);
    assert_eq!(layout(&back), layout(&s));
    assert_eq!(back.to_json(), s.to_json());
    assert!(Schedule::from_json("{").is_err());
}

#[test]
fn strict_single_stage() {
    let s = build_schedule(1, &Profile::Strict, None).unwrap();
    assert_eq!(s.big_n(1), 21);
    assert_eq!(layout(&s), vec![(20, 21, 50, 71)]);
    assert!(s.all_passed(), "{:?}", s.failures());
    let band = |name: &str| s.certificates.iter().find(|c| c.name == name).map(|c| c.value);
    if let (Some(lo), Some(hi)) = (band("derivative_band_lower"), band("derivative_band_upper")) {
        assert!(lo >= 1.6 && hi <= 1.7);
    }
}

#[test]
fn degenerate_requests_are_rejected() {
    assert!(build_schedule(0, &Profile::toy(), None).is_err());
    assert!(build_with_theta(1, &Profile::toy(), &FieldElement::one()).is_err());
}

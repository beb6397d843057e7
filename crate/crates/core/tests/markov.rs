use golden_anosov::markov::*;
use golden_anosov::schedule::base_case_schedule;
use golden_anosov::symbolic::{cylinder_of, enumerate_words, successors, Word};
use golden_anosov::FieldElement;
use proptest::prelude::*;

fn power_iteration(p: [[f64; 3]; 3]) -> [f64; 3] {
    let mut v = [1.0 / 3.0; 3];
    for _ in 0..2000 {
        v = std::array::from_fn(|j| (0..3).map(|i| v[i] * p[i][j]).sum());
    }
    v
}

#[test]
fn stationary_law_closed_form() {
    let s5 = FieldElement::sqrt5();
    let want = [
        s5.inv().unwrap(),
        (&FieldElement::phi() * &s5).inv().unwrap(),
        (&FieldElement::phi() * &s5).inv().unwrap(),
    ];
    assert_eq!(stationary(&matrix_q()).unwrap(), want);
    let float = power_iteration(matrix_q().to_real());
    for i in 0..3 {
        assert!((float[i] - want[i].to_f64()).abs() < 1e-12);
    }
}

#[test]
fn tilted_stationary_matches_power_iteration() {
    for (n, d) in [(1, 1), (17, 16), (5, 4), (3, 1)] {
        let q = matrix_q_lambda(&FieldElement::from_ratio(n, d)).unwrap();
        let exact = stationary(&q).unwrap();
        let float = power_iteration(q.to_real());
        for i in 0..3 {
            assert!((float[i] - exact[i].to_f64()).abs() < 1e-12, "lambda = {n}/{d}");
        }
    }
}

#[test]
fn lebesgue_masses_are_lengths() {
    let spec = MeasureSpec::lebesgue(0);
    for n in 1..=10 {
        for w in enumerate_words(n) {
            let c = cylinder_of(&w).unwrap();
            assert_eq!(cylinder_mass(&spec, &w, 0), c.length().to_field(), "{w}");
        }
    }
}

fn spec() -> &'static MeasureSpec {
    static S: std::sync::OnceLock<MeasureSpec> = std::sync::OnceLock::new();
    S.get_or_init(|| base_case_schedule().measure_stationary())
}

fn word(max: usize) -> impl Strategy<Value = Word> {
    (1usize..max, any::<u64>()).prop_map(|(n, seed)| {
        let mut s = vec![[1u8, 2, 3][(seed % 3) as usize]];
        let mut r = seed / 3;
        while s.len() < n {
            let next = successors(*s.last().unwrap());
            s.push(next[(r % next.len() as u64) as usize]);
            r = r / 2 + 5;
        }
        Word::new(s).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masses_are_additive(w in word(16), k in 0i64..30) {
        let spec = spec();
        let parent = cylinder_mass(spec, &w, k);
        let total = successors(w.last())
            .iter()
            .map(|&s| cylinder_mass(spec, &w.extended(s).unwrap(), k))
            .fold(FieldElement::zero(), |a, b| a + b);
        prop_assert_eq!(total, parent);
    }

    #[test]
    fn marginals_are_consistent(n in 1i64..60) {
        let spec = spec();
        for r in spec.consistency_residual(n) {
            prop_assert!(r.is_zero());
        }
    }

    #[test]
    fn mixing_certificate_brackets_ratios(num in 1i64..8) {
        let lambda = FieldElement::from_ratio(8 + num, 8);
        let q = matrix_q_lambda(&lambda).unwrap();
        let delta = FieldElement::from_ratio(1, 10);
        let cert = mixing_time::<f64>(&q, &delta, 500).unwrap();
        prop_assert!(cert.min_ratio >= 0.9 - 1e-12 && cert.max_ratio <= 1.1 + 1e-12);
    }
}

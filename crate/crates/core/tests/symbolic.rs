use golden_anosov::symbolic::*;
use golden_anosov::{FieldElement, GoldenInt};
use proptest::prelude::*;

fn word(max: usize) -> impl Strategy<Value = Word> {
    (1usize..max, any::<u64>()).prop_map(|(n, seed)| {
        let mut s = vec![[1u8, 2, 3][(seed % 3) as usize]];
        let mut r = seed / 3;
        while s.len() < n {
            let next = successors(*s.last().unwrap());
            s.push(next[(r % next.len() as u64) as usize]);
            r = r / 2 + 7;
        }
        Word::new(s).unwrap()
    })
}

#[test]
fn cylinders_tile_the_circle_to_depth_twelve() {
    for n in 1..=12 {
        let cs = enumerate_cylinders(n);
        assert_eq!(cs[0].lo, GoldenInt::ZERO);
        assert_eq!(cs.last().unwrap().hi, GoldenInt::ONE);
        for pair in cs.windows(2) {
            assert_eq!(pair[0].hi, pair[1].lo, "gap at depth {n}");
            assert!(precede(&pair[0].word, &pair[1].word));
        }
        let total = cs.iter().fold(GoldenInt::ZERO, |a, c| a + c.length());
        assert_eq!(total, GoldenInt::ONE);
    }
}

#[test]
fn partition_lengths() {
    let phi = FieldElement::phi();
    let l = |s| {
        let (a, b) = partition_interval(s);
        (b - a).to_field()
    };
    assert_eq!(l(1), phi.pow(2).inv().unwrap());
    assert_eq!(l(2), phi.pow(2).inv().unwrap());
    assert_eq!(l(3), phi.pow(3).inv().unwrap());
}

proptest! {
    #[test]
    fn children_split_parent(w in word(30)) {
        let c = cylinder_of(&w).unwrap();
        let kids = c.children();
        prop_assert_eq!(kids.first().unwrap().lo, c.lo);
        prop_assert_eq!(kids.last().unwrap().hi, c.hi);
        for pair in kids.windows(2) {
            prop_assert_eq!(pair[0].hi, pair[1].lo);
        }
    }

    #[test]
    fn length_scales_with_depth(w in word(40)) {
        // |C_w| = phi^{-(n-1)} |J_{w_n}|
        let c = cylinder_of(&w).unwrap();
        let (a, b) = partition_interval(w.last());
        let mut want = b - a;
        for _ in 1..w.len() {
            want = want.div_phi();
        }
        prop_assert_eq!(c.length(), want);
    }

    #[test]
    fn itinerary_contains_point(x in 0.0f64..1.0, n in 1usize..30) {
        let steps = itinerary(&x, n);
        prop_assert_eq!(steps.len(), n);
        for c in &steps {
            prop_assert!(c.contains(&x));
        }
    }

    #[test]
    fn order_matches_position(a in word(14), b in word(14)) {
        let n = a.len().min(b.len());
        let (a, b) = (a.prefix(n), b.prefix(n));
        prop_assume!(a != b);
        let (ca, cb) = (cylinder_of(&a).unwrap(), cylinder_of(&b).unwrap());
        prop_assert_eq!(precede(&a, &b), ca.lo < cb.lo);
    }
}

#[test]
fn coupling_sides_have_equal_length() {
    for j in 1..=30 {
        let v = coupling_segment(j);
        assert_eq!(&v.upper.hi - &v.upper.lo, &v.lower.hi - &v.lower.lo, "j = {j}");
        assert_eq!(v.upper.word.len(), v.lower.word.len());
    }
}

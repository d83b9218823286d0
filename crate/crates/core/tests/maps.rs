use num_traits::{One, Zero};
use oselab::catalog::{self, ninths_map, Family};
use oselab::interval_maps::{PiecewiseAffineMap, Rational};
use proptest::prelude::*;

fn catalogue() -> Vec<PiecewiseAffineMap> {
    let mut all = Family::T1to6.maps();
    all.extend(Family::S1to6.maps());
    all.push(catalog::seed_map());
    all
}

#[test]
fn every_map_is_a_three_to_one_markov_map() {
    let third = Rational::new(1, 3);
    for t in catalogue() {
        let p = t.pf_matrix().unwrap();
        assert!(p.column_sums().iter().all(|s| s.is_one()));
        for j in 0..9 {
            assert_eq!(t.markov_image(j).unwrap().len(), 3);
            let col = (0..9).filter(|&i| p.get(i, j) == third).count();
            let row = (0..9).filter(|&i| p.get(j, i) == third).count();
            assert_eq!((col, row), (3, 3));
            assert!((0..9).all(|i| p.get(i, j) == third || p.get(i, j).is_zero()));
        }
    }
}

#[test]
fn first_rotated_seed_is_first_triple_map() {
    let s1 = catalog::s_map(1).unwrap();
    let t1 = catalog::t_map(1).unwrap();
    for k in 0..81 {
        let x = Rational::new(k, 81);
        assert_eq!(s1.evaluate(x).unwrap(), t1.evaluate(x).unwrap(), "x = {x}");
    }
}

#[test]
fn first_triple_map_values() {
    let t1 = catalog::t_map(1).unwrap();
    assert_eq!(t1.evaluate(Rational::zero()).unwrap(), Rational::new(1, 3));
    assert_eq!(t1.evaluate(Rational::new(1, 9)).unwrap(), Rational::new(4, 9));
}

fn rational_vector() -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec((-30i64..=30, 1i64..=12), 9)
        .prop_map(|v| v.into_iter().map(|(n, d)| Rational::new(n, d)).collect())
}

fn interior_point() -> impl Strategy<Value = (usize, Rational)> {
    (0usize..9, 2i64..40).prop_flat_map(|(cell, q)| {
        (Just(cell), 1..q).prop_map(move |(cell, p)| {
            (cell, (Rational::from_integer(cell as i64) + Rational::new(p, q)) / Rational::from_integer(9))
        })
    })
}

proptest! {
    #[test]
    fn matrix_agrees_with_preimage_sum(
        which in 0usize..13,
        v in rational_vector(),
        (cell, x) in interior_point(),
    ) {
        let t = &catalogue()[which];
        let pv = t.pf_matrix().unwrap().apply(&v);
        prop_assert_eq!(t.transfer_at(&v, x).unwrap(), pv[cell]);
    }

    #[test]
    fn lebesgue_invariance_matches_preimage_measure(offsets in prop::array::uniform9(0i64..9)) {
        let t = ninths_map(&offsets);
        let ones = vec![Rational::one(); 9];
        let pointwise = (0..9).all(|i| {
            let x = (Rational::from_integer(i as i64) + Rational::new(1, 2)) / Rational::from_integer(9);
            t.transfer_at(&ones, x).unwrap().is_one()
        });
        prop_assert_eq!(t.preserves_lebesgue().unwrap(), pointwise);
        let p = t.pf_matrix().unwrap();
        prop_assert!(p.column_sums().iter().all(|s| s.is_one()));
    }
}

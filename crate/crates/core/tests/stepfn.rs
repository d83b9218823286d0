use oselab::catalog::Family;
use oselab::interval_maps::{Rational, UniformPartition};
use oselab::stepfn::StepFunction;
use proptest::prelude::*;

proptest! {
    #[test]
    fn transfer_keeps_density_mass(which in 0usize..6, values in prop::collection::vec(0i64..50, 9)) {
        let pf = &Family::T1to6.pf_matrices()[which];
        let exact: Vec<Rational> = values.iter().map(|&v| Rational::from_integer(v)).collect();
        let image: Vec<f64> = pf.apply(&exact).iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        let f = StepFunction::new(UniformPartition::ninths(), values.iter().map(|&v| v as f64).collect()).unwrap();
        let pf_f = StepFunction::new(UniformPartition::ninths(), image).unwrap();
        prop_assert!((f.l1_norm() - pf_f.l1_norm()).abs() < 1e-12 * (1.0 + f.l1_norm()));
    }

    #[test]
    fn variation_dominates_l1_off_the_coarse_grid(factor in 2usize..6, values in prop::collection::vec(-100.0f64..100.0, 45)) {
        let cells = 9 * factor;
        let fine = UniformPartition::ninths().refine(factor);
        let f = StepFunction::new(fine, values[..cells.min(45)].iter().copied().cycle().take(cells).collect()).unwrap();
        let q = f.project_q(&UniformPartition::ninths()).unwrap().refine(factor);
        let g = f.sub(&q).unwrap();
        prop_assert!(g.variation() + 1e-9 >= g.l1_norm());
    }
}

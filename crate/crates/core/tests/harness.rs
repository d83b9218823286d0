use oselab::met::{self, backward_singular_check, HarnessOptions, RandomCocycleSpec};
use oselab::oseledets::{PushOptions, Pushforward};

#[test]
fn multiplicities_do_not_depend_on_the_base() {
    for seed in 0..5 {
        let c = met::generate(&RandomCocycleSpec::graded(5, 3, 1, 1.0, 0.25, seed)).unwrap();
        let e = Pushforward::new(&c, PushOptions::balanced(30).with_flag_projection(true)).unwrap();
        let first = e.approximate(0).unwrap().multiplicities();
        for base in 1..6 {
            assert_eq!(e.approximate(base).unwrap().multiplicities(), first, "seed {seed}");
        }
    }
}

#[test]
fn forward_and_backward_top_rates_agree() {
    for seed in 0..5 {
        let c = met::generate(&RandomCocycleSpec::graded(4, 3, 1, 1.0, 0.25, seed)).unwrap();
        let t = backward_singular_check(&c, &[64, 256, 1024], 0).unwrap();
        let back = t.rows.last().unwrap().exponents[0].value();
        assert!((back - t.forward[0].value()).abs() < 1e-2, "seed {seed}: {t:?}");
    }
}

#[test]
fn reports_are_reproducible_json_lines() {
    let c = met::generate(&RandomCocycleSpec::graded(3, 2, 1, 1.0, 0.25, 9)).unwrap();
    let opts = HarnessOptions::new(PushOptions::balanced(30).with_flag_projection(true), 2);
    let a = met::verify_splitting(&c, &opts);
    let b = met::verify_splitting(&c, &opts);
    assert_eq!(a.json_lines(), b.json_lines());
    assert!(a.passed(), "{:?}", a.failures().collect::<Vec<_>>());
    for line in a.json_lines().lines() {
        let e: met::ReportEntry = serde_json::from_str(line).unwrap();
        assert!(["dimensions", "direct_sum", "equivariance", "growth_rate"].contains(&e.property.as_str()));
    }
}

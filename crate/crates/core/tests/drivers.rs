use oselab::drivers::{lift_h_inverse, pi_fraction_bits, BitSource, Driver, ShiftRule};
use proptest::prelude::*;

#[test]
fn omega_star_classes_follow_complemented_pi_digits() {
    let rule = ShiftRule::six_symbol();
    let omega = Driver::omega_star();
    let digits = pi_fraction_bits(400);
    let symbols = omega.window(0, 201).unwrap();
    let classes = rule.h(&symbols).unwrap();
    for (i, c) in classes.iter().enumerate() {
        // digit number i + 120 of π, complemented
        assert_eq!(*c, 1 - digits[i + 119], "index {i}");
    }
}

#[test]
fn lifting_classes_reproduces_the_driver() {
    let rule = ShiftRule::six_symbol();
    let omega = Driver::omega_star();
    let start = -150i64;
    let window = omega.window(start, 301).unwrap();
    let bits = rule.h(&window).unwrap();
    let anchor = omega.symbol_at(0).unwrap();
    let lift = lift_h_inverse(rule, BitSource::Listed { bits, origin: start }, 0, anchor).unwrap();
    let again = Driver::Sft(lift).window(start, 301).unwrap();
    assert_eq!(again, window);
}

proptest! {
    #[test]
    fn windows_are_admissible(start in -400i64..400, len in 1usize..60) {
        let rule = ShiftRule::six_symbol();
        let w = Driver::omega_star().window(start, len).unwrap();
        prop_assert!(rule.is_admissible(&w));
    }

    #[test]
    fn lifts_of_random_bits_are_admissible(bits in prop::collection::vec(0u8..=1, 1..80), anchor in 1usize..=6) {
        let rule = ShiftRule::six_symbol();
        let class = rule.class_of(anchor).unwrap();
        let mut bits = bits;
        bits[0] = class;
        let n = bits.len();
        let lift = lift_h_inverse(rule.clone(), BitSource::Listed { bits: bits.clone(), origin: 0 }, 0, anchor).unwrap();
        let w = Driver::Sft(lift).window(0, n).unwrap();
        prop_assert!(rule.is_admissible(&w));
        prop_assert_eq!(rule.h(&w).unwrap(), bits);
    }
}

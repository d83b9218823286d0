use std::sync::OnceLock;

use num_traits::Zero;
use oselab::catalog::Family;
use oselab::cocycle::Exponent;
use oselab::defaults;
use oselab::drivers::ShiftRule;
use oselab::experiments::{self, random_admissible_word, Check, Experiment, ExperimentOptions, Reproduction};
use oselab::interval_maps::{PiecewiseAffineMap, Rational, UniformPartition};
use oselab::met::{self, multiset_distance, qr_exponent_oracle, HarnessOptions, RandomCocycleSpec};
use oselab::oseledets::PushOptions;
use oselab::stepfn::{decay_check, ExactStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reproduction(which: Experiment) -> &'static Reproduction {
    static CELLS: [OnceLock<Reproduction>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match which {
        Experiment::Thm1 => &CELLS[0],
        Experiment::Thm2 => &CELLS[1],
        Experiment::Sec7 => &CELLS[2],
    };
    slot.get_or_init(|| experiments::run(which, &ExperimentOptions::default()).expect("pipeline runs"))
}

fn checks(which: Experiment, names: &[&str]) -> Vec<&'static Check> {
    let r = reproduction(which);
    names
        .iter()
        .map(|n| r.check(n).unwrap_or_else(|| panic!("missing check {n}")))
        .collect()
}

fn report(criterion: u32, pass: bool, line: String) {
    println!("criterion {criterion}: {} {line}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {line}");
}

fn report_checks(criterion: u32, list: &[&Check]) {
    let pass = list.iter().all(|c| c.pass);
    let line = list
        .iter()
        .map(|c| format!("{}={:.6e} (tol {:.0e})", c.name, c.value, c.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    report(criterion, pass, line);
}

#[test]
fn criterion_01_autonomous_spectra() {
    report_checks(
        1,
        &checks(
            Experiment::Thm1,
            &["spectrum.P1", "spectrum.P2", "spectrum.P3", "spectrum.P3.complex_pair"],
        ),
    );
}

#[test]
fn criterion_02_seed_spectrum() {
    report_checks(2, &checks(Experiment::Thm2, &["spectrum.PS"]));
}

#[test]
fn criterion_03_period_three_roots() {
    let list = checks(
        Experiment::Thm1,
        &["thm1.root2", "thm1.root3", "thm1.eigenvalue_form"],
    );
    println!("  {}", list[2].detail);
    report_checks(3, &list);
}

#[test]
fn criterion_04_mass_ratios() {
    let mut list = checks(Experiment::Thm1, &["mass_ratio.T1", "mass_ratio.T2", "mass_ratio.T3"]);
    list.extend(checks(Experiment::Thm2, &["mass_ratio.S"]));
    report_checks(4, &list);
}

#[test]
fn criterion_05_rotation_cancellation() {
    report_checks(
        5,
        &checks(Experiment::Thm2, &["thm2.cancellation", "thm2.rotation_indices"]),
    );
}

#[test]
fn criterion_06_pi_digits() {
    report_checks(6, &checks(Experiment::Sec7, &["sec7.pi_bits", "sec7.omega_star"]));
}

#[test]
fn criterion_07_gram_root_second_eigenvalue() {
    report_checks(
        7,
        &checks(Experiment::Sec7, &["sec7.lambda2", "sec7.exponent_vs_thm2"]),
    );
}

#[test]
fn criterion_08_delta_sweep() {
    report_checks(8, &checks(Experiment::Sec7, &["sec7.delta", "sec7.delta_trend"]));
}

#[test]
fn criterion_09_pushforward_period_three() {
    report_checks(9, &checks(Experiment::Thm1, &["thm1.pushforward_w2"]));
}

#[test]
fn criterion_10_pushforward_rotated_seed() {
    report_checks(
        10,
        &checks(
            Experiment::Thm2,
            &["thm2.closed_form", "thm2.depends_on_first_symbol"],
        ),
    );
}

#[test]
fn criterion_11_random_splittings() {
    let push = PushOptions::balanced(40).with_flag_projection(true);
    let mut failures = Vec::new();
    let mut worst_oracle = 0.0f64;
    for seed in 0..20u64 {
        let d = 2 + (seed % 5) as usize;
        let spec = RandomCocycleSpec::graded(d, 3, 1, 1.0, 0.25, seed);
        let cocycle = met::generate(&spec).unwrap();
        let mut opts = HarnessOptions::new(push, 3);
        opts.seed = seed;
        let splitting = met::verify_splitting(&cocycle, &opts);
        failures.extend(
            splitting
                .failures()
                .map(|e| format!("seed {seed} base {} {}: {:.3e}", e.base, e.property, e.value)),
        );
        let gram: Vec<Exponent> = cocycle.gram_root(4096, 0).unwrap().exponents();
        let qr = qr_exponent_oracle(&cocycle, 4096, 0, defaults::RANK_TOL).unwrap();
        let dist = multiset_distance(&gram, &qr);
        worst_oracle = worst_oracle.max(dist);
        if dist > defaults::ORACLE_TOL {
            failures.push(format!("seed {seed} oracle {dist:.3e}"));
        }
    }
    report(
        11,
        failures.is_empty(),
        format!(
            "20 cocycles, worst QR distance {worst_oracle:.3e} (tol {:.0e}), failures {failures:?}",
            defaults::ORACLE_TOL
        ),
    );
}

fn random_in_f(cells: usize, rng: &mut ChaCha8Rng) -> ExactStep {
    let fine = UniformPartition::ninths().refine(cells / 9);
    let r = cells / 9;
    let mut values = Vec::with_capacity(cells);
    for _ in 0..9 {
        let mut sum = 0i64;
        for _ in 0..r - 1 {
            let v = rng.random_range(-20..=20);
            sum += v;
            values.push(Rational::from_integer(v));
        }
        values.push(Rational::from_integer(-sum));
    }
    ExactStep::new(fine, &values).unwrap()
}

#[test]
fn criterion_12_variation_decay() {
    const N: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rule = ShiftRule::six_symbol();
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for family in [Family::T123, Family::S, Family::S1to6, Family::T1to6] {
        let maps = family.maps();
        for trial in 0..50 {
            let word: Vec<usize> = match family.len() {
                6 => random_admissible_word(&rule, N, &mut rng),
                k => (0..N).map(|_| rng.random_range(1..=k)).collect(),
            };
            let seq: Vec<&PiecewiseAffineMap> = word.iter().map(|&s| &maps[s - 1]).collect();
            let f = random_in_f(9 * 3usize.pow(N as u32), &mut rng);
            for step in decay_check(&f, &seq, N).unwrap() {
                checked += 1;
                if !step.holds() {
                    failures.push(format!("{family} trial {trial} n {}", step.n));
                }
            }
        }
    }
    let zero = ExactStep::new(
        UniformPartition::ninths().refine(3),
        &vec![Rational::zero(); 27],
    )
    .unwrap();
    let t = Family::T123.maps();
    assert!(decay_check(&zero, &[&t[0]], 1).unwrap()[0].measured.is_zero());
    report(
        12,
        failures.is_empty(),
        format!("{checked} exact (f, n) pairs, failures {failures:?}"),
    );
}

#[test]
fn criterion_13_coherence() {
    let list = checks(Experiment::Sec7, &["sec7.coherence", "sec7.j_sequence"]);
    report_checks(13, &list);
}

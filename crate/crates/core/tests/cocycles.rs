use nalgebra::DMatrix;
use oselab::catalog::Family;
use oselab::cocycle::{spectrum_of_pf, Exponent, MatrixCocycle};
use oselab::drivers::Driver;
use proptest::prelude::*;

fn drivers() -> Vec<(Family, Driver)> {
    vec![
        (Family::T1to6, Driver::omega_star()),
        (Family::S1to6, Driver::omega_star()),
        (Family::T1to6, Driver::iid(6, 11).unwrap()),
        (Family::T123, Driver::periodic(vec![1, 2, 3]).unwrap()),
        (Family::T123, Driver::iid(3, 5).unwrap()),
    ]
}

proptest! {
    #[test]
    fn products_compose(which in 0usize..5, m in 0usize..=12, n in 0usize..=12, base in -30i64..30) {
        let (family, driver) = drivers().swap_remove(which);
        let c = MatrixCocycle::from_pf_matrices(&family.pf_matrices(), driver).unwrap();
        let whole = c.product(m + n, base).unwrap();
        let split = c.product(m, base + n as i64).unwrap() * c.product(n, base).unwrap();
        prop_assert!((whole - split).amax() < 1e-12);
    }
}

#[test]
fn stochastic_products_keep_unit_columns_and_top_exponent_zero() {
    for (family, driver) in drivers() {
        let c = MatrixCocycle::from_pf_matrices(&family.pf_matrices(), driver).unwrap();
        let p = c.product(40, -7).unwrap();
        let sums = DMatrix::from_element(1, 9, 1.0) * &p;
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let top = c.lyapunov_spectrum(40, 0, 1e-6).unwrap().exponents[0];
        assert!(top.value().abs() < 1e-3, "{family}: {top:?}");
    }
}

#[test]
fn autonomous_period_exponents_are_log_moduli() {
    for (i, pf) in Family::T123.pf_matrices().iter().enumerate() {
        let symbol = i + 1;
        let c = MatrixCocycle::from_pf_matrices(&Family::T123.pf_matrices(), Driver::periodic(vec![symbol]).unwrap()).unwrap();
        let periodic = c.periodic_exponents().unwrap();
        let spec = spectrum_of_pf(pf);
        for (e, m) in periodic.exponents.iter().zip(&spec.moduli) {
            match e {
                Exponent::Finite(x) => assert!((x - m.ln()).abs() < 1e-12),
                Exponent::NegInfinity => assert_eq!(*m, 0.0),
            }
        }
    }
}

#[test]
fn period_three_spectrum_settles_with_depth() {
    let c = MatrixCocycle::from_pf_matrices(&Family::T123.pf_matrices(), Driver::periodic(vec![1, 2, 3]).unwrap()).unwrap();
    let top3 = |m: usize| -> Vec<f64> {
        let raw = c.gram_root(m, 0).unwrap().exponents();
        raw[..3].iter().map(|e| e.value()).collect()
    };
    let change = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> = [12, 24, 48, 96].iter().map(|&m| top3(m)).collect();
    // bias shrinks like 1/M
    for w in rows.windows(3) {
        assert!(change(&w[1], &w[2]) < 0.75 * change(&w[0], &w[1]), "{rows:?}");
    }
    let exact: Vec<f64> = c.periodic_exponents().unwrap().exponents[..3].iter().map(|e| e.value()).collect();
    assert!(change(&top3(3000), &exact) < 1e-3);
}

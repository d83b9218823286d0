//! Finite-depth checks of the Oseledets splitting on random cocycles, with
//! an exponent oracle that shares no code with the Gram-root path.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cocycle::{CocycleError, Exponent, MatrixCocycle};
use crate::defaults;
use crate::drivers::Driver;
use crate::linalg::GradedProduct;
use crate::oseledets::{equivariance_residual, OseledetsApproximation, Pushforward, PushOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("{singular} singular generators requested out of {generators}")]
    TooManySingular { singular: usize, generators: usize },
    #[error("need at least one generator")]
    NoGenerators,
    #[error("entry bounds [{low}, {high}] are empty or not finite")]
    BadBounds { low: f64, high: f64 },
    #[error("grading must be finite and nonnegative, got {0}")]
    BadGrading(f64),
    #[error("depths must be nonempty and increasing")]
    BadDepths,
    #[error("cocycle: {0}")]
    Cocycle(#[from] CocycleError),
}

/// Recipe for a seeded random cocycle over an i.i.d. two-sided driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomCocycleSpec {
    pub dimension: usize,
    pub generators: usize,
    /// The first `singular` generators are projected to rank `d − 1`.
    pub singular: usize,
    pub entry_low: f64,
    pub entry_high: f64,
    /// When positive, generators are `(I + U)·diag(e^{−grading·i})` with `U`
    /// drawn in the bounds; otherwise the entries themselves are drawn.
    #[serde(default)]
    pub grading: f64,
    pub seed: u64,
}

impl RandomCocycleSpec {
    pub fn new(dimension: usize, generators: usize, singular: usize, seed: u64) -> Self {
        Self {
            dimension,
            generators,
            singular,
            entry_low: -1.0,
            entry_high: 1.0,
            grading: 0.0,
            seed,
        }
    }

    /// Separated exponents: `(I + U)·diag(e^{−grading·i})`, `U` in `±spread`.
    pub fn graded(dimension: usize, generators: usize, singular: usize, grading: f64, spread: f64, seed: u64) -> Self {
        Self {
            dimension,
            generators,
            singular,
            entry_low: -spread,
            entry_high: spread,
            grading,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), MetError> {
        if self.dimension < 2 {
            return Err(MetError::DimensionTooSmall(self.dimension));
        }
        if self.generators == 0 {
            return Err(MetError::NoGenerators);
        }
        if self.singular > self.generators {
            return Err(MetError::TooManySingular {
                singular: self.singular,
                generators: self.generators,
            });
        }
        if !(self.entry_low.is_finite() && self.entry_high.is_finite() && self.entry_low < self.entry_high) {
            return Err(MetError::BadBounds {
                low: self.entry_low,
                high: self.entry_high,
            });
        }
        if !(self.grading.is_finite() && self.grading >= 0.0) {
            return Err(MetError::BadGrading(self.grading));
        }
        Ok(())
    }
}

/// Draws the generator table and the driver from `spec.seed`.
pub fn generate(spec: &RandomCocycleSpec) -> Result<MatrixCocycle, MetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dimension;
    let generators = (0..spec.generators)
        .map(|k| {
            let mut m = DMatrix::from_fn(d, d, |_, _| rng.random_range(spec.entry_low..spec.entry_high));
            if spec.grading > 0.0 {
                m += DMatrix::identity(d, d);
                for (i, mut col) in m.column_iter_mut().enumerate() {
                    col *= (-spec.grading * i as f64).exp();
                }
            }
            if k < spec.singular {
                let mut svd = m.svd(true, true);
                let (i, _) = svd.singular_values.argmin();
                svd.singular_values[i] = 0.0;
                svd.recompose().expect("both factors computed")
            } else {
                m
            }
        })
        .collect();
    let driver = Driver::iid(spec.generators, spec.seed.rotate_left(17) ^ 0x5eed)
        .expect("generators > 0");
    Ok(MatrixCocycle::new(generators, driver)?)
}

/// Exponents from repeated QR of a pushed orthonormal frame.
///
/// A frame column whose pushed residual falls below `rank_tol · ‖A‖` is
/// dropped for good and reported as `−∞`.
pub fn qr_exponent_oracle(
    cocycle: &MatrixCocycle,
    n_steps: usize,
    base: i64,
    rank_tol: f64,
) -> Result<Vec<Exponent>, MetError> {
    let d = cocycle.dim();
    let mut frame = DMatrix::<f64>::identity(d, d);
    let mut sums = vec![0.0f64; d];
    let mut alive: Vec<usize> = (0..d).collect();
    for k in 0..n_steps as i64 {
        let a = cocycle.step_matrix(base + k)?;
        let limit = rank_tol * a.norm();
        loop {
            if alive.is_empty() {
                break;
            }
            let z = a * &frame;
            let qr = z.clone().qr();
            let r = qr.r();
            match (0..alive.len()).find(|&i| r[(i, i)].abs() <= limit) {
                Some(i) => {
                    alive.remove(i);
                    frame = frame.remove_column(i);
                }
                None => {
                    for (i, &slot) in alive.iter().enumerate() {
                        sums[slot] += r[(i, i)].abs().ln();
                    }
                    frame = qr.q();
                    break;
                }
            }
        }
    }
    let mut out: Vec<Exponent> = (0..d)
        .map(|slot| {
            if alive.contains(&slot) {
                Exponent::Finite(sums[slot] / n_steps as f64)
            } else {
                Exponent::NegInfinity
            }
        })
        .collect();
    out.sort_by(|a, b| b.partial_cmp(a).expect("total order"));
    Ok(out)
}

/// Tolerances and sizes for [`verify_splitting`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub push: PushOptions,
    /// First base of the window.
    pub start: i64,
    /// Number of bases checked.
    pub window: usize,
    /// Length of the growth-rate orbit.
    pub growth_steps: usize,
    pub seed: u64,
    pub equivariance_tol: f64,
    pub condition_tol: f64,
    pub growth_tol: f64,
}

impl HarnessOptions {
    pub fn new(push: PushOptions, window: usize) -> Self {
        Self {
            push,
            start: 0,
            window,
            growth_steps: 60,
            seed: 0,
            equivariance_tol: defaults::EQUIVARIANCE_TOL,
            condition_tol: defaults::DIRECT_SUM_COND,
            growth_tol: defaults::GROWTH_TOL,
        }
    }
}

/// One (base, property) verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub base: i64,
    pub property: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub entries: Vec<ReportEntry>,
}

impl SplittingReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn property(&self, name: &str) -> impl Iterator<Item = &ReportEntry> {
        let name = name.to_string();
        self.entries.iter().filter(move |e| e.property == name)
    }

    pub fn json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain data") + "\n")
            .collect()
    }
}

/// Oblique projector onto group `j` along the other groups.
fn oblique_projector(approx: &OseledetsApproximation, j: usize) -> Option<DMatrix<f64>> {
    let stacked = approx.stacked();
    let inv = stacked.clone().try_inverse()?;
    let offset: usize = approx.groups[..j].iter().map(|g| g.multiplicity).sum();
    let m = approx.groups[j].multiplicity;
    Some(stacked.columns(offset, m) * inv.rows(offset, m))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Growth slopes of a random unit vector of group `j`, kept in the group by
/// re-projection at every step, and of the group's log singular values of
/// `A⁽ᵏ⁾(ω)`; both least-squares over `k ∈ [n/3, n]`.
fn growth_rate(
    engine: &Pushforward<'_>,
    approx: &[OseledetsApproximation],
    j: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), String> {
    let first = &approx[0];
    let offset: usize = first.groups[..j].iter().map(|g| g.multiplicity).sum();
    let m = first.groups[j].multiplicity;
    let basis = first.groups[j].basis.matrix();
    let coeffs = DVector::from_fn(basis.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let mut v = basis * coeffs;
    v /= v.norm();
    let n = approx.len() - 1;
    let mut product = GradedProduct::identity(engine.cocycle().dim(), engine.options().gram.rank_tol);
    let mut log_norm = 0.0;
    let (mut xs, mut ys, mut zs) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..n {
        let a = engine
            .cocycle()
            .step_matrix(first.base + k as i64)
            .map_err(|e| e.to_string())?;
        product.push(a);
        let mut w = a * &v;
        let next = &approx[k + 1];
        if next.multiplicities() == first.multiplicities() {
            if let Some(p) = oblique_projector(next, j) {
                w = p * w;
            }
        }
        let norm = w.norm();
        if norm == 0.0 {
            return Err(format!("vector annihilated at step {}", k + 1));
        }
        log_norm += norm.ln();
        v = w / norm;
        if 3 * (k + 1) >= n {
            let logs = product.svd().log_singular_values;
            xs.push((k + 1) as f64);
            ys.push(log_norm);
            zs.push(logs[offset..offset + m].iter().sum::<f64>() / m as f64);
        }
    }
    Ok((slope(&xs, &ys), slope(&xs, &zs)))
}

fn entry(base: i64, property: &str, pass: bool, value: f64, tolerance: f64, detail: String) -> ReportEntry {
    ReportEntry {
        base,
        property: property.to_string(),
        pass,
        value,
        tolerance,
        detail,
    }
}

/// Checks dimensions, direct sum, equivariance and growth rates of the
/// push-forward splitting over a window of bases.
pub fn verify_splitting(cocycle: &MatrixCocycle, options: &HarnessOptions) -> SplittingReport {
    let mut entries = Vec::new();
    let engine = match Pushforward::new(cocycle, options.push) {
        Ok(e) => e,
        Err(err) => {
            entries.push(entry(options.start, "setup", false, f64::NAN, 0.0, err.to_string()));
            return SplittingReport { entries };
        }
    };
    let d = cocycle.dim();
    let span = options.window + options.growth_steps.max(1);
    let mut approx: Vec<Option<OseledetsApproximation>> = Vec::with_capacity(span + 1);
    for k in 0..=span as i64 {
        match engine.approximate(options.start + k) {
            Ok(a) => approx.push(Some(a)),
            Err(err) => {
                if (k as usize) < options.window {
                    entries.push(entry(options.start + k, "pushforward", false, f64::NAN, 0.0, err.to_string()));
                }
                approx.push(None);
            }
        }
    }
    let reference = approx.iter().flatten().next().map(|a| a.multiplicities());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for k in 0..options.window {
        let base = options.start + k as i64;
        let Some(here) = &approx[k] else { continue };
        let m = here.multiplicities();
        let total: usize = m.iter().sum();
        let stable = reference.as_ref() == Some(&m);
        entries.push(entry(
            base,
            "dimensions",
            total == d && stable,
            total as f64,
            d as f64,
            format!("multiplicities {m:?}"),
        ));
        let cond = here.direct_sum_condition();
        entries.push(entry(
            base,
            "direct_sum",
            cond < options.condition_tol,
            cond,
            options.condition_tol,
            "condition number of stacked bases".to_string(),
        ));
        match &approx[k + 1] {
            Some(next) => match equivariance_residual(here, next, cocycle) {
                Ok(res) => {
                    let worst = res.iter().copied().fold(0.0, f64::max);
                    entries.push(entry(
                        base,
                        "equivariance",
                        worst < options.equivariance_tol,
                        worst,
                        options.equivariance_tol,
                        format!("per group {res:?}"),
                    ));
                }
                Err(err) => entries.push(entry(base, "equivariance", false, f64::NAN, options.equivariance_tol, err.to_string())),
            },
            None => entries.push(entry(base, "equivariance", false, f64::NAN, options.equivariance_tol, "no approximation at next base".to_string())),
        }
        let orbit: Option<Vec<OseledetsApproximation>> =
            approx[k..=k + options.growth_steps].iter().cloned().collect();
        let Some(orbit) = orbit else {
            entries.push(entry(base, "growth_rate", false, f64::NAN, options.growth_tol, "orbit incomplete".to_string()));
            continue;
        };
        for (j, g) in here.groups.iter().enumerate() {
            let Exponent::Finite(lambda) = g.exponent else {
                entries.push(entry(base, "growth_rate", true, 0.0, options.growth_tol, format!("group {} is -inf", j + 1)));
                continue;
            };
            match growth_rate(&engine, &orbit, j, &mut rng) {
                Ok((rate, singular)) => {
                    let err = (rate - singular).abs();
                    entries.push(entry(
                        base,
                        "growth_rate",
                        err < options.growth_tol,
                        err,
                        options.growth_tol,
                        format!(
                            "group {}: slope {rate} vs singular slope {singular}, exponent {lambda}",
                            j + 1
                        ),
                    ));
                }
                Err(msg) => entries.push(entry(base, "growth_rate", false, f64::NAN, options.growth_tol, msg)),
            }
        }
    }
    SplittingReport { entries }
}

/// Backward singular exponents at several depths, against the forward
/// Gram-root exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardTable {
    pub rows: Vec<BackwardRow>,
    pub forward: Vec<Exponent>,
    /// Sup distance between the last row and `forward`.
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardRow {
    pub depth: usize,
    pub exponents: Vec<Exponent>,
    /// Sup distance to the previous row (absent on the first).
    pub change: Option<f64>,
}

/// `max_i |a_i − b_i|` over sorted multisets; `−∞` must match `−∞`.
pub fn multiset_distance(a: &[Exponent], b: &[Exponent]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Exponent::Finite(p), Exponent::Finite(q)) => (p - q).abs(),
            (Exponent::NegInfinity, Exponent::NegInfinity) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

pub fn backward_singular_check(
    cocycle: &MatrixCocycle,
    depths: &[usize],
    base: i64,
) -> Result<BackwardTable, MetError> {
    if depths.is_empty() || depths.windows(2).any(|w| w[0] >= w[1]) || depths[0] == 0 {
        return Err(MetError::BadDepths);
    }
    let mut rows: Vec<BackwardRow> = Vec::with_capacity(depths.len());
    for &n in depths {
        let g = cocycle.graded_product(n, base - n as i64, defaults::RANK_TOL)?;
        let exponents: Vec<Exponent> = g
            .svd()
            .log_singular_values
            .iter()
            .map(|&l| Exponent::from_log(l / n as f64))
            .collect();
        let change = rows.last().map(|r| multiset_distance(&r.exponents, &exponents));
        rows.push(BackwardRow {
            depth: n,
            exponents,
            change,
        });
    }
    let last = *depths.last().expect("nonempty");
    let forward = cocycle.gram_root(last, base)?.exponents();
    let final_distance = multiset_distance(&rows.last().expect("nonempty").exponents, &forward);
    Ok(BackwardTable {
        rows,
        forward,
        final_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_validation() {
        assert!(RandomCocycleSpec::new(1, 1, 0, 0).validate().is_err());
        assert!(RandomCocycleSpec::new(3, 1, 2, 0).validate().is_err());
        let mut s = RandomCocycleSpec::new(3, 2, 1, 0);
        s.entry_high = -2.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = RandomCocycleSpec::new(4, 2, 1, 99);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.generators(), b.generators());
        assert_eq!(a.driver().window(-20, 40).unwrap(), b.driver().window(-20, 40).unwrap());
        assert!(a.generators()[0].determinant().abs() < 1e-12);
        assert!(a.generators()[1].determinant().abs() > 1e-6);
    }

    #[test]
    fn oracle_on_simple_cocycles() {
        let id = MatrixCocycle::new(vec![DMatrix::identity(3, 3)], Driver::periodic(vec![1]).unwrap()).unwrap();
        let e = qr_exponent_oracle(&id, 10, 0, 1e-10).unwrap();
        assert!(e.iter().all(|x| x.value() == 0.0));
        let diag = MatrixCocycle::new(
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0])],
            Driver::periodic(vec![1]).unwrap(),
        )
        .unwrap();
        let e = qr_exponent_oracle(&diag, 50, 0, 1e-10).unwrap();
        assert_relative_eq!(e[0].value(), 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(e[1].value(), -(2f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn oracle_drops_annihilated_directions() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let c = MatrixCocycle::new(vec![p], Driver::periodic(vec![1]).unwrap()).unwrap();
        let e = qr_exponent_oracle(&c, 5, 0, 1e-10).unwrap();
        assert_eq!(e, vec![Exponent::Finite(0.0), Exponent::NegInfinity]);
    }

    #[test]
    fn autonomous_backward_equals_forward() {
        let g = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.2, 0.4]);
        let c = MatrixCocycle::new(vec![g], Driver::periodic(vec![1]).unwrap()).unwrap();
        let t = backward_singular_check(&c, &[5, 10, 20], 3).unwrap();
        assert!(t.final_distance < 1e-12);
        assert!(backward_singular_check(&c, &[10, 5], 0).is_err());
    }

    #[test]
    fn annihilating_pair_is_vacuous() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let c = MatrixCocycle::new(vec![p, q], Driver::periodic(vec![1, 2]).unwrap()).unwrap();
        let mut opts = HarnessOptions::new(PushOptions::balanced(4), 3);
        opts.growth_steps = 6;
        let report = verify_splitting(&c, &opts);
        assert!(report.passed(), "{}", report.json_lines());
        let dims: Vec<_> = report.property("dimensions").collect();
        assert_eq!(dims[0].detail, "multiplicities [2]");
    }
}

//! Matrix cocycles over a driver: products, Gram roots, Lyapunov spectra.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::defaults;
use crate::drivers::{Driver, DriverError, Symbol};
use crate::interval_maps::{MapError, PfMatrix, PiecewiseAffineMap};
use crate::linalg::{exact_eigenvalues, GradedProduct, ProductSvd, RationalMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocycleError {
    #[error("a cocycle needs at least one generator")]
    EmptyGenerators,
    #[error("generator {symbol} is {rows}x{cols}, expected {expected}x{expected}")]
    DimensionMismatch {
        symbol: Symbol,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("driver emits symbol {symbol} but only {available} generators exist")]
    MissingGenerator { symbol: Symbol, available: usize },
    #[error("driver: {0}")]
    Driver(#[from] DriverError),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("operation needs a periodic driver")]
    NotPeriodic,
    #[error("map {index} does not have a constant absolute slope")]
    ConstantSlopeRequired { index: usize },
    #[error("cocycle has no exact generators")]
    NoExactGenerators,
    #[error("depth must be at least 1")]
    ZeroDepth,
}

/// A Lyapunov exponent, possibly `−∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    NegInfinity,
}

impl Exponent {
    pub fn from_log(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            Exponent::NegInfinity
        } else {
            Exponent::Finite(x)
        }
    }

    /// The value as a float, `−∞` included.
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Finite(x) => *x,
            Exponent::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Exponent::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Exponent::Finite(x) => Some(*x),
            Exponent::NegInfinity => None,
        }
    }

    /// `e^λ`, with `e^{−∞} = 0`.
    pub fn growth_factor(&self) -> f64 {
        self.value().exp()
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.value().total_cmp(&other.value()))
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(x) => write!(f, "{x}"),
            Exponent::NegInfinity => f.write_str("-inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(x) => serializer.serialize_f64(*x),
            Exponent::NegInfinity => serializer.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(x) => Ok(Exponent::Finite(x)),
            Repr::Text(t) if t == "-inf" => Ok(Exponent::NegInfinity),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

/// Splits a descending list into plateaus. Consecutive finite values `a > b`
/// are separated when `a − b > gap_tol · max(1, |a|)`; all `−∞` values form
/// one plateau.
pub fn group_exponents(values: &[Exponent], gap_tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        let split = k == values.len()
            || match (values[k - 1], values[k]) {
                (Exponent::Finite(a), Exponent::Finite(b)) => a - b > gap_tol * a.abs().max(1.0),
                (Exponent::NegInfinity, Exponent::NegInfinity) => false,
                _ => true,
            };
        if split {
            groups.push(start..k);
            start = k;
        }
    }
    groups
}

fn plateau_value(values: &[Exponent]) -> Exponent {
    let finite: Vec<f64> = values.iter().filter_map(|e| e.finite()).collect();
    if finite.is_empty() {
        Exponent::NegInfinity
    } else {
        Exponent::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

/// Grouped Lyapunov exponent estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// One value per plateau, strictly decreasing.
    pub exponents: Vec<Exponent>,
    pub multiplicities: Vec<usize>,
    /// Gram depth `M`.
    pub depth: usize,
    pub base: i64,
    /// Every estimate before grouping, descending.
    pub raw: Vec<Exponent>,
}

impl LyapunovEstimate {
    pub fn from_raw(raw: Vec<Exponent>, gap_tol: f64, depth: usize, base: i64) -> Self {
        let groups = group_exponents(&raw, gap_tol);
        Self {
            exponents: groups.iter().map(|g| plateau_value(&raw[g.clone()])).collect(),
            multiplicities: groups.iter().map(|g| g.len()).collect(),
            depth,
            base,
            raw,
        }
    }

    pub fn dimension(&self) -> usize {
        self.multiplicities.iter().sum()
    }
}

/// Eigenvalues sorted by descending modulus, with modulus plateaus.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub moduli: Vec<f64>,
    /// `log|η|` per plateau.
    pub exponents: Vec<Exponent>,
    pub multiplicities: Vec<usize>,
}

impl SpectrumReport {
    /// Groups moduli that differ by at most `tol`.
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex64>, tol: f64) -> Self {
        eigenvalues.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(b.re.total_cmp(&a.re))
                .then(b.im.total_cmp(&a.im))
        });
        let moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
        let mut exponents = Vec::new();
        let mut multiplicities = Vec::new();
        let mut k = 0;
        while k < moduli.len() {
            let mut end = k + 1;
            while end < moduli.len() && moduli[end - 1] - moduli[end] <= tol {
                end += 1;
            }
            let mean = moduli[k..end].iter().sum::<f64>() / (end - k) as f64;
            exponents.push(if mean <= tol {
                Exponent::NegInfinity
            } else {
                Exponent::Finite(mean.ln())
            });
            multiplicities.push(end - k);
            k = end;
        }
        Self {
            eigenvalues,
            moduli,
            exponents,
            multiplicities,
        }
    }
}

impl Serialize for SpectrumReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct C {
            re: f64,
            im: f64,
        }
        let mut s = serializer.serialize_struct("SpectrumReport", 4)?;
        let eig: Vec<C> = self
            .eigenvalues
            .iter()
            .map(|z| C { re: z.re, im: z.im })
            .collect();
        s.serialize_field("eigenvalues", &eig)?;
        s.serialize_field("moduli", &self.moduli)?;
        s.serialize_field("exponents", &self.exponents)?;
        s.serialize_field("multiplicities", &self.multiplicities)?;
        s.end()
    }
}

/// Spectrum of a PF matrix from its exact characteristic polynomial.
pub fn spectrum_of_pf(pf: &PfMatrix) -> SpectrumReport {
    spectrum_of_exact(&pf.to_exact())
}

pub fn spectrum_of_exact(m: &RationalMatrix) -> SpectrumReport {
    SpectrumReport::from_eigenvalues(exact_eigenvalues(m), defaults::SPECTRUM_GROUP_TOL)
}

/// Spectrum of a float matrix (Schur form; no exactness).
pub fn spectrum_of_matrix(m: &DMatrix<f64>) -> SpectrumReport {
    let eig: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    SpectrumReport::from_eigenvalues(eig, defaults::SPECTRUM_GROUP_TOL)
}

/// Knobs for the Gram root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramOptions {
    /// Relative residual below which a pushed direction counts as annihilated.
    pub rank_tol: f64,
    /// Ψ eigenvalues below this are reported as 0.
    pub floor: f64,
}

impl Default for GramOptions {
    fn default() -> Self {
        Self {
            rank_tol: defaults::RANK_TOL,
            floor: defaults::UNDERFLOW_FLOOR,
        }
    }
}

/// `Ψ⁽ᴹ⁾ = (A⁽ᴹ⁾ᵀ A⁽ᴹ⁾)^{1/2M}` in factored form.
#[derive(Debug, Clone)]
pub struct GramRoot {
    pub depth: usize,
    pub base: i64,
    pub svd: ProductSvd,
    pub floor: f64,
}

impl GramRoot {
    /// Eigenvalues `σ_i^{1/M}`, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.exponents().iter().map(|e| e.growth_factor()).collect()
    }

    /// `log σ_i / M`, descending.
    pub fn exponents(&self) -> Vec<Exponent> {
        let m = self.depth as f64;
        self.svd
            .log_singular_values
            .iter()
            .map(|&l| {
                let e = l / m;
                if e.exp() < self.floor {
                    Exponent::NegInfinity
                } else {
                    Exponent::from_log(e)
                }
            })
            .collect()
    }

    /// Eigenvectors of Ψ as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.svd.right_vectors
    }

    /// The symmetric matrix Ψ.
    pub fn matrix(&self) -> DMatrix<f64> {
        let v = &self.svd.right_vectors;
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues()));
        v * d * v.transpose()
    }

    pub fn estimate(&self, gap_tol: f64) -> LyapunovEstimate {
        LyapunovEstimate::from_raw(self.exponents(), gap_tol, self.depth, self.base)
    }
}

/// Generators indexed by symbol, driven by a [`Driver`].
#[derive(Debug, Clone)]
pub struct MatrixCocycle {
    generators: Vec<DMatrix<f64>>,
    exact: Option<Vec<RationalMatrix>>,
    driver: Driver,
}

impl MatrixCocycle {
    /// `generators[s − 1]` acts when the driver reads `s`.
    pub fn new(generators: Vec<DMatrix<f64>>, driver: Driver) -> Result<Self, CocycleError> {
        let first = generators.first().ok_or(CocycleError::EmptyGenerators)?;
        let d = first.nrows();
        for (k, g) in generators.iter().enumerate() {
            if g.nrows() != d || g.ncols() != d {
                return Err(CocycleError::DimensionMismatch {
                    symbol: k + 1,
                    rows: g.nrows(),
                    cols: g.ncols(),
                    expected: d,
                });
            }
        }
        if driver.alphabet_size() > generators.len() {
            return Err(CocycleError::MissingGenerator {
                symbol: driver.alphabet_size(),
                available: generators.len(),
            });
        }
        Ok(Self {
            generators,
            exact: None,
            driver,
        })
    }

    pub fn from_exact(generators: Vec<RationalMatrix>, driver: Driver) -> Result<Self, CocycleError> {
        let floats = generators.iter().map(|g| g.to_f64()).collect();
        let mut c = Self::new(floats, driver)?;
        c.exact = Some(generators);
        Ok(c)
    }

    pub fn from_pf_matrices(pfs: &[PfMatrix], driver: Driver) -> Result<Self, CocycleError> {
        Self::from_exact(pfs.iter().map(|p| p.to_exact()).collect(), driver)
    }

    pub fn from_maps(maps: &[PiecewiseAffineMap], driver: Driver) -> Result<Self, CocycleError> {
        let pfs = maps
            .iter()
            .map(|t| t.pf_matrix())
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_pf_matrices(&pfs, driver)
    }

    /// Same generators, different driver.
    pub fn with_driver(&self, driver: Driver) -> Result<Self, CocycleError> {
        let mut c = Self::new(self.generators.clone(), driver)?;
        c.exact = self.exact.clone();
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.generators[0].nrows()
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn generator(&self, symbol: Symbol) -> Result<&DMatrix<f64>, CocycleError> {
        symbol
            .checked_sub(1)
            .and_then(|k| self.generators.get(k))
            .ok_or(CocycleError::MissingGenerator {
                symbol,
                available: self.generators.len(),
            })
    }

    /// `A(σⁱω) = P_{ω_i}`.
    pub fn step_matrix(&self, i: i64) -> Result<&DMatrix<f64>, CocycleError> {
        self.generator(self.driver.symbol_at(i)?)
    }

    /// `A⁽ⁿ⁾(σ^{base}ω) = A(σ^{base+n−1}ω) ⋯ A(σ^{base}ω)`.
    pub fn product(&self, n: usize, base: i64) -> Result<DMatrix<f64>, CocycleError> {
        let d = self.dim();
        let mut p = DMatrix::identity(d, d);
        for k in 0..n as i64 {
            p = self.step_matrix(base + k)? * p;
        }
        Ok(p)
    }

    /// Exact product over ℚ.
    pub fn exact_product(&self, n: usize, base: i64) -> Result<RationalMatrix, CocycleError> {
        let exact = self.exact.as_ref().ok_or(CocycleError::NoExactGenerators)?;
        let mut p = RationalMatrix::identity(self.dim());
        for k in 0..n as i64 {
            let s = self.driver.symbol_at(base + k)?;
            p = exact[s - 1].mul(&p);
        }
        Ok(p)
    }

    /// The product in log-scaled factored form.
    pub fn graded_product(
        &self,
        n: usize,
        base: i64,
        rank_tol: f64,
    ) -> Result<GradedProduct, CocycleError> {
        let mut g = GradedProduct::identity(self.dim(), rank_tol);
        for k in 0..n as i64 {
            g.push(self.step_matrix(base + k)?);
        }
        Ok(g)
    }

    pub fn gram_root(&self, depth: usize, base: i64) -> Result<GramRoot, CocycleError> {
        self.gram_root_with(depth, base, &GramOptions::default())
    }

    pub fn gram_root_with(
        &self,
        depth: usize,
        base: i64,
        options: &GramOptions,
    ) -> Result<GramRoot, CocycleError> {
        if depth == 0 {
            return Err(CocycleError::ZeroDepth);
        }
        let g = self.graded_product(depth, base, options.rank_tol)?;
        Ok(GramRoot {
            depth,
            base,
            svd: g.svd(),
            floor: options.floor,
        })
    }

    /// Logs of the Gram-root eigenvalues, grouped into plateaus.
    pub fn lyapunov_spectrum(
        &self,
        depth: usize,
        base: i64,
        gap_tol: f64,
    ) -> Result<LyapunovEstimate, CocycleError> {
        Ok(self.gram_root(depth, base)?.estimate(gap_tol))
    }

    /// `log|η| / R` for the eigenvalues `η` of the period product.
    pub fn periodic_exponents(&self) -> Result<PeriodicSpectrum, CocycleError> {
        let r = self.driver.period().ok_or(CocycleError::NotPeriodic)?;
        let report = match &self.exact {
            Some(_) => spectrum_of_exact(&self.exact_product(r, 0)?),
            None => spectrum_of_matrix(&self.product(r, 0)?),
        };
        let exponents = report
            .moduli
            .iter()
            .map(|&m| {
                if m == 0.0 {
                    Exponent::NegInfinity
                } else {
                    Exponent::Finite(m.ln() / r as f64)
                }
            })
            .collect();
        Ok(PeriodicSpectrum {
            period: r,
            spectrum: report,
            exponents,
        })
    }
}

/// Exponents of a periodic cocycle from the period product.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicSpectrum {
    pub period: usize,
    pub spectrum: SpectrumReport,
    /// One per eigenvalue, descending.
    pub exponents: Vec<Exponent>,
}

/// Finite exponents strictly inside `(theta, 0)`, with `margin` of slack at
/// both ends.
pub fn exceptional_exponents(exponents: &[Exponent], theta: f64, margin: f64) -> Vec<f64> {
    exponents
        .iter()
        .filter_map(|e| e.finite())
        .filter(|&x| x > theta + margin && x < -margin)
        .collect()
}

/// Maps driven by a symbol sequence, used where slopes matter.
#[derive(Debug, Clone)]
pub struct MapCocycle {
    maps: Vec<PiecewiseAffineMap>,
    driver: Driver,
}

impl MapCocycle {
    pub fn new(maps: Vec<PiecewiseAffineMap>, driver: Driver) -> Result<Self, CocycleError> {
        if maps.is_empty() {
            return Err(CocycleError::EmptyGenerators);
        }
        if driver.alphabet_size() > maps.len() {
            return Err(CocycleError::MissingGenerator {
                symbol: driver.alphabet_size(),
                available: maps.len(),
            });
        }
        Ok(Self { maps, driver })
    }

    pub fn maps(&self) -> &[PiecewiseAffineMap] {
        &self.maps
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn map_at(&self, i: i64) -> Result<&PiecewiseAffineMap, CocycleError> {
        let s = self.driver.symbol_at(i)?;
        Ok(&self.maps[s - 1])
    }

    /// `−(1/n) Σ log s_{ω_k}` over `base..base+n`.
    pub fn essential_bound(&self, n_window: usize, base: i64) -> Result<f64, CocycleError> {
        if n_window == 0 {
            return Err(CocycleError::ZeroDepth);
        }
        let mut total = 0.0;
        for k in 0..n_window as i64 {
            let s = self.driver.symbol_at(base + k)?;
            let slope = self.maps[s - 1]
                .constant_abs_slope()
                .ok_or(CocycleError::ConstantSlopeRequired { index: s })?;
            total += (*slope.numer() as f64 / *slope.denom() as f64).ln();
        }
        Ok(-total / n_window as f64)
    }

    pub fn to_matrix_cocycle(&self) -> Result<MatrixCocycle, CocycleError> {
        MatrixCocycle::from_maps(&self.maps, self.driver.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grouping_rule() {
        let v = [
            Exponent::Finite(0.0),
            Exponent::Finite(-0.5),
            Exponent::Finite(-0.5 - 1e-9),
            Exponent::NegInfinity,
            Exponent::NegInfinity,
        ];
        assert_eq!(group_exponents(&v, 1e-6), vec![0..1, 1..3, 3..5]);
        assert!(group_exponents(&[], 1e-6).is_empty());
    }

    #[test]
    fn exponent_json() {
        let v = vec![Exponent::Finite(-0.25), Exponent::NegInfinity];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[-0.25,"-inf"]"#);
        let back: Vec<Exponent> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn empty_product_is_identity() {
        let g = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let c = MatrixCocycle::new(vec![g], Driver::periodic(vec![1]).unwrap()).unwrap();
        assert_eq!(c.product(0, 5).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn identity_cocycle_has_one_plateau() {
        let c = MatrixCocycle::new(
            vec![DMatrix::identity(4, 4)],
            Driver::periodic(vec![1]).unwrap(),
        )
        .unwrap();
        let est = c.lyapunov_spectrum(17, 0, 1e-6).unwrap();
        assert_eq!(est.multiplicities, vec![4]);
        assert_relative_eq!(est.exponents[0].value(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(c.gram_root(5, 0).unwrap().matrix(), DMatrix::identity(4, 4), epsilon = 1e-14);
    }

    #[test]
    fn depth_one_gram_root_is_absolute_value() {
        let g = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        let c = MatrixCocycle::new(vec![g.clone()], Driver::periodic(vec![1]).unwrap()).unwrap();
        assert_relative_eq!(c.gram_root(1, 0).unwrap().matrix(), g, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_exponents() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let c = MatrixCocycle::new(vec![g], Driver::periodic(vec![1]).unwrap()).unwrap();
        let p = c.periodic_exponents().unwrap();
        assert_relative_eq!(p.exponents[0].value(), 2f64.ln(), epsilon = 1e-12);
        let est = c.lyapunov_spectrum(300, 0, 1e-6).unwrap();
        assert_relative_eq!(est.exponents[1].value(), -(2f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn dimension_checks() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(3, 3);
        assert!(matches!(
            MatrixCocycle::new(vec![a.clone(), b], Driver::periodic(vec![1, 2]).unwrap()),
            Err(CocycleError::DimensionMismatch { symbol: 2, .. })
        ));
        assert!(matches!(
            MatrixCocycle::new(vec![a], Driver::periodic(vec![1, 2]).unwrap()),
            Err(CocycleError::MissingGenerator { .. })
        ));
    }

    #[test]
    fn exceptional_window() {
        let e = [
            Exponent::Finite(-1e-15),
            Exponent::Finite(-0.2),
            Exponent::Finite(-(3f64.ln())),
            Exponent::NegInfinity,
        ];
        assert_eq!(exceptional_exponents(&e, -(3f64.ln()), 1e-9), vec![-0.2]);
    }
}

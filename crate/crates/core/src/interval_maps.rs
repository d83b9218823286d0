//! Piecewise-affine expanding maps on a uniform Markov partition.
//!
//! All geometry is exact: slopes, offsets, breakpoints and images are
//! [`Rational`] values, so Markov checks and mass ratios carry no rounding.
//! Cells are right-open, `B_j = [j/M, (j+1)/M)` with 0-based `j`, and on the
//! circle the point 1 is identified with 0.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::exact::RationalMatrix;

/// Exact rational number used for all map geometry.
pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("partition must have at least one cell")]
    EmptyPartition,
    #[error("expected {expected} per-cell values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell {cell}: slope {slope} is not expanding")]
    NotExpanding { cell: usize, slope: Rational },
    #[error("point {0} lies outside [0, 1)")]
    OutOfDomain(Rational),
    #[error("cell {cell} out of range for a partition of {cells} cells")]
    CellOutOfRange { cell: usize, cells: usize },
    #[error("image of cell {cell} has endpoint {endpoint} strictly inside a cell")]
    NotMarkov { cell: usize, endpoint: Rational },
    #[error("image of cell {cell} leaves the unit interval")]
    ImageOutsideInterval { cell: usize },
    #[error("{family} has no member {index}")]
    IndexOutOfRange { family: &'static str, index: usize },
    #[error("unknown map name {0:?}")]
    UnknownName(String),
    #[error("cannot parse rational {0:?}")]
    BadRational(String),
    #[error("source cell set is empty")]
    EmptySource,
    #[error("rotation by {0} does not map cells onto cells")]
    MisalignedRotation(Rational),
    #[error("rotations are only defined on the circle")]
    NotCircle,
    #[error("partitions differ: {0} vs {1} cells")]
    PartitionMismatch(usize, usize),
}

/// Parses `"p/q"` or `"p"` into a rational.
pub fn parse_rational(text: &str) -> Result<Rational, MapError> {
    let bad = || MapError::BadRational(text.to_string());
    let text = text.trim();
    match text.split_once('/') {
        Some((num, den)) => {
            let num = i64::from_str(num.trim()).map_err(|_| bad())?;
            let den = i64::from_str(den.trim()).map_err(|_| bad())?;
            if den == 0 {
                return Err(bad());
            }
            Ok(Rational::new(num, den))
        }
        None => i64::from_str(text).map(Rational::from_integer).map_err(|_| bad()),
    }
}

fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: Rational) -> Rational {
    x - x.floor()
}

/// `M` equal cells covering `[0,1)` or the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UniformPartition {
    cells: usize,
    circle: bool,
}

impl UniformPartition {
    pub fn new(cells: usize, circle: bool) -> Result<Self, MapError> {
        if cells == 0 {
            return Err(MapError::EmptyPartition);
        }
        Ok(Self { cells, circle })
    }

    /// The nine-cell circle partition shared by every catalogue map.
    pub fn ninths() -> Self {
        Self {
            cells: 9,
            circle: true,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn is_circle(&self) -> bool {
        self.circle
    }

    pub fn width(&self) -> Rational {
        Rational::new(1, self.cells as i64)
    }

    pub fn left(&self, cell: usize) -> Rational {
        Rational::new(cell as i64, self.cells as i64)
    }

    pub fn check_cell(&self, cell: usize) -> Result<(), MapError> {
        if cell < self.cells {
            Ok(())
        } else {
            Err(MapError::CellOutOfRange {
                cell,
                cells: self.cells,
            })
        }
    }

    /// Index of the cell containing `x`.
    pub fn cell_of(&self, x: Rational) -> Result<usize, MapError> {
        if x.is_negative() || x >= Rational::one() {
            return Err(MapError::OutOfDomain(x));
        }
        Ok((x * Rational::from_integer(self.cells as i64))
            .floor()
            .to_integer() as usize)
    }

    /// The partition with every cell split into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Self {
        Self {
            cells: self.cells * factor.max(1),
            circle: self.circle,
        }
    }

    /// True when every cell of `self` lies inside one cell of `coarse`.
    pub fn refines(&self, coarse: &UniformPartition) -> bool {
        self.circle == coarse.circle && self.cells % coarse.cells == 0
    }
}

/// Expanding map that is affine with slope `a_j` and offset `c_j` on cell `j`,
/// taken mod 1 on the circle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiecewiseAffineMap {
    partition: UniformPartition,
    slopes: Vec<Rational>,
    offsets: Vec<Rational>,
}

/// 0/1 matrix with `entry(i, j) = 1` iff `T(B_j) ⊇ B_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    entries: Vec<Vec<u8>>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.entries
    }
}

/// Perron–Frobenius matrix in the cell-indicator basis: `P<v> = <Pv>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PfMatrix {
    entries: Vec<Vec<Rational>>,
}

impl PfMatrix {
    pub fn from_rows(entries: Vec<Vec<Rational>>) -> Self {
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Rational {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.entries
    }

    pub fn column_sums(&self) -> Vec<Rational> {
        let n = self.dim();
        (0..n)
            .map(|j| (0..n).map(|i| self.entries[i][j]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<Rational> {
        self.entries.iter().map(|row| row.iter().copied().sum()).collect()
    }

    /// Exact product `self · rhs`.
    pub fn mul(&self, rhs: &PfMatrix) -> PfMatrix {
        let n = self.dim();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.entries[i][k] * rhs.entries[k][j]).sum())
                    .collect()
            })
            .collect();
        PfMatrix { entries }
    }

    /// Applies the matrix to an exact vector.
    pub fn apply(&self, v: &[Rational]) -> Vec<Rational> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entries[i][j].to_f64().unwrap_or(f64::NAN))
    }

    pub fn to_exact(&self) -> RationalMatrix {
        let n = self.dim();
        RationalMatrix::from_fn(n, |i, j| {
            let r = self.entries[i][j];
            num_rational::BigRational::new((*r.numer()).into(), (*r.denom()).into())
        })
    }
}

impl PiecewiseAffineMap {
    /// Builds the map, rejecting non-expanding cells. Offsets are reduced
    /// mod 1 on the circle so equal maps compare equal.
    pub fn new(
        partition: UniformPartition,
        slopes: Vec<Rational>,
        offsets: Vec<Rational>,
    ) -> Result<Self, MapError> {
        let m = partition.cells();
        for len in [slopes.len(), offsets.len()] {
            if len != m {
                return Err(MapError::LengthMismatch {
                    expected: m,
                    got: len,
                });
            }
        }
        if let Some((cell, slope)) = slopes
            .iter()
            .enumerate()
            .find(|(_, a)| a.abs() <= Rational::one())
        {
            return Err(MapError::NotExpanding {
                cell,
                slope: *slope,
            });
        }
        let offsets = if partition.is_circle() {
            offsets.into_iter().map(frac).collect()
        } else {
            offsets
        };
        Ok(Self {
            partition,
            slopes,
            offsets,
        })
    }

    pub fn partition(&self) -> UniformPartition {
        self.partition
    }

    pub fn slopes(&self) -> &[Rational] {
        &self.slopes
    }

    pub fn offsets(&self) -> &[Rational] {
        &self.offsets
    }

    /// `|a_j|` when it is the same on every cell.
    pub fn constant_abs_slope(&self) -> Option<Rational> {
        let first = self.slopes[0].abs();
        self.slopes
            .iter()
            .all(|a| a.abs() == first)
            .then_some(first)
    }

    pub fn evaluate(&self, x: Rational) -> Result<Rational, MapError> {
        let j = self.partition.cell_of(x)?;
        let y = self.slopes[j] * x + self.offsets[j];
        Ok(if self.partition.is_circle() { frac(y) } else { y })
    }

    /// Unreduced image `[lo, hi]` of the closure of cell `j`.
    fn image_interval(&self, j: usize) -> (Rational, Rational) {
        let p = &self.partition;
        let a = self.slopes[j];
        let c = self.offsets[j];
        let y0 = a * p.left(j) + c;
        let y1 = a * (p.left(j) + p.width()) + c;
        if y0 <= y1 {
            (y0, y1)
        } else {
            (y1, y0)
        }
    }

    /// How many times the image of cell `j` covers each cell, as
    /// `(cell, count)` pairs sorted by cell.
    pub fn cover_counts(&self, j: usize) -> Result<Vec<(usize, u32)>, MapError> {
        self.partition.check_cell(j)?;
        let m = self.partition.cells() as i64;
        let scale = Rational::from_integer(m);
        let (lo, hi) = self.image_interval(j);
        for endpoint in [lo, hi] {
            if !(endpoint * scale).is_integer() {
                return Err(MapError::NotMarkov { cell: j, endpoint });
            }
        }
        let start = (lo * scale).to_integer();
        let stop = (hi * scale).to_integer();
        if !self.partition.is_circle() && (start < 0 || stop > m) {
            return Err(MapError::ImageOutsideInterval { cell: j });
        }
        let mut counts = vec![0u32; m as usize];
        for k in start..stop {
            counts[k.rem_euclid(m) as usize] += 1;
        }
        Ok(counts
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .collect())
    }

    /// Cells whose union is `T(B_j)`.
    pub fn markov_image(&self, j: usize) -> Result<BTreeSet<usize>, MapError> {
        Ok(self.cover_counts(j)?.into_iter().map(|(i, _)| i).collect())
    }

    pub fn transition_matrix(&self) -> Result<TransitionMatrix, MapError> {
        let m = self.partition.cells();
        let mut entries = vec![vec![0u8; m]; m];
        for j in 0..m {
            for i in self.markov_image(j)? {
                entries[i][j] = 1;
            }
        }
        Ok(TransitionMatrix { entries })
    }

    /// `p_{i,j} = m(T⁻¹B_i ∩ B_j) / m(B_j)`, which is `γ_{j,i}/|a_j|` for
    /// single covers.
    pub fn pf_matrix(&self) -> Result<PfMatrix, MapError> {
        let m = self.partition.cells();
        let mut entries = vec![vec![Rational::zero(); m]; m];
        for j in 0..m {
            let inv = self.slopes[j].abs().recip();
            for (i, count) in self.cover_counts(j)? {
                entries[i][j] = inv * Rational::from_integer(count as i64);
            }
        }
        Ok(PfMatrix { entries })
    }

    /// Lebesgue invariance; on a uniform partition this is "every row of the
    /// PF matrix sums to 1".
    pub fn preserves_lebesgue(&self) -> Result<bool, MapError> {
        Ok(self
            .pf_matrix()?
            .row_sums()
            .iter()
            .all(|s| s.is_one()))
    }

    /// Exact `m(U ∩ T⁻¹V) / m(U)` for unions of cells `U` (source) and `V`
    /// (target).
    pub fn invariant_mass_ratio(
        &self,
        source: &BTreeSet<usize>,
        target: &BTreeSet<usize>,
    ) -> Result<Rational, MapError> {
        if source.is_empty() {
            return Err(MapError::EmptySource);
        }
        for &c in source.iter().chain(target) {
            self.partition.check_cell(c)?;
        }
        let p = self.pf_matrix()?;
        let mass: Rational = source
            .iter()
            .flat_map(|&j| target.iter().map(move |&i| (i, j)))
            .map(|(i, j)| p.get(i, j))
            .sum();
        Ok(mass / Rational::from_integer(source.len() as i64))
    }

    /// Transfer operator applied to the step function `Σ values_j χ_{B_j}`,
    /// evaluated at `x` by summing `f(y)/|T'(y)|` over the preimages `y`.
    pub fn transfer_at(&self, values: &[Rational], x: Rational) -> Result<Rational, MapError> {
        let p = &self.partition;
        if values.len() != p.cells() {
            return Err(MapError::LengthMismatch {
                expected: p.cells(),
                got: values.len(),
            });
        }
        p.cell_of(x)?;
        let mut total = Rational::zero();
        for j in 0..p.cells() {
            let a = self.slopes[j];
            let c = self.offsets[j];
            let lo = p.left(j);
            let hi = lo + p.width();
            // a·y + c = x + k for an integer lift k (just k = 0 on the interval)
            let ks: Vec<i64> = if p.is_circle() {
                let (ilo, ihi) = self.image_interval(j);
                ((ilo - x).floor().to_integer()..=(ihi - x).ceil().to_integer()).collect()
            } else {
                vec![0]
            };
            for k in ks {
                let y = (x + Rational::from_integer(k) - c) / a;
                if y >= lo && y < hi {
                    total += values[j] / a.abs();
                }
            }
        }
        Ok(total)
    }

    /// `x ↦ T(ρ(x))`.
    pub fn pre_rotate(&self, rotation: &CircleRotation) -> Result<Self, MapError> {
        self.check_rotation(rotation)?;
        let m = self.partition.cells();
        let k = rotation.shift_cells;
        let shift = self.partition.left(k);
        let mut slopes = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(m);
        for j in 0..m {
            let target = (j + k) % m;
            let wrap = if j + k >= m { Rational::one() } else { Rational::zero() };
            let a = self.slopes[target];
            slopes.push(a);
            offsets.push(a * (shift - wrap) + self.offsets[target]);
        }
        Self::new(self.partition, slopes, offsets)
    }

    /// `x ↦ ρ(T(x))`.
    pub fn post_rotate(&self, rotation: &CircleRotation) -> Result<Self, MapError> {
        self.check_rotation(rotation)?;
        let shift = self.partition.left(rotation.shift_cells);
        let offsets = self.offsets.iter().map(|c| c + shift).collect();
        Self::new(self.partition, self.slopes.clone(), offsets)
    }

    fn check_rotation(&self, rotation: &CircleRotation) -> Result<(), MapError> {
        if !self.partition.is_circle() {
            return Err(MapError::NotCircle);
        }
        if rotation.partition != self.partition {
            return Err(MapError::PartitionMismatch(
                rotation.partition.cells(),
                self.partition.cells(),
            ));
        }
        Ok(())
    }

    pub fn to_spec(&self) -> MapSpec {
        MapSpec {
            cells: self.partition.cells(),
            circle: self.partition.is_circle(),
            slopes: self.slopes.iter().map(format_rational).collect(),
            offsets: self.offsets.iter().map(format_rational).collect(),
        }
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self, MapError> {
        let partition = UniformPartition::new(spec.cells, spec.circle)?;
        let parse_all = |items: &[String]| -> Result<Vec<Rational>, MapError> {
            items.iter().map(|s| parse_rational(s)).collect()
        };
        Self::new(partition, parse_all(&spec.slopes)?, parse_all(&spec.offsets)?)
    }
}

impl fmt::Display for PiecewiseAffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "piecewise-affine map on {} cells", self.partition.cells())
    }
}

/// JSON description of a map: slopes and offsets as `"p/q"` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapSpec {
    pub cells: usize,
    #[serde(default = "default_circle")]
    pub circle: bool,
    pub slopes: Vec<String>,
    pub offsets: Vec<String>,
}

fn default_circle() -> bool {
    true
}

/// Rotation of the circle by a whole number of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircleRotation {
    partition: UniformPartition,
    shift_cells: usize,
}

impl CircleRotation {
    pub fn new(partition: UniformPartition, shift: Rational) -> Result<Self, MapError> {
        if !partition.is_circle() {
            return Err(MapError::NotCircle);
        }
        let cells = frac(shift) * Rational::from_integer(partition.cells() as i64);
        if !cells.is_integer() {
            return Err(MapError::MisalignedRotation(shift));
        }
        Ok(Self {
            partition,
            shift_cells: cells.to_integer() as usize,
        })
    }

    pub fn shift(&self) -> Rational {
        self.partition.left(self.shift_cells)
    }

    pub fn pow(&self, k: usize) -> Self {
        Self {
            partition: self.partition,
            shift_cells: (self.shift_cells * k) % self.partition.cells(),
        }
    }

    pub fn evaluate(&self, x: Rational) -> Result<Rational, MapError> {
        self.partition.cell_of(x)?;
        Ok(frac(x + self.shift()))
    }

    /// Permutation matrix sending `χ(B_j)` to `χ(B_{j+k})`.
    pub fn pf_matrix(&self) -> PfMatrix {
        let m = self.partition.cells();
        let mut entries = vec![vec![Rational::zero(); m]; m];
        for j in 0..m {
            entries[(j + self.shift_cells) % m][j] = Rational::one();
        }
        PfMatrix { entries }
    }
}

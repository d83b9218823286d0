//! Step functions on a uniform partition: norms, the cell-mean projection,
//! exact transfer-operator decay and coherent-set overlap.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drivers::Symbol;
use crate::interval_maps::{PiecewiseAffineMap, Rational, UniformPartition};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("{got} values for a partition of {cells} cells")]
    LengthMismatch { cells: usize, got: usize },
    #[error("a partition of {fine} cells does not refine one of {coarse} cells")]
    NotRefinement { fine: usize, coarse: usize },
    #[error("function has nonzero mean {mean} on coarse cell {cell}")]
    NotInF { cell: usize, mean: String },
    #[error("step {step}: {cells} cells are too coarse for exact transfer")]
    RefinementTooCoarse { step: usize, cells: usize },
    #[error("map {index} does not have a constant integer slope")]
    UnsupportedSlope { index: usize },
    #[error("need {needed} maps, got {got}")]
    TooFewMaps { needed: usize, got: usize },
    #[error("function has no positive part")]
    NoPositivePart,
    #[error("symbol {symbol} outside the alphabet of this family")]
    SymbolOutOfRange { symbol: Symbol },
}

/// Real values on the cells of a uniform partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    cells: usize,
    #[serde(default = "circle_default")]
    circle: bool,
    values: Vec<f64>,
}

fn circle_default() -> bool {
    true
}

impl StepFunction {
    pub fn new(partition: UniformPartition, values: Vec<f64>) -> Result<Self, StepError> {
        if values.len() != partition.cells() {
            return Err(StepError::LengthMismatch {
                cells: partition.cells(),
                got: values.len(),
            });
        }
        Ok(Self {
            cells: partition.cells(),
            circle: partition.is_circle(),
            values,
        })
    }

    pub fn partition(&self) -> UniformPartition {
        UniformPartition::new(self.cells, self.circle).expect("cells > 0")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn width(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.width()
    }

    /// Sum of jumps at interior boundaries, plus the wrap jump on the circle.
    pub fn variation(&self) -> f64 {
        let interior: f64 = self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let wrap = if self.circle && self.values.len() > 1 {
            (self.values[0] - self.values[self.values.len() - 1]).abs()
        } else {
            0.0
        };
        interior + wrap
    }

    pub fn bv_norm(&self) -> f64 {
        self.l1_norm().max(self.variation())
    }

    /// Cell means on `coarse`.
    pub fn project_q(&self, coarse: &UniformPartition) -> Result<StepFunction, StepError> {
        let fine = self.partition();
        if !fine.refines(coarse) {
            return Err(StepError::NotRefinement {
                fine: fine.cells(),
                coarse: coarse.cells(),
            });
        }
        let r = fine.cells() / coarse.cells();
        let values = self
            .values
            .chunks(r)
            .map(|c| c.iter().sum::<f64>() / r as f64)
            .collect();
        StepFunction::new(*coarse, values)
    }

    /// The same function on a partition `factor` times finer.
    pub fn refine(&self, factor: usize) -> StepFunction {
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, factor))
            .collect();
        StepFunction::new(self.partition().refine(factor), values).expect("length matches")
    }

    pub fn sub(&self, rhs: &StepFunction) -> Result<StepFunction, StepError> {
        if rhs.cells != self.cells {
            return Err(StepError::LengthMismatch {
                cells: self.cells,
                got: rhs.cells,
            });
        }
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect();
        StepFunction::new(self.partition(), values)
    }

    /// `midpoint,value` rows for bar plots.
    pub fn bar_csv(&self) -> String {
        let mut out = String::from("midpoint,value\n");
        let w = self.width();
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", (i as f64 + 0.5) * w, v);
        }
        out
    }
}

/// Share of the positive mass of `w` that lies on `cells`.
pub fn coherent_overlap(w: &StepFunction, cells: &BTreeSet<usize>) -> Result<f64, StepError> {
    let total: f64 = w.values().iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(StepError::NoPositivePart);
    }
    let inside: f64 = w
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| cells.contains(i))
        .map(|(_, v)| v.max(0.0))
        .sum();
    Ok(inside / total)
}

/// Which coherent family rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherentExample {
    /// `J(ω) = J_{ω₀}` over three symbols.
    Periodic,
    /// `J_{ω₀}` for `ω₀ ≤ 3`, `J_{ω₀−3}` otherwise, over six symbols.
    Rotated,
}

/// Cells (0-based, nine-cell partition) of `J_i = [(i−1)/3, i/3]`.
pub fn third(i: usize) -> BTreeSet<usize> {
    (3 * (i - 1)..3 * i).collect()
}

/// The interval selected by `symbol`.
pub fn j_family(example: CoherentExample, symbol: Symbol) -> Result<BTreeSet<usize>, StepError> {
    match (example, symbol) {
        (CoherentExample::Periodic, 1..=3) => Ok(third(symbol)),
        (CoherentExample::Rotated, 1..=3) => Ok(third(symbol)),
        (CoherentExample::Rotated, 4..=6) => Ok(third(symbol - 3)),
        _ => Err(StepError::SymbolOutOfRange { symbol }),
    }
}

/// Exact step function: integer numerators over a common denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactStep {
    partition: UniformPartition,
    numerators: Vec<BigInt>,
    denominator: BigInt,
}

impl ExactStep {
    pub fn new(partition: UniformPartition, values: &[Rational]) -> Result<Self, StepError> {
        if values.len() != partition.cells() {
            return Err(StepError::LengthMismatch {
                cells: partition.cells(),
                got: values.len(),
            });
        }
        let denominator = values
            .iter()
            .fold(1i64, |acc, v| acc.lcm(v.denom()));
        let numerators = values
            .iter()
            .map(|v| BigInt::from(*v.numer()) * BigInt::from(denominator / v.denom()))
            .collect();
        Ok(Self {
            partition,
            numerators,
            denominator: BigInt::from(denominator),
        })
    }

    pub fn partition(&self) -> UniformPartition {
        self.partition
    }

    pub fn value(&self, cell: usize) -> BigRational {
        BigRational::new(self.numerators[cell].clone(), self.denominator.clone())
    }

    fn jump_sum(&self) -> BigInt {
        let v = &self.numerators;
        let mut total: BigInt = v.windows(2).map(|w| (&w[1] - &w[0]).abs()).sum();
        if self.partition.is_circle() && v.len() > 1 {
            total += (&v[0] - &v[v.len() - 1]).abs();
        }
        total
    }

    pub fn variation(&self) -> BigRational {
        BigRational::new(self.jump_sum(), self.denominator.clone())
    }

    /// Zero mean on every cell of `coarse`.
    pub fn check_in_f(&self, coarse: &UniformPartition) -> Result<(), StepError> {
        if !self.partition.refines(coarse) {
            return Err(StepError::NotRefinement {
                fine: self.partition.cells(),
                coarse: coarse.cells(),
            });
        }
        let r = self.partition.cells() / coarse.cells();
        for (cell, chunk) in self.numerators.chunks(r).enumerate() {
            let sum: BigInt = chunk.iter().sum();
            if !sum.is_zero() {
                let mean = BigRational::new(sum, &self.denominator * BigInt::from(r));
                return Err(StepError::NotInF {
                    cell,
                    mean: mean.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Exact transfer operator of `map` when every cell of this partition is
    /// sent onto a cell of the `|slope|`-times coarser partition.
    pub fn transfer(&self, map: &PiecewiseAffineMap, step: usize) -> Result<ExactStep, StepError> {
        let slope = map
            .constant_abs_slope()
            .filter(|s| s.is_integer())
            .ok_or(StepError::UnsupportedSlope { index: step })?
            .to_integer() as usize;
        let l = self.partition.cells();
        let coarse_map = map.partition();
        let too_coarse = StepError::RefinementTooCoarse { step, cells: l };
        if l % slope != 0 || !self.partition.refines(&coarse_map) {
            return Err(too_coarse);
        }
        let out_cells = l / slope;
        let out = UniformPartition::new(out_cells, self.partition.is_circle())
            .map_err(|_| too_coarse.clone())?;
        let scale = Rational::from_integer(out_cells as i64);
        let mut numerators = vec![BigInt::zero(); out_cells];
        for (k, num) in self.numerators.iter().enumerate() {
            let left = Rational::new(k as i64, l as i64);
            let right = Rational::new(k as i64 + 1, l as i64);
            let j = coarse_map.cell_of(left).map_err(|_| too_coarse.clone())?;
            let a = map.slopes()[j];
            let c = map.offsets()[j];
            let lo = (a * left + c).min(a * right + c) * scale;
            if !lo.is_integer() {
                return Err(too_coarse);
            }
            let target = lo.to_integer().rem_euclid(out_cells as i64) as usize;
            numerators[target] += num;
        }
        Ok(ExactStep {
            partition: out,
            numerators,
            denominator: &self.denominator * BigInt::from(slope),
        })
    }

    pub fn to_step_function(&self) -> StepFunction {
        let d = self.denominator.to_f64().unwrap_or(f64::NAN);
        let values = self
            .numerators
            .iter()
            .map(|n| n.to_f64().unwrap_or(f64::NAN) / d)
            .collect();
        StepFunction::new(self.partition, values).expect("length matches")
    }
}

/// Measured variation after `n` steps against `3 · s⁻ⁿ · var(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayStep {
    pub n: usize,
    pub measured: BigRational,
    pub bound: BigRational,
}

impl DecayStep {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// Applies `maps[0]`, then `maps[1]`, … to `f ∈ F` in exact arithmetic and
/// records `var(𝒫⁽ᵏ⁾f)` against the bound for `k = 1..=n`.
pub fn decay_check(
    f: &ExactStep,
    maps: &[&PiecewiseAffineMap],
    n: usize,
) -> Result<Vec<DecayStep>, StepError> {
    if maps.len() < n {
        return Err(StepError::TooFewMaps {
            needed: n,
            got: maps.len(),
        });
    }
    if let Some(first) = maps.first() {
        f.check_in_f(&first.partition())?;
    }
    let var0 = f.variation();
    let mut current = f.clone();
    let mut expansion = BigInt::from(1);
    let mut out = Vec::with_capacity(n);
    for (k, map) in maps.iter().take(n).enumerate() {
        let slope = map
            .constant_abs_slope()
            .filter(|s| s.is_integer())
            .ok_or(StepError::UnsupportedSlope { index: k })?;
        expansion *= BigInt::from(slope.to_integer());
        current = current.transfer(map, k)?;
        out.push(DecayStep {
            n: k + 1,
            measured: current.variation(),
            bound: &var0 * BigRational::new(BigInt::from(3), expansion.clone()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;

    fn nine(values: Vec<f64>) -> StepFunction {
        StepFunction::new(UniformPartition::ninths(), values).unwrap()
    }

    #[test]
    fn norms_of_simple_functions() {
        let c = nine(vec![-2.0; 9]);
        assert_eq!(c.variation(), 0.0);
        assert_relative_eq!(c.l1_norm(), 2.0);
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let ind = nine(v);
        assert_eq!(ind.variation(), 2.0);
        assert_relative_eq!(ind.l1_norm(), 1.0 / 9.0);
        assert_eq!(ind.bv_norm(), 2.0);
        let open = StepFunction::new(UniformPartition::new(3, false).unwrap(), vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(open.variation(), 2.0);
    }

    #[test]
    fn projection() {
        let f = nine((0..9).map(|i| i as f64).collect());
        assert_eq!(f.project_q(&UniformPartition::ninths()).unwrap(), f);
        let mut v = vec![0.0; 18];
        v[0] = 1.0;
        let half = StepFunction::new(UniformPartition::new(18, true).unwrap(), v).unwrap();
        let q = half.project_q(&UniformPartition::ninths()).unwrap();
        assert_eq!(q.values()[0], 0.5);
        assert!(q.values()[1..].iter().all(|&x| x == 0.0));
        let bad = StepFunction::new(UniformPartition::new(4, true).unwrap(), vec![0.0; 4]).unwrap();
        assert!(matches!(
            bad.project_q(&UniformPartition::ninths()),
            Err(StepError::NotRefinement { .. })
        ));
    }

    #[test]
    fn overlap_extremes() {
        let mut v = vec![0.0; 9];
        for x in v.iter_mut().take(3) {
            *x = 1.0;
        }
        let j1 = nine(v);
        assert_eq!(coherent_overlap(&j1, &third(1)).unwrap(), 1.0);
        assert_eq!(coherent_overlap(&j1, &third(2)).unwrap(), 0.0);
        assert!(matches!(
            coherent_overlap(&nine(vec![-1.0; 9]), &third(1)),
            Err(StepError::NoPositivePart)
        ));
    }

    #[test]
    fn family_rules() {
        assert_eq!(j_family(CoherentExample::Rotated, 5).unwrap(), BTreeSet::from([3, 4, 5]));
        assert_eq!(j_family(CoherentExample::Periodic, 1).unwrap(), BTreeSet::from([0, 1, 2]));
        assert!(j_family(CoherentExample::Periodic, 4).is_err());
        assert!(j_family(CoherentExample::Rotated, 0).is_err());
    }

    #[test]
    fn zero_function_decays_trivially() {
        let p = UniformPartition::new(9 * 27, true).unwrap();
        let f = ExactStep::new(p, &vec![Rational::from_integer(0); 243]).unwrap();
        let t = catalog::t_map(1).unwrap();
        let steps = decay_check(&f, &[&t, &t, &t], 3).unwrap();
        assert!(steps.iter().all(|s| s.measured.is_zero() && s.holds()));
    }

    #[test]
    fn decay_rejects_nonzero_mean() {
        let p = UniformPartition::new(27, true).unwrap();
        let mut v = vec![Rational::from_integer(0); 27];
        v[0] = Rational::from_integer(1);
        let f = ExactStep::new(p, &v).unwrap();
        let t = catalog::t_map(1).unwrap();
        assert!(matches!(decay_check(&f, &[&t], 1), Err(StepError::NotInF { cell: 0, .. })));
    }

    #[test]
    fn decay_needs_fine_grid() {
        let p = UniformPartition::new(27, true).unwrap();
        let mut v = vec![Rational::from_integer(0); 27];
        v[0] = Rational::from_integer(1);
        v[1] = Rational::from_integer(-1);
        let f = ExactStep::new(p, &v).unwrap();
        let t = catalog::t_map(2).unwrap();
        assert!(decay_check(&f, &[&t], 1).is_ok());
        assert!(matches!(
            decay_check(&f, &[&t, &t], 2),
            Err(StepError::RefinementTooCoarse { step: 1, .. })
        ));
    }

    #[test]
    fn exact_transfer_matches_float_pf_on_cells() {
        let t = catalog::seed_map();
        let pf = t.pf_matrix().unwrap().to_f64();
        let values: Vec<Rational> = (0..9).map(|i| Rational::new(i * i - 7, 5)).collect();
        let f = ExactStep::new(UniformPartition::ninths().refine(3), &values
            .iter()
            .flat_map(|v| std::iter::repeat_n(*v, 3))
            .collect::<Vec<_>>())
        .unwrap();
        let image = f.transfer(&t, 0).unwrap().to_step_function();
        let v = nalgebra::DVector::from_iterator(9, values.iter().map(|r| *r.numer() as f64 / *r.denom() as f64));
        let expected = pf * v;
        for i in 0..9 {
            assert_relative_eq!(image.values()[i], expected[i], epsilon = 1e-12);
        }
    }
}

//! Oseledets subspaces by pushing backward Gram-root eigenspaces forward.
//!
//! At a base `ω` the eigenspaces `U_j` of `Ψ⁽ᴹ⁾(σ^{−N}ω)` are pushed through
//! `A⁽ᴺ⁾(σ^{−N}ω)`, giving `W_j^{(M,N)}(ω)`. Groups with exponent `−∞` are
//! not pushed; they are reported as the kernel of `A⁽ᴹ⁾(ω)`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cocycle::{group_exponents, CocycleError, Exponent, GramOptions, GramRoot, MatrixCocycle};
use crate::defaults;
use crate::linalg::{
    orthonormal_columns, pin_signs, smallest_singular_value, sorted_symmetric_eigen, spectral_norm,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OseledetsError {
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("pushed frame of group {group} at base {base} collapsed (relative σ_min {sigma_min:e})")]
    RankCollapse {
        group: usize,
        base: i64,
        sigma_min: f64,
    },
    #[error("subspace dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("group multiplicities differ: {left:?} vs {right:?}")]
    GroupMismatch {
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("columns are not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },
    #[error("group {group} has dimension {dimension}, expected a simple group")]
    NotSimple { group: usize, dimension: usize },
    #[error("push length {push} exceeds Gram depth {depth}")]
    InvalidDepths { depth: usize, push: usize },
    #[error("no group {0}")]
    NoSuchGroup(usize),
    #[error("cocycle: {0}")]
    Cocycle(#[from] CocycleError),
}

/// Orthonormal columns spanning a subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps columns that are already orthonormal to `1e-10`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, OseledetsError> {
        let k = matrix.ncols();
        let defect = (matrix.transpose() * &matrix - DMatrix::identity(k, k)).amax();
        if defect > 1e-10 {
            return Err(OseledetsError::NotOrthonormal { defect });
        }
        Ok(Self { matrix })
    }

    /// Orthonormal basis of the column span, signs pinned.
    pub fn from_span(m: &DMatrix<f64>) -> Self {
        let mut q = orthonormal_columns(m, 1e-13);
        pin_signs(&mut q);
        Self { matrix: q }
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.matrix.column(i).into_owned()
    }

    /// Orthogonal projection onto the span.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.matrix * self.matrix.transpose()
    }
}

/// `sin` of the largest principal angle, i.e. `‖(I − aaᵀ) b‖₂`.
///
/// For equal dimensions this is the Hausdorff distance between the unit
/// balls of the two subspaces; it lies in `[0, 1]`.
pub fn subspace_distance(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<f64, OseledetsError> {
    if a.dim() != b.dim() || a.ambient_dim() != b.ambient_dim() {
        return Err(OseledetsError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let residual = b.matrix() - a.matrix() * (a.matrix().transpose() * b.matrix());
    Ok(spectral_norm(&residual).min(1.0))
}

/// One plateau of a Gram-root spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGroup {
    pub eigenvalues: Vec<f64>,
    pub exponent: Exponent,
    pub basis: SubspaceBasis,
}

fn groups_from_sorted(values: &[f64], vectors: &DMatrix<f64>, gap_tol: f64) -> Vec<EigenGroup> {
    let logs: Vec<Exponent> = values
        .iter()
        .map(|&v| if v > 0.0 { Exponent::Finite(v.ln()) } else { Exponent::NegInfinity })
        .collect();
    group_exponents(&logs, gap_tol)
        .into_iter()
        .map(|g| {
            let mut basis = vectors.columns(g.start, g.len()).into_owned();
            pin_signs(&mut basis);
            let finite: Vec<f64> = logs[g.clone()].iter().filter_map(|e| e.finite()).collect();
            EigenGroup {
                eigenvalues: values[g.clone()].to_vec(),
                exponent: if finite.is_empty() {
                    Exponent::NegInfinity
                } else {
                    Exponent::Finite(finite.iter().sum::<f64>() / finite.len() as f64)
                },
                basis: SubspaceBasis { matrix: basis },
            }
        })
        .collect()
}

/// Eigenvalue plateaus of a symmetric positive semi-definite matrix.
///
/// Eigenvalues at or below `1e-14 · λ_max` count as zero (exponent `−∞`).
pub fn eigenspace_groups(psi: &DMatrix<f64>, gap_tol: f64) -> Result<Vec<EigenGroup>, OseledetsError> {
    let asymmetry = (psi - psi.transpose()).amax();
    if asymmetry > 1e-10 * psi.amax().max(1.0) {
        return Err(OseledetsError::NotSymmetric { asymmetry });
    }
    let sym = (psi + psi.transpose()) * 0.5;
    let (mut values, vectors) = sorted_symmetric_eigen(&sym);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    for v in values.iter_mut() {
        if *v <= 1e-14 * top {
            *v = 0.0;
        }
    }
    Ok(groups_from_sorted(&values, &vectors, gap_tol))
}

/// Plateaus of a factored Gram root; `−∞` directions are exact.
pub fn gram_root_groups(root: &GramRoot, gap_tol: f64) -> Vec<EigenGroup> {
    groups_from_sorted(&root.eigenvalues(), root.eigenvectors(), gap_tol)
}

/// Parameters of the push-forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushOptions {
    /// Gram depth `M`.
    pub depth: usize,
    /// Push length `N`.
    pub push: usize,
    pub gap_tol: f64,
    /// Relative σ_min below which a pushed frame is a rank collapse.
    pub conditioning_tol: f64,
    /// After every push step, project group `j` onto the slow flag
    /// (orthogonal complement of the faster Gram-root directions) at the
    /// new base. Off by default.
    pub flag_projection: bool,
    pub gram: GramOptions,
}

impl PushOptions {
    /// `M = 2N`.
    pub fn balanced(push: usize) -> Self {
        Self::new(2 * push, push)
    }

    pub fn new(depth: usize, push: usize) -> Self {
        Self {
            depth,
            push,
            gap_tol: defaults::GAP_TOL,
            conditioning_tol: defaults::PUSH_CONDITIONING_TOL,
            flag_projection: false,
            gram: GramOptions::default(),
        }
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn with_flag_projection(mut self, on: bool) -> Self {
        self.flag_projection = on;
        self
    }
}

/// One group of an [`OseledetsApproximation`].
#[derive(Debug, Clone, PartialEq)]
pub struct OseledetsGroup {
    pub exponent: Exponent,
    pub multiplicity: usize,
    pub basis: SubspaceBasis,
    /// Relative smallest singular value of the raw pushed frame (1 when not
    /// pushed).
    pub conditioning: f64,
}

/// Approximate Oseledets splitting at one base.
#[derive(Debug, Clone, PartialEq)]
pub struct OseledetsApproximation {
    pub base: i64,
    pub depth: usize,
    pub push: usize,
    pub groups: Vec<OseledetsGroup>,
}

impl OseledetsApproximation {
    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.multiplicity).collect()
    }

    pub fn exponents(&self) -> Vec<Exponent> {
        self.groups.iter().map(|g| g.exponent).collect()
    }

    pub fn group(&self, j: usize) -> Result<&OseledetsGroup, OseledetsError> {
        self.groups.get(j).ok_or(OseledetsError::NoSuchGroup(j))
    }

    /// All group bases side by side.
    pub fn stacked(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .groups
            .iter()
            .flat_map(|g| g.basis.matrix().column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        DMatrix::from_columns(&cols)
    }

    /// `σ_max / σ_min` of the stacked bases (∞ when singular).
    pub fn direct_sum_condition(&self) -> f64 {
        let s = self.stacked();
        let lo = smallest_singular_value(&s);
        if lo == 0.0 {
            f64::INFINITY
        } else {
            spectral_norm(&s) / lo
        }
    }

    /// `V_j = W_j ⊕ … ⊕ W_ℓ`.
    pub fn flag(&self, j: usize) -> Result<SubspaceBasis, OseledetsError> {
        if j >= self.groups.len() {
            return Err(OseledetsError::NoSuchGroup(j));
        }
        let cols: Vec<DVector<f64>> = self.groups[j..]
            .iter()
            .flat_map(|g| g.basis.matrix().column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        Ok(SubspaceBasis::from_span(&DMatrix::from_columns(&cols)))
    }
}

/// Push-forward driver with a cache of Gram roots per base.
#[derive(Debug)]
pub struct Pushforward<'a> {
    cocycle: &'a MatrixCocycle,
    options: PushOptions,
    roots: Mutex<HashMap<(i64, usize), Arc<GramRoot>>>,
}

impl<'a> Pushforward<'a> {
    pub fn new(cocycle: &'a MatrixCocycle, options: PushOptions) -> Result<Self, OseledetsError> {
        if options.push > options.depth || options.depth == 0 {
            return Err(OseledetsError::InvalidDepths {
                depth: options.depth,
                push: options.push,
            });
        }
        Ok(Self {
            cocycle,
            options,
            roots: Mutex::new(HashMap::new()),
        })
    }

    pub fn options(&self) -> &PushOptions {
        &self.options
    }

    pub fn cocycle(&self) -> &MatrixCocycle {
        self.cocycle
    }

    /// `Ψ⁽ᴹ⁾` at `base`, cached.
    pub fn gram_root(&self, base: i64) -> Result<Arc<GramRoot>, OseledetsError> {
        self.gram_root_at_depth(base, self.options.depth)
    }

    fn gram_root_at_depth(&self, base: i64, depth: usize) -> Result<Arc<GramRoot>, OseledetsError> {
        if let Some(r) = self.roots.lock().expect("cache poisoned").get(&(base, depth)) {
            return Ok(r.clone());
        }
        let root = Arc::new(self.cocycle.gram_root_with(depth, base, &self.options.gram)?);
        self.roots
            .lock()
            .expect("cache poisoned")
            .insert((base, depth), root.clone());
        Ok(root)
    }

    /// `W_j^{(M,N)}(σ^{base}ω)` for every group.
    pub fn approximate(&self, base: i64) -> Result<OseledetsApproximation, OseledetsError> {
        let n = self.options.push;
        let start = base - n as i64;
        let root = self.gram_root(start)?;
        let groups = gram_root_groups(&root, self.options.gap_tol);
        let mut out = Vec::with_capacity(groups.len());
        let mut faster = 0;
        for (j, g) in groups.iter().enumerate() {
            let m = g.basis.dim();
            if !g.exponent.is_finite() {
                let here = self.gram_root(base)?;
                let d = self.cocycle.dim();
                let mut kernel = here.eigenvectors().columns(d - m, m).into_owned();
                pin_signs(&mut kernel);
                out.push(OseledetsGroup {
                    exponent: g.exponent,
                    multiplicity: m,
                    basis: SubspaceBasis { matrix: kernel },
                    conditioning: 1.0,
                });
                faster += m;
                continue;
            }
            let (basis, conditioning) = self.push_group(g.basis.matrix(), start, faster)?;
            if conditioning < self.options.conditioning_tol {
                return Err(OseledetsError::RankCollapse {
                    group: j,
                    base,
                    sigma_min: conditioning,
                });
            }
            out.push(OseledetsGroup {
                exponent: g.exponent,
                multiplicity: m,
                basis,
                conditioning,
            });
            faster += m;
        }
        Ok(OseledetsApproximation {
            base,
            depth: self.options.depth,
            push: n,
            groups: out,
        })
    }

    /// Pushes `frame` from `start` through `N` steps, renormalising by QR and
    /// tracking the triangular factors to measure the raw conditioning.
    fn push_group(
        &self,
        frame: &DMatrix<f64>,
        start: i64,
        faster: usize,
    ) -> Result<(SubspaceBasis, f64), OseledetsError> {
        let k = frame.ncols();
        let mut q = frame.clone();
        let mut tri = DMatrix::<f64>::identity(k, k);
        for step in 0..self.options.push as i64 {
            let mut pushed = self.cocycle.step_matrix(start + step)? * &q;
            if self.options.flag_projection && faster > 0 {
                let root = self.gram_root(start + step + 1)?;
                let fast = root.eigenvectors().columns(0, faster);
                pushed -= fast * (fast.transpose() * &pushed);
            }
            let qr = pushed.qr();
            q = qr.q();
            tri = qr.r() * tri;
            let scale = tri.amax();
            if scale > 0.0 {
                tri /= scale;
            }
        }
        let sv = tri.singular_values();
        let conditioning = if sv.max() > 0.0 { sv.min() / sv.max() } else { 0.0 };
        Ok((SubspaceBasis::from_span(&q), conditioning))
    }
}

/// One-shot push-forward at `base`.
pub fn pushforward_subspaces(
    cocycle: &MatrixCocycle,
    options: PushOptions,
    base: i64,
) -> Result<OseledetsApproximation, OseledetsError> {
    Pushforward::new(cocycle, options)?.approximate(base)
}

/// Distance between `A(ω)W_j(ω)` and `W_j(σω)` for every finite group.
pub fn equivariance_residual(
    here: &OseledetsApproximation,
    next: &OseledetsApproximation,
    cocycle: &MatrixCocycle,
) -> Result<Vec<f64>, OseledetsError> {
    if here.multiplicities() != next.multiplicities() {
        return Err(OseledetsError::GroupMismatch {
            left: here.multiplicities(),
            right: next.multiplicities(),
        });
    }
    let a = cocycle.step_matrix(here.base)?;
    here.groups
        .iter()
        .zip(&next.groups)
        .filter(|(g, _)| g.exponent.is_finite())
        .map(|(g, h)| {
            let pushed = SubspaceBasis::from_span(&(a * g.basis.matrix()));
            subspace_distance(&pushed, &h.basis)
        })
        .collect()
}

/// `‖v‖_{L¹}` of the step function with values `v` on equal cells.
fn l1_cells(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// `Δ^{(2N,N)}(ω)` for group `group`: L¹ distance between the unit vector at
/// `σω` and the normalised push of the one at `ω`, minimised over sign.
pub fn delta_diagnostic(
    engine: &Pushforward<'_>,
    base: i64,
    group: usize,
) -> Result<f64, OseledetsError> {
    let here = engine.approximate(base)?;
    let next = engine.approximate(base + 1)?;
    let simple = |a: &OseledetsApproximation| -> Result<DVector<f64>, OseledetsError> {
        let g = a.group(group)?;
        if g.multiplicity != 1 {
            return Err(OseledetsError::NotSimple {
                group,
                dimension: g.multiplicity,
            });
        }
        Ok(g.basis.vector(0))
    };
    let w_here = simple(&here)?;
    let w_next = simple(&next)?;
    let pushed = engine.cocycle().step_matrix(base)? * w_here;
    let u = &w_next / l1_cells(&w_next);
    let v = &pushed / l1_cells(&pushed);
    Ok(l1_cells(&(&u - &v)).min(l1_cells(&(&u + &v))))
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub push: usize,
    pub group: usize,
    pub exponent: Exponent,
    pub delta: Option<f64>,
    pub equivariance: Option<f64>,
}

/// CSV with header `N,group,exponent,delta,equivariance_residual`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("N,group,exponent,delta,equivariance_residual\n");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for r in rows {
        let exponent = match r.exponent {
            Exponent::Finite(x) => format!("{x:.16e}"),
            Exponent::NegInfinity => "-inf".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.push,
            r.group + 1,
            exponent,
            fmt(r.delta),
            fmt(r.equivariance)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::Driver;
    use approx::assert_relative_eq;

    fn basis(cols: &[&[f64]]) -> SubspaceBasis {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        SubspaceBasis::from_span(&m)
    }

    #[test]
    fn identity_is_one_group() {
        let g = eigenspace_groups(&DMatrix::identity(3, 3), 1e-6).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].basis.dim(), 3);
        assert_relative_eq!(g[0].eigenvalues[0], 1.0);
    }

    #[test]
    fn degenerate_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.1, 0.9]));
        let g = eigenspace_groups(&d, 1e-3).unwrap();
        assert_eq!(g.iter().map(|x| x.basis.dim()).collect::<Vec<_>>(), vec![2, 1]);
        assert_relative_eq!(g[1].basis.vector(0)[1], 1.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            eigenspace_groups(&m, 1e-6),
            Err(OseledetsError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn distances() {
        let a = basis(&[&[1.0, 0.0]]);
        let b = basis(&[&[0.0, 1.0]]);
        assert_eq!(subspace_distance(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(subspace_distance(&a, &b).unwrap(), 1.0);
        let c = basis(&[&[1.0, 1.0]]);
        assert_relative_eq!(subspace_distance(&a, &c).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        let p = basis(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert!(matches!(
            subspace_distance(&a, &p),
            Err(OseledetsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_push_returns_eigenspaces() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let c = MatrixCocycle::new(vec![g], Driver::periodic(vec![1]).unwrap()).unwrap();
        let opts = PushOptions::new(30, 0);
        let approx = pushforward_subspaces(&c, opts, 0).unwrap();
        let root = c.gram_root(30, 0).unwrap();
        let u = gram_root_groups(&root, opts.gap_tol);
        for (w, u) in approx.groups.iter().zip(&u) {
            assert!(subspace_distance(&w.basis, &u.basis).unwrap() < 1e-14);
        }
    }

    #[test]
    fn autonomous_pushforward_finds_eigenvectors() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.3, 0.0, 0.7, -0.4, 0.0, 0.0, 0.2]);
        let c = MatrixCocycle::new(vec![g.clone()], Driver::periodic(vec![1]).unwrap()).unwrap();
        let opts = PushOptions::balanced(30).with_flag_projection(true);
        let approx = pushforward_subspaces(&c, opts, 0).unwrap();
        assert_eq!(approx.multiplicities(), vec![1, 1, 1]);
        let eig = [2.0, 0.7, 0.2];
        for (j, lambda) in eig.iter().enumerate() {
            let w = approx.groups[j].basis.vector(0);
            let r = &g * &w - &w * *lambda;
            assert!(r.norm() < 1e-9, "group {j}: {}", r.norm());
        }
        let next = pushforward_subspaces(&c, opts, 1).unwrap();
        for r in equivariance_residual(&approx, &next, &c).unwrap() {
            assert!(r < 1e-9);
        }
        assert!(approx.direct_sum_condition() < 10.0);
    }

    #[test]
    fn plain_push_loses_slow_groups_to_rounding() {
        // rounding along e₁ grows like (2/0.7)^N
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.3, 0.0, 0.7, -0.4, 0.0, 0.0, 0.2]);
        let c = MatrixCocycle::new(vec![g.clone()], Driver::periodic(vec![1]).unwrap()).unwrap();
        let w = |n: usize| {
            let a = pushforward_subspaces(&c, PushOptions::balanced(n), 0).unwrap();
            let v = a.groups[1].basis.vector(0);
            (&g * &v - &v * 0.7).norm()
        };
        assert!(w(20) < 1e-5);
        assert!(w(30) > 1e-4);
    }

    #[test]
    fn kernel_group_is_not_pushed() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let c = MatrixCocycle::new(vec![g], Driver::periodic(vec![1]).unwrap()).unwrap();
        let approx = pushforward_subspaces(&c, PushOptions::balanced(4), 0).unwrap();
        assert_eq!(approx.multiplicities(), vec![1, 1]);
        assert_eq!(approx.groups[1].exponent, Exponent::NegInfinity);
        let k = approx.groups[1].basis.vector(0);
        assert_relative_eq!(k[0], -k[1], epsilon = 1e-14);
    }

    #[test]
    fn invalid_depths() {
        let c = MatrixCocycle::new(vec![DMatrix::identity(2, 2)], Driver::periodic(vec![1]).unwrap())
            .unwrap();
        assert!(matches!(
            Pushforward::new(&c, PushOptions::new(3, 4)),
            Err(OseledetsError::InvalidDepths { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let rows = vec![SweepRow {
            push: 3,
            group: 1,
            exponent: Exponent::NegInfinity,
            delta: Some(0.5),
            equivariance: None,
        }];
        let csv = sweep_csv(&rows);
        assert_eq!(
            csv,
            "N,group,exponent,delta,equivariance_residual\n3,2,-inf,5.0000000000000000e-1,\n"
        );
    }
}

//! Long matrix products kept in log-scaled factored form.
//!
//! A product `A = A_n ⋯ A_1` is stored as `Q · diag(e^{s}) · Y` with `Q`
//! orthogonal and `Y` having unit rows, so singular values far below
//! `ε·σ₁` stay resolvable. Rows of `Y` whose scale is `−∞` span nothing:
//! they record directions the product has annihilated.

use nalgebra::{DMatrix, DVector};

/// Factored product `Q · diag(e^{s}) · Y`.
#[derive(Debug, Clone)]
pub struct GradedProduct {
    dim: usize,
    frame: DMatrix<f64>,
    log_scales: Vec<f64>,
    rows: Vec<DVector<f64>>,
    steps: usize,
    rank_tol: f64,
}

/// Right singular vectors and log singular values of a graded product.
#[derive(Debug, Clone)]
pub struct ProductSvd {
    /// `ln σ_i`, descending; `−∞` for annihilated directions.
    pub log_singular_values: Vec<f64>,
    /// Columns are the matching right singular vectors.
    pub right_vectors: DMatrix<f64>,
}

impl ProductSvd {
    pub fn rank(&self) -> usize {
        self.log_singular_values
            .iter()
            .filter(|s| s.is_finite())
            .count()
    }
}

fn orthonormal_completion(basis: &mut Vec<DVector<f64>>, dim: usize) {
    while basis.len() < dim {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for k in 0..dim {
            let mut v = DVector::zeros(dim);
            v[k] = 1.0;
            for _ in 0..2 {
                for q in basis.iter() {
                    let p = q.dot(&v);
                    v.axpy(-p, q, 1.0);
                }
            }
            let n = v.norm();
            if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
                best = Some((n, v));
            }
        }
        let (n, v) = best.expect("dim > 0");
        basis.push(v / n);
    }
}

impl GradedProduct {
    /// The empty product (identity).
    pub fn identity(dim: usize, rank_tol: f64) -> Self {
        Self {
            dim,
            frame: DMatrix::identity(dim, dim),
            log_scales: vec![0.0; dim],
            rows: (0..dim)
                .map(|i| {
                    let mut e = DVector::zeros(dim);
                    e[i] = 1.0;
                    e
                })
                .collect(),
            steps: 0,
            rank_tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rank(&self) -> usize {
        self.log_scales.iter().filter(|s| s.is_finite()).count()
    }

    /// Replaces the product `P` with `a · P`.
    pub fn push(&mut self, a: &DMatrix<f64>) {
        let d = self.dim;
        self.steps += 1;
        let norm_a = a.norm();
        let live: Vec<usize> = (0..d).filter(|&i| self.log_scales[i].is_finite()).collect();
        if norm_a == 0.0 || live.is_empty() {
            self.kill_all();
            return;
        }
        let pushed: Vec<DVector<f64>> = live.iter().map(|&c| a * self.frame.column(c)).collect();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut owner: Vec<usize> = Vec::new();
        for (pos, b) in pushed.iter().enumerate() {
            let mut r = b.clone();
            for _ in 0..2 {
                for q in &basis {
                    let p = q.dot(&r);
                    r.axpy(-p, q, 1.0);
                }
            }
            let rn = r.norm();
            if rn > self.rank_tol * norm_a {
                basis.push(r / rn);
                owner.push(pos);
            }
        }
        let mut scales = Vec::with_capacity(d);
        let mut rows = Vec::with_capacity(d);
        for (q, &start) in basis.iter().zip(&owner) {
            let terms: Vec<(f64, usize)> = (start..live.len())
                .map(|pos| (q.dot(&pushed[pos]), live[pos]))
                .filter(|(c, _)| *c != 0.0)
                .collect();
            let top = terms
                .iter()
                .map(|(c, k)| c.abs().ln() + self.log_scales[*k])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut row = DVector::zeros(d);
            for (c, k) in &terms {
                let w = c.signum() * (c.abs().ln() + self.log_scales[*k] - top).exp();
                row.axpy(w, &self.rows[*k], 1.0);
            }
            let n = row.norm();
            if n > 0.0 && n.is_finite() && top.is_finite() {
                scales.push(top + n.ln());
                rows.push(row / n);
            } else {
                scales.push(f64::NEG_INFINITY);
                rows.push(DVector::zeros(d));
            }
        }
        orthonormal_completion(&mut basis, d);
        while scales.len() < d {
            scales.push(f64::NEG_INFINITY);
            rows.push(DVector::zeros(d));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| scales[j].total_cmp(&scales[i]));
        self.frame = DMatrix::from_columns(&order.iter().map(|&i| basis[i].clone()).collect::<Vec<_>>());
        self.log_scales = order.iter().map(|&i| scales[i]).collect();
        self.rows = order.iter().map(|&i| rows[i].clone()).collect();
    }

    fn kill_all(&mut self) {
        for s in self.log_scales.iter_mut() {
            *s = f64::NEG_INFINITY;
        }
        for r in self.rows.iter_mut() {
            r.fill(0.0);
        }
    }

    /// Dense product; overflows for long products with large exponents.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            if !self.log_scales[i].is_finite() {
                continue;
            }
            let s = self.log_scales[i].exp();
            out += self.frame.column(i) * (self.rows[i].transpose() * s);
        }
        out
    }

    /// Right singular vectors and log singular values via one-sided Jacobi
    /// on the log-scaled rows.
    pub fn svd(&self) -> ProductSvd {
        let d = self.dim;
        let mut vecs: Vec<DVector<f64>> = Vec::new();
        let mut logs: Vec<f64> = Vec::new();
        for i in 0..d {
            if self.log_scales[i].is_finite() {
                vecs.push(self.rows[i].clone());
                logs.push(self.log_scales[i]);
            }
        }
        let r = vecs.len();
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..r {
                for q in (p + 1)..r {
                    let (hi, lo) = if logs[p] >= logs[q] { (p, q) } else { (q, p) };
                    if !logs[lo].is_finite() {
                        continue;
                    }
                    // rows are e^{logs[hi]}·u and e^{logs[hi]}·f·w, with unit u, w
                    let f = (logs[lo] - logs[hi]).exp();
                    let g = vecs[hi].dot(&vecs[lo]);
                    if g.abs() <= 4.0 * f64::EPSILON {
                        continue;
                    }
                    rotated = true;
                    let fz = (f * f - 1.0) / (2.0 * g);
                    let t_over_f = fz.signum() / (fz.abs() + (f * f + fz * fz).sqrt());
                    let t = t_over_f * f;
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let nu = (&vecs[hi] - &vecs[lo] * (t_over_f * f * f)) * c;
                    let nv = (&vecs[hi] * t_over_f + &vecs[lo]) * c;
                    let (lu, lv) = (nu.norm(), nv.norm());
                    let (base_hi, base_lo) = (logs[hi], logs[lo]);
                    vecs[hi] = nu / lu;
                    logs[hi] = base_hi + lu.ln();
                    if lv > 0.0 {
                        vecs[lo] = nv / lv;
                        logs[lo] = base_lo + lv.ln();
                    } else {
                        logs[lo] = f64::NEG_INFINITY;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut order: Vec<usize> = (0..r).filter(|&i| logs[i].is_finite()).collect();
        order.sort_by(|&i, &j| logs[j].total_cmp(&logs[i]));
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d);
        let mut log_singular_values = Vec::with_capacity(d);
        for &i in &order {
            let mut v = vecs[i].clone();
            for q in &basis {
                let p = q.dot(&v);
                v.axpy(-p, q, 1.0);
            }
            let n = v.norm();
            basis.push(v / n);
            log_singular_values.push(logs[i]);
        }
        orthonormal_completion(&mut basis, d);
        log_singular_values.resize(d, f64::NEG_INFINITY);
        ProductSvd {
            log_singular_values,
            right_vectors: DMatrix::from_columns(&basis),
        }
    }
}

/// Orthonormal basis (columns) of the span of `m`'s columns, by modified
/// Gram–Schmidt with re-orthogonalisation; columns with relative residual
/// below `tol` are dropped.
pub fn orthonormal_columns(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for col in m.column_iter() {
        let mut r: DVector<f64> = col.into_owned();
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&r);
                r.axpy(-p, q, 1.0);
            }
        }
        let n = r.norm();
        if n > tol * scale {
            basis.push(r / n);
        }
    }
    if basis.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&basis)
}

/// Orthonormal basis of the orthogonal complement of the (orthonormal)
/// columns of `q`.
pub fn orthogonal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let k = basis.len();
    orthonormal_completion(&mut basis, d);
    if k == d {
        return DMatrix::zeros(d, 0);
    }
    DMatrix::from_columns(&basis[k..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn product(ms: &[DMatrix<f64>]) -> DMatrix<f64> {
        ms.iter()
            .fold(DMatrix::identity(ms[0].nrows(), ms[0].nrows()), |acc, m| m * acc)
    }

    #[test]
    fn short_products_match_dense() {
        let ms: Vec<DMatrix<f64>> = (0..5)
            .map(|k| DMatrix::from_fn(3, 3, |i, j| ((i * 7 + j * 3 + k * 5) % 11) as f64 / 7.0 - 0.6))
            .collect();
        let mut g = GradedProduct::identity(3, 1e-12);
        for m in &ms {
            g.push(m);
        }
        let dense = product(&ms);
        assert_relative_eq!(g.to_matrix(), dense, epsilon = 1e-10);
        let svd = g.svd();
        let reference = dense.svd(false, false).singular_values;
        for (a, b) in svd.log_singular_values.iter().zip(reference.iter()) {
            assert_relative_eq!(a.exp(), *b, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn resolves_widely_separated_scales() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.25]);
        let mut g = GradedProduct::identity(2, 1e-12);
        for _ in 0..400 {
            g.push(&a);
        }
        let s = g.svd();
        assert_relative_eq!(s.log_singular_values[0] / 400.0, 2f64.ln(), epsilon = 1e-2);
        assert_relative_eq!(s.log_singular_values[1] / 400.0, 0.25f64.ln(), epsilon = 1e-2);
    }

    #[test]
    fn rank_loss_is_exact() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let mut g = GradedProduct::identity(2, 1e-12);
        g.push(&p);
        assert_eq!(g.rank(), 1);
        let s = g.svd();
        assert_eq!(s.log_singular_values[1], f64::NEG_INFINITY);
        assert_relative_eq!(s.right_vectors[(1, 1)].abs(), 1.0, epsilon = 1e-14);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        g.push(&q);
        assert_eq!(g.rank(), 0);
    }

    #[test]
    fn complement_is_orthogonal() {
        let q = orthonormal_columns(&DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]), 1e-12);
        let c = orthogonal_complement(&q);
        assert_eq!(c.ncols(), 2);
        assert!((q.transpose() * &c).norm() < 1e-14);
        assert_relative_eq!(c.transpose() * &c, DMatrix::identity(2, 2), epsilon = 1e-14);
    }
}

//! Exact and log-scaled linear algebra used by the cocycle code.

pub mod exact;
pub mod graded;

use nalgebra::{DMatrix, SymmetricEigen};

pub use exact::{exact_eigenvalues, exact_spectrum, ExactEigenvalue, Poly, RationalMatrix};
pub use graded::{orthogonal_complement, orthonormal_columns, GradedProduct, ProductSvd};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest singular value of a (possibly rectangular) matrix.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn pin_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let best = col.iter().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_pinning() {
        let mut m = DMatrix::from_row_slice(3, 2, &[0.1, -0.2, -0.9, 0.3, 0.2, 0.1]);
        pin_signs(&mut m);
        assert!(m[(1, 0)] > 0.0);
        assert!(m[(1, 1)] > 0.0);
    }

    #[test]
    fn eigen_order() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.9, 0.5]));
        let (vals, vecs) = sorted_symmetric_eigen(&m);
        assert_eq!(vals, vec![0.9, 0.5, 0.1]);
        assert_eq!(vecs[(1, 0)].abs(), 1.0);
    }
}

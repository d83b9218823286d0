//! Exact rational matrices, characteristic polynomials and spectra.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Square matrix over ℚ with arbitrary-precision entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    n: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> BigRational) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| {
            if i == j {
                BigRational::one()
            } else {
                BigRational::zero()
            }
        })
    }

    pub fn from_i64(n: usize, entries: &[i64], denominator: i64) -> Self {
        Self::from_fn(n, |i, j| {
            BigRational::new(BigInt::from(entries[i * n + j]), BigInt::from(denominator))
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.n + j]
    }

    pub fn mul(&self, rhs: &RationalMatrix) -> RationalMatrix {
        let n = self.n;
        Self::from_fn(n, |i, j| {
            let mut acc = BigRational::zero();
            for k in 0..n {
                let a = self.get(i, k);
                if !a.is_zero() {
                    acc += a * rhs.get(k, j);
                }
            }
            acc
        })
    }

    pub fn trace(&self) -> BigRational {
        (0..self.n).fold(BigRational::zero(), |acc, i| acc + self.get(i, i))
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            self.get(i, j).to_f64().unwrap_or(f64::NAN)
        })
    }

    /// `det(xI − A)` via Faddeev–LeVerrier.
    pub fn charpoly(&self) -> Poly {
        let n = self.n;
        let mut coeffs = vec![BigRational::zero(); n + 1];
        coeffs[n] = BigRational::one();
        let mut m = RationalMatrix::from_fn(n, |_, _| BigRational::zero());
        for k in 1..=n {
            let c_prev = coeffs[n - k + 1].clone();
            let mut next = self.mul(&m);
            for i in 0..n {
                next.data[i * n + i] += &c_prev;
            }
            m = next;
            let am = self.mul(&m);
            coeffs[n - k] = -am.trace() / BigRational::from_integer(BigInt::from(k as i64));
        }
        Poly::new(coeffs)
    }
}

/// Polynomial over ℚ, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<BigRational>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(BigRational::zero());
        }
        Self { coeffs }
    }

    pub fn from_ratios(coeffs: &[(i64, i64)]) -> Self {
        Self::new(
            coeffs
                .iter()
                .map(|&(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
                .collect(),
        )
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    fn lead(&self) -> &BigRational {
        self.coeffs.last().expect("nonempty")
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let lead = self.lead().clone();
        Poly::new(self.coeffs.iter().map(|c| c / &lead).collect())
    }

    pub fn derivative(&self) -> Poly {
        if self.degree() == 0 {
            return Poly::new(vec![BigRational::zero()]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * BigRational::from_integer(BigInt::from(k as i64)))
                .collect(),
        )
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        let mut out = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Quotient and remainder; `rhs` must be nonzero.
    pub fn div_rem(&self, rhs: &Poly) -> (Poly, Poly) {
        assert!(!rhs.is_zero(), "division by the zero polynomial");
        let mut rem = self.coeffs.clone();
        let d = rhs.degree();
        if self.degree() < d || self.is_zero() {
            return (Poly::new(vec![BigRational::zero()]), self.clone());
        }
        let mut quot = vec![BigRational::zero(); self.degree() - d + 1];
        let lead = rhs.lead();
        for k in (0..quot.len()).rev() {
            let q = &rem[k + d] / lead;
            if !q.is_zero() {
                for (j, c) in rhs.coeffs.iter().enumerate() {
                    rem[k + j] -= &q * c;
                }
            }
            quot[k] = q;
        }
        rem.truncate(d.max(1));
        (Poly::new(quot), Poly::new(rem))
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, rhs: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), rhs.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    /// Splits off `x^k`: returns `(k, p / x^k)`.
    pub fn strip_zero_root(&self) -> (usize, Poly) {
        let k = self.coeffs.iter().take_while(|c| c.is_zero()).count();
        if k == self.coeffs.len() {
            return (0, self.clone());
        }
        (k, Poly::new(self.coeffs[k..].to_vec()))
    }

    /// Yun's square-free factorisation: `p = c · Π f_i^i`, returned as
    /// `(f_i, i)` for nonconstant `f_i`.
    pub fn square_free(&self) -> Vec<(Poly, usize)> {
        let mut out = Vec::new();
        if self.degree() == 0 {
            return out;
        }
        let p = self.monic();
        let dp = p.derivative();
        let a0 = p.gcd(&dp);
        let mut b = p.div_rem(&a0).0;
        let mut c = dp.div_rem(&a0).0;
        let mut d = c.clone_sub(&b.derivative());
        let mut i = 1;
        loop {
            let a = b.gcd(&d);
            if a.degree() > 0 {
                out.push((a.clone(), i));
            }
            b = b.div_rem(&a).0;
            if b.degree() == 0 {
                break;
            }
            c = d.div_rem(&a).0;
            d = c.clone_sub(&b.derivative());
            i += 1;
        }
        out
    }

    fn clone_sub(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = BigRational::zero();
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).unwrap_or(&zero) - rhs.coeffs.get(k).unwrap_or(&zero)
                })
                .collect(),
        )
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| {
                acc * z + c.to_f64().unwrap_or(f64::NAN)
            })
    }

    /// Roots of a square-free polynomial: companion eigenvalues polished by
    /// Newton's method.
    pub fn simple_roots(&self) -> Vec<Complex64> {
        let p = self.monic();
        let d = p.degree();
        match d {
            0 => Vec::new(),
            1 => vec![Complex64::new(
                (-&p.coeffs[0]).to_f64().unwrap_or(f64::NAN),
                0.0,
            )],
            _ => {
                let c: Vec<f64> = p
                    .coeffs
                    .iter()
                    .map(|x| x.to_f64().unwrap_or(f64::NAN))
                    .collect();
                let companion = DMatrix::from_fn(d, d, |i, j| {
                    if j == d - 1 {
                        -c[i]
                    } else if i == j + 1 {
                        1.0
                    } else {
                        0.0
                    }
                });
                let dp = p.derivative();
                companion
                    .complex_eigenvalues()
                    .iter()
                    .map(|&z0| {
                        let mut z = z0;
                        for _ in 0..8 {
                            let dz = dp.eval_complex(z);
                            if dz.norm() == 0.0 {
                                break;
                            }
                            let step = p.eval_complex(z) / dz;
                            z -= step;
                            if step.norm() <= 1e-17 * z.norm().max(1.0) {
                                break;
                            }
                        }
                        z
                    })
                    .collect()
            }
        }
    }
}

/// Eigenvalue with its algebraic multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEigenvalue {
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Eigenvalues of `m` with multiplicities, from its exact characteristic
/// polynomial. Sorted by descending modulus, then descending real and
/// imaginary part. Zero is exact.
pub fn exact_spectrum(m: &RationalMatrix) -> Vec<ExactEigenvalue> {
    let (zeros, rest) = m.charpoly().strip_zero_root();
    let mut out: Vec<ExactEigenvalue> = rest
        .square_free()
        .into_iter()
        .flat_map(|(factor, mult)| {
            factor
                .simple_roots()
                .into_iter()
                .map(move |z| ExactEigenvalue {
                    value: clean(z),
                    multiplicity: mult,
                })
        })
        .collect();
    if zeros > 0 {
        out.push(ExactEigenvalue {
            value: Complex64::new(0.0, 0.0),
            multiplicity: zeros,
        });
    }
    out.sort_by(|a, b| {
        b.value
            .norm()
            .total_cmp(&a.value.norm())
            .then(b.value.re.total_cmp(&a.value.re))
            .then(b.value.im.total_cmp(&a.value.im))
    });
    out
}

/// Same as [`exact_spectrum`] with each eigenvalue repeated by multiplicity.
pub fn exact_eigenvalues(m: &RationalMatrix) -> Vec<Complex64> {
    exact_spectrum(m)
        .into_iter()
        .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
        .collect()
}

fn clean(z: Complex64) -> Complex64 {
    let im = if z.im.abs() <= 1e-14 * z.norm().max(1e-300) {
        0.0
    } else {
        z.im
    };
    Complex64::new(z.re, im)
}

/// Exact basis of the kernel of `m − λI`, one vector per free column with
/// that column set to 1.
pub fn rational_kernel(m: &RationalMatrix, lambda: &BigRational) -> Vec<Vec<BigRational>> {
    let n = m.dim();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = m.get(i, j).clone();
                    if i == j {
                        v - lambda
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let inv = a[row][col].recip();
        for v in a[row].iter_mut() {
            *v *= &inv;
        }
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let delta = &f * &a[row][c];
                    a[r][c] -= delta;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); n];
            v[f] = BigRational::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[r][f].clone();
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn charpoly_of_two_by_two() {
        let m = RationalMatrix::from_i64(2, &[1, 2, 3, 4], 1);
        // x² − 5x − 2
        assert_eq!(m.charpoly(), Poly::from_ratios(&[(-2, 1), (-5, 1), (1, 1)]));
    }

    #[test]
    fn square_free_splits_repeated_factor() {
        // (x − 1)² (x + 2)
        let p = Poly::from_ratios(&[(2, 1), (-3, 1), (0, 1), (1, 1)]);
        let parts = p.square_free();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], (Poly::from_ratios(&[(2, 1), (1, 1)]), 1));
        assert_eq!(parts[1], (Poly::from_ratios(&[(-1, 1), (1, 1)]), 2));
    }

    #[test]
    fn defective_zero_is_exact() {
        // nilpotent Jordan block
        let m = RationalMatrix::from_i64(3, &[0, 1, 0, 0, 0, 1, 0, 0, 0], 1);
        let s = exact_spectrum(&m);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].multiplicity, 3);
        assert_eq!(s[0].value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn complex_pair() {
        // rotation by 90° scaled by 1/2
        let m = RationalMatrix::from_i64(2, &[0, -1, 1, 0], 2);
        let s = exact_eigenvalues(&m);
        assert!((s[0] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        assert!((s[1] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn kernel_of_singular_matrix() {
        let m = RationalMatrix::from_i64(2, &[1, 1, 1, 1], 1);
        let k = rational_kernel(&m, &q(0, 1));
        assert_eq!(k, vec![vec![q(-1, 1), q(1, 1)]]);
    }

    #[test]
    fn div_rem_round_trip() {
        let a = Poly::from_ratios(&[(1, 2), (0, 1), (3, 1), (1, 1)]);
        let b = Poly::from_ratios(&[(1, 1), (2, 3)]);
        let (quot, rem) = a.div_rem(&b);
        assert!(rem.degree() == 0);
        let back = quot.mul(&b).clone_sub(&a.clone_sub(&rem));
        assert!(back.is_zero());
    }
}

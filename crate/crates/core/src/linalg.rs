//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;

pub type CMatrix = DMatrix<Complex64>;
pub type IMatrix = DMatrix<i64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn int_to_complex(m: &IMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x as f64, 0.0))
}

pub fn int_to_real(m: &IMatrix) -> DMatrix<f64> {
    m.map(|x| x as f64)
}

/// Largest entry-wise modulus of `x - x^*`.
pub fn hermitian_asymmetry(x: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(x + x^*) / 2`.
pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the Hermitian
/// part of `x` is used.
pub fn hermitian_eigenvalues(x: &CMatrix) -> DVector<f64> {
    if x.nrows() == 0 {
        return DVector::zeros(0);
    }
    let mut vals = hermitian_part(x).symmetric_eigenvalues();
    vals.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

pub fn max_eigenvalue(x: &CMatrix) -> f64 {
    if x.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    hermitian_part(x)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue together with a unit eigenvector.
pub fn max_eigenpair(x: &CMatrix) -> (f64, DVector<Complex64>) {
    let eig = hermitian_part(x).symmetric_eigen();
    let (idx, val) =
        eig.eigenvalues.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    (val, eig.eigenvectors.column(idx).into_owned())
}

pub fn principal_submatrix(x: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| x[(idx[i], idx[j])])
}

pub fn submatrix(x: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| x[(rows[i], cols[j])])
}

/// Smallest singular value divided by the largest; 0 for singular input.
pub fn reciprocal_condition(x: &CMatrix) -> f64 {
    let sv = x.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

pub fn sigma_min(x: &CMatrix) -> f64 {
    x.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sigma_max(x: &CMatrix) -> f64 {
    x.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn frobenius(x: &CMatrix) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diagonal<T>(blocks: &[DMatrix<T>]) -> DMatrix<T>
where
    T: nalgebra::Scalar + Zero,
{
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

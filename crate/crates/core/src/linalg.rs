//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(sigma_min, sigma_max)` of `m` read as a map from `C^ncols`.
///
/// With more columns than rows the map has a kernel, so `sigma_min` is
/// exactly zero.
pub fn extreme_singular_values(m: &CMatrix) -> (f64, f64) {
    let s = singular_values(m);
    let Some(&max) = s.first() else {
        return (0.0, 0.0);
    };
    let min = if m.ncols() > m.nrows() { 0.0 } else { *s.last().unwrap() };
    (min, max)
}

/// Cheap lower bound on the smallest singular value of a square matrix:
/// `1 / ||R^{-1}||_F` from a QR factorization. Returns 0 when `R` is singular.
pub fn sigma_min_lower_bound(m: &CMatrix) -> f64 {
    debug_assert!(m.is_square());
    let n = m.nrows();
    let r = m.clone().qr().r();
    // Columns of R^{-1} by back substitution against unit vectors.
    let mut frob2 = 0.0;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for col in 0..n {
        for i in (0..=col).rev() {
            let mut acc = if i == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for j in i + 1..=col {
                acc -= r[(i, j)] * x[j];
            }
            let d = r[(i, i)];
            if d.norm() == 0.0 {
                return 0.0;
            }
            x[i] = acc / d;
        }
        frob2 += x[..=col].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    if frob2.is_finite() && frob2 > 0.0 {
        1.0 / frob2.sqrt()
    } else {
        0.0
    }
}

/// Unit vector in the kernel of a wide matrix, or the right singular vector
/// of the smallest singular value otherwise. Also returns that singular value
/// (zero for wide matrices up to round-off).
pub fn min_right_singular_vector(m: &CMatrix) -> (CVector, f64) {
    let (rows, cols) = m.shape();
    // Zero-padding to a square matrix makes nalgebra return the full V.
    let padded = if cols > rows {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (idx, &smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    let v = v_t.row(idx).adjoint();
    (v, smin)
}

/// Right singular vectors for the smallest and the largest singular value of a
/// tall (or square) matrix.
pub fn extreme_right_singular_vectors(m: &CMatrix) -> (CVector, CVector) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let s = &svd.singular_values;
    let imin = (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    let imax = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    (v_t.row(imin).adjoint(), v_t.row(imax).adjoint())
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order; eigenvector `i` is column `i` of the returned matrix.
pub fn hermitian_eigen(z: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = z.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = z.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis of the column space of a full-column-rank matrix.
pub fn orthonormal_basis(m: &CMatrix) -> CMatrix {
    m.clone().qr().q()
}

/// Orthonormal basis of `range(m)` that stays correct for rank-deficient
/// input: Householder QR when the diagonal of `R` is well separated from zero,
/// otherwise the leading left singular vectors above `rel_tol * sigma_max`.
pub fn column_space_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    if m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    if m.ncols() <= m.nrows() {
        let qr = m.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].norm()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        if max > 0.0 && diag.iter().all(|&d| d > rel_tol * max * 1e3) {
            return qr.q();
        }
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = &svd.singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rel_tol * max).collect();
    u.select_columns(keep.iter())
}

/// Frobenius norm of the component of `y` orthogonal to `range(basis)`,
/// where `basis` has orthonormal columns.
pub fn projection_residual(basis: &CMatrix, y: &CMatrix) -> f64 {
    if basis.ncols() == 0 {
        return y.norm();
    }
    let coeffs = basis.adjoint() * y;
    (y - basis * coeffs).norm()
}

/// Hermitian part `(Z + Z^H) / 2`.
pub fn hermitian_part(z: &CMatrix) -> CMatrix {
    (z + z.adjoint()) * Complex64::new(0.5, 0.0)
}

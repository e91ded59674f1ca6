//! Thin helpers over faer for the small and medium dense problems used here.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;
pub type RMat = Mat<f64>;

pub fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

pub fn cmat_from_rows(rows: &[Vec<Complex64>]) -> CMat {
    let ncols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn rmat_from_rows(rows: &[Vec<f64>]) -> RMat {
    let ncols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

pub fn rmat_to_rows(a: &RMat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

pub fn cmat_to_rows(a: &CMat) -> Vec<Vec<Complex64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

pub fn complexify(a: &RMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| Complex64::new(a[(i, j)], 0.0))
}

pub fn adjoint(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn transpose(a: &RMat) -> RMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn max_abs_c(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_r(a: &RMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Singular values in nonincreasing order. Empty matrices have none.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    if let Ok(s) = a.singular_values() {
        return Ok(s);
    }
    // the QR iteration occasionally fails on clustered values; the adjoint
    // or the Hermitian dilation [[0, A], [A*, 0]] (eigenvalues ±σ) do not
    if let Ok(s) = adjoint(a).singular_values() {
        return Ok(s);
    }
    let (m, n) = (a.nrows(), a.ncols());
    let dil = Mat::from_fn(m + n, m + n, |r, c| {
        if r < m && c >= m {
            a[(r, c - m)]
        } else if r >= m && c < m {
            a[(c, r - m)].conj()
        } else {
            czero()
        }
    });
    let mut ev = hermitian_eigenvalues(&dil)?;
    ev.reverse();
    ev.truncate(m.min(n));
    Ok(ev.into_iter().map(|x| x.max(0.0)).collect())
}

pub fn singular_values_r(a: &RMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    if let Ok(s) = a.singular_values() {
        return Ok(s);
    }
    singular_values(&complexify(a))
}

/// Right singular vectors whose singular value is below `threshold`, plus the
/// directions forced into the kernel when `a` has fewer rows than columns.
pub fn right_kernel(a: &CMat, threshold: f64) -> Result<Vec<Vec<Complex64>>> {
    let k = a.ncols();
    if k == 0 {
        return Ok(Vec::new());
    }
    if a.nrows() == 0 {
        return Ok((0..k).map(|i| (0..k).map(|j| Complex64::new(f64::from(u8::from(i == j)), 0.0)).collect()).collect());
    }
    let Ok(svd) = a.svd() else {
        let gram = adjoint(a) * a;
        let eig = gram.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("eigen: {e:?}")))?;
        let (s, v) = (eig.S().column_vector(), eig.U());
        return Ok((0..k).filter(|&j| s[j].re.max(0.0).sqrt() < threshold).map(|j| (0..k).map(|i| v[(i, j)]).collect()).collect());
    };
    let s = svd.S().column_vector();
    let v = svd.V();
    let mut out = Vec::new();
    for j in 0..k {
        let sv = if j < s.nrows() { s[j].re } else { 0.0 };
        if sv < threshold {
            out.push((0..k).map(|i| v[(i, j)]).collect());
        }
    }
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigen: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &RMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigen: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Reciprocal 2-norm condition number; 0 for empty or singular input.
pub fn rcond(a: &CMat) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 && s.len() == a.nrows().min(a.ncols()) => Ok(lo / hi),
        _ => Ok(0.0),
    }
}

pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn inverse_r(a: &RMat) -> RMat {
    a.partial_piv_lu().inverse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_rank_one() {
        let a = cmat_from_rows(&[
            vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
            vec![Complex64::new(2.0, 0.0), Complex64::new(2.0, 0.0)],
        ]);
        let k = right_kernel(&a, 1e-10).unwrap();
        assert_eq!(k.len(), 1);
        assert!((k[0][0] + k[0][1]).norm() < 1e-12);
        let s = singular_values(&a).unwrap();
        assert!(s[0] > s[1]);
    }

    #[test]
    fn clustered_singular_values() {
        // a block-diagonal matrix with repeated 2×2 blocks
        let blk = [[Complex64::new(3.0, 1.0), Complex64::new(0.5, -2.0)], [Complex64::new(-1.0, 0.0), Complex64::new(2.0, 2.0)]];
        let a = Mat::from_fn(8, 8, |r, c| if r / 2 == c / 2 { blk[r % 2][c % 2] } else { czero() });
        let s = singular_values(&a).unwrap();
        let small = singular_values(&Mat::from_fn(2, 2, |r, c| blk[r][c])).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert!((v - small[i / 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_matrix_has_structural_kernel() {
        let a = cmat_from_rows(&[vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]]);
        assert_eq!(right_kernel(&a, 1e-10).unwrap().len(), 2);
    }
}

//! Thin wrappers over faer's dense complex factorizations.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use crate::error::{Error, Result};

/// All singular values, ascending.
pub fn singular_values(m: &Mat<c64>) -> Result<Vec<f64>> {
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Linalg(format!("singular values did not converge: {e:?}")))?;
    s.reverse();
    Ok(s)
}

/// Singular values ascending together with the matching right singular vectors.
pub fn right_singular_pairs(m: &Mat<c64>) -> Result<Vec<(f64, Vec<c64>)>> {
    let svd = m.svd().map_err(|e| Error::Linalg(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let n = s.nrows();
    let mut out: Vec<(f64, Vec<c64>)> =
        (0..n).map(|j| (s[j].re, (0..v.nrows()).map(|i| v[(i, j)]).collect())).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Solves m x = b by partial-pivoting LU.
pub fn solve(m: &Mat<c64>, b: &[c64]) -> Result<Vec<c64>> {
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}×{} system with right-hand side of length {}",
            m.nrows(),
            m.ncols(),
            b.len()
        )));
    }
    let lu = m.partial_piv_lu();
    let rhs = Mat::<c64>::from_fn(b.len(), 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<c64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Linalg("singular system".into()));
    }
    Ok(out)
}

pub fn mat_vec(m: &Mat<c64>, v: &[c64]) -> Vec<c64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn frobenius(m: &Mat<c64>) -> f64 {
    m.norm_l2()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_and_solve_agree_on_small_system() {
        let m = Mat::<c64>::from_fn(5, 5, |i, j| {
            c64::new(if i == j { 3.0 } else { 0.1 * (i + 2 * j) as f64 }, 0.2 * i as f64 - 0.1 * j as f64)
        });
        let s = singular_values(&m).unwrap();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        let pairs = right_singular_pairs(&m).unwrap();
        let (sigma, v) = &pairs[0];
        assert!((sigma - s[0]).abs() < 1e-12);
        assert!((vec_norm(&mat_vec(&m, v)) - sigma).abs() < 1e-12);
        let b: Vec<c64> = (0..5).map(|i| c64::new(i as f64, 1.0)).collect();
        let x = solve(&m, &b).unwrap();
        let r: Vec<c64> = mat_vec(&m, &x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&r) < 1e-12);
    }
}

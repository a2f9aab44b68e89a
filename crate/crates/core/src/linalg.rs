//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest eigenvalue (floored at 1)
/// are treated as zero by the spectral pseudo-inverse.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

/// Singular values below this fraction of the largest one are treated as zero
/// in rank and span tests.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Relative tolerance below which two φ values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Projection of a target onto the null eigenvectors larger than this
/// fraction of the target norm makes the pseudo-inverse form infinite.
const NULL_PROJECTION_TOLERANCE: f64 = 1e-8;

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { what })
}

/// Positive definite in the scale-relative sense: smallest eigenvalue greater
/// than `1e-12` times the largest.
pub(crate) fn is_well_posed_pd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    max > 0.0 && min > 1e-12 * max
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor, symmetrized to remove rounding asymmetry.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

/// `u' X⁻¹ u` for a positive semi-definite `X`, with the spectral convention
/// `0/0 = 0` and `z/0 = +∞`.
pub fn spectral_quadratic_form(x: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let eig = symmetrize(x).symmetric_eigen();
    let largest = eig.eigenvalues.max();
    let cutoff = PSEUDO_INVERSE_CUTOFF * largest.max(1.0);
    let unorm = u.norm();
    let mut total = 0.0;
    for (j, &d) in eig.eigenvalues.iter().enumerate() {
        let proj = eig.eigenvectors.column(j).dot(u);
        if d <= cutoff {
            if proj.abs() > NULL_PROJECTION_TOLERANCE * unorm {
                return f64::INFINITY;
            }
        } else {
            total += proj * proj / d;
        }
    }
    total
}

/// `u' (A'A)⁺ u` from the singular value decomposition of `A`, under the same
/// relative cutoff and infinity convention as [`spectral_quadratic_form`].
/// Avoids forming `A'A`, so the rounding error grows with the condition
/// number of `A` rather than its square.
pub fn design_quadratic_form(a: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    let unorm = u.norm();
    if a.nrows() == 0 || max_abs(a) == 0.0 {
        return if unorm == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let largest = svd.singular_values.max();
    let cutoff = PSEUDO_INVERSE_CUTOFF * largest * largest;
    let mut residual = u.clone();
    let mut total = 0.0;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(j).transpose();
        let proj = v.dot(u);
        if s * s > cutoff {
            total += proj * proj / (s * s);
            residual -= v * proj;
        }
    }
    if residual.norm() > NULL_PROJECTION_TOLERANCE * unorm {
        return f64::INFINITY;
    }
    total
}

/// Least-squares solve of `columns · x ≈ rhs` with rank decisions made at
/// [`RANK_TOLERANCE`].
#[derive(Debug, Clone)]
pub(crate) struct Projection {
    pub rank: usize,
    pub solution: DVector<f64>,
    pub residual: f64,
}

pub(crate) fn project(columns: &DMatrix<f64>, rhs: &DVector<f64>) -> Projection {
    if columns.ncols() == 0 || max_abs(columns) == 0.0 {
        return Projection {
            rank: 0,
            solution: DVector::zeros(columns.ncols()),
            residual: rhs.norm(),
        };
    }
    let svd = columns.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOLERANCE * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = svd.solve(rhs, eps).expect("SVD computed with both factors");
    let residual = (columns * &solution - rhs).norm();
    Projection {
        rank,
        solution,
        residual,
    }
}

pub(crate) fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 || max_abs(m) == 0.0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * smax)
        .count()
}

/// True when `v` lies in the column span of `columns`.
pub(crate) fn in_span(columns: &DMatrix<f64>, v: &DVector<f64>) -> bool {
    let norm = v.norm();
    if norm == 0.0 {
        return true;
    }
    project(columns, v).residual <= RANK_TOLERANCE * norm
}

/// Orthonormal basis (as columns) of the orthogonal complement of the column
/// span of `columns` in `R^dim`.
pub(crate) fn orthogonal_complement(columns: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    // Eigenvectors of A A' with zero eigenvalues span the complement.
    let gram = if columns.ncols() == 0 {
        DMatrix::zeros(dim, dim)
    } else {
        columns * columns.transpose()
    };
    let r = rank(columns);
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<DVector<f64>> = order
        .iter()
        .take(dim - r)
        .map(|&j| eig.eigenvectors.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub(crate) fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All ways to split `total` into `parts` non-negative integers, in
/// descending lexicographic order.
pub(crate) fn compositions_desc(total: u64, parts: usize) -> Vec<Vec<u64>> {
    fn fill(rest: u64, slot: usize, current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slot + 1 == current.len() {
            current[slot] = rest;
            out.push(current.clone());
            return;
        }
        for v in (0..=rest).rev() {
            current[slot] = v;
            fill(rest - v, slot + 1, current, out);
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        fill(total, 0, &mut vec![0; parts], &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_form_matches_inverse_when_full_rank() {
        let x = DMatrix::from_row_slice(2, 2, &[4.5, 1.5, 1.5, 1.0]);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        assert!((spectral_quadratic_form(&x, &u) - 1.0 / 2.25).abs() < 1e-14);
    }

    #[test]
    fn spectral_form_conventions() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        // 0/0 = 0 on the null direction orthogonal to the target
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert!((spectral_quadratic_form(&x, &e1) - 1.0).abs() < 1e-14);
        // z/0 = inf when the target has weight on the null direction
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(spectral_quadratic_form(&x, &e2).is_infinite());
    }

    #[test]
    fn span_and_rank() {
        let cols = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rank(&cols), 2);
        assert!(in_span(&cols, &DVector::from_vec(vec![2.0, -1.0, 0.0])));
        assert!(!in_span(&cols, &DVector::from_vec(vec![0.0, 0.0, 1.0])));
        let comp = orthogonal_complement(&cols, 3);
        assert_eq!(comp.ncols(), 1);
        assert!((comp[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(44, 3), 13244);
        assert_eq!(binomial(0, 0), 1);
    }

    #[test]
    fn compositions_in_descending_order() {
        let c = compositions_desc(2, 3);
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![2, 0, 0]);
        assert_eq!(c[5], vec![0, 0, 2]);
        assert!(c.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(compositions_desc(12, 8).len() as u128, binomial(19, 7));
    }
}

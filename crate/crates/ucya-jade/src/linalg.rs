//! Dense linear-algebra helpers shared by the estimation modules.
//!
//! Thin wrappers over LAPACK (through `ndarray-linalg`) that pin down the
//! orderings and conventions the estimators rely on: descending Hermitian
//! eigensystems, a deterministic general eigendecomposition, the TLS solve
//! used by both rotational-invariance estimators, and a small exact
//! assignment solver for ground-truth matching.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, Eigh, LeastSquaresSvd, Solve, UPLO, SVD};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Hermitian eigendecomposition with eigenvalues sorted in nonincreasing
/// order. Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn eigh_desc(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let (vals, vecs) = m.eigh(UPLO::Lower)?;
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = Array2::zeros((n, n));
    for (j, &i) in order.iter().enumerate() {
        sorted_vecs.column_mut(j).assign(&vecs.column(i));
    }
    Ok((sorted_vals, sorted_vecs))
}

/// General complex eigendecomposition with a deterministic ordering:
/// eigenvalues sorted by descending real part, ties broken by descending
/// imaginary part. Each eigenvector is normalized and phase-aligned so its
/// largest-magnitude entry is real positive.
pub fn eig_sorted(m: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    let (vals, vecs) = m.eig()?;
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (vals[a].re, vals[b].re);
        rb.partial_cmp(&ra)
            .unwrap()
            .then(vals[b].im.partial_cmp(&vals[a].im).unwrap())
    });
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut sorted_vecs: Array2<C64> = Array2::zeros((n, n));
    for (j, &i) in order.iter().enumerate() {
        let col = vecs.column(i);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let lead = col
            .iter()
            .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
            .copied()
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = if lead.norm() > 0.0 {
            lead.conj() / lead.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let scale = phase / norm;
        for (dst, &src) in sorted_vecs.column_mut(j).iter_mut().zip(col.iter()) {
            *dst = src * scale;
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Solve `A X = B` by total least squares: perturbations are allowed on both
/// sides, via the SVD of the stacked block `[A | B]`. Falls back to the
/// minimum-norm least-squares solution when the TLS sub-block is singular.
///
/// `A` and `B` must both be `k x n` with `k >= 1`; the result is `n x n`.
pub fn tls_solve(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let (k, n) = a.dim();
    if b.dim() != (k, n) {
        return Err(Error::Dimension(format!(
            "tls_solve: A is {:?}, B is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut stacked: Array2<C64> = Array2::zeros((k, 2 * n));
    stacked.slice_mut(s![.., ..n]).assign(a);
    stacked.slice_mut(s![.., n..]).assign(b);
    // Right singular vectors of [A B]; the trailing n columns span the
    // solution space of the invariance equation.
    let gram = stacked.t().mapv(|z| z.conj()).dot(&stacked);
    let (_vals, vecs) = eigh_desc(&gram)?;
    let v12 = vecs.slice(s![..n, n..]).to_owned();
    let v22 = vecs.slice(s![n.., n..]).to_owned();
    let (_, sv, _) = v22.svd(false, false)?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax <= 0.0 || smin / smax < 1e-12 {
        return lstsq_minnorm(a, b);
    }
    // psi = -V12 V22^{-1}, solved column-wise against V22^T.
    let v22t = v22.t().to_owned();
    let mut psi = Array2::zeros((n, n));
    for j in 0..n {
        let rhs = v12.row(j).to_owned();
        let col = v22t.solve(&rhs).map_err(Error::from)?;
        for i in 0..n {
            psi[[i, j]] = -col[i];
        }
    }
    Ok(psi)
}

/// Minimum-norm least-squares solve of `A X = B` (column by column, LAPACK
/// SVD-based, rank-revealing).
pub fn lstsq_minnorm(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.ncols();
    let m = b.ncols();
    let mut x = Array2::zeros((n, m));
    for j in 0..m {
        let rhs = b.column(j).to_owned();
        let sol = a.least_squares(&rhs).map_err(Error::from)?;
        x.column_mut(j).assign(&sol.solution);
    }
    Ok(x)
}

/// Kronecker product of two complex matrices.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let scale = a[[i, j]];
            for p in 0..rb {
                for q in 0..cb {
                    out[[i * rb + p, j * cb + q]] = scale * b[[p, q]];
                }
            }
        }
    }
    out
}

/// Kronecker product of two complex vectors (left index major).
pub fn kron_vec(a: &Array1<C64>, b: &Array1<C64>) -> Array1<C64> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Condition number (ratio of extreme singular values).
pub fn cond(m: &Array2<C64>) -> Result<f64> {
    let (_, sv, _) = m.svd(false, false)?;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Exact minimum-cost assignment via subset dynamic programming.
///
/// `cost[i][j]` is the cost of matching row `i` to column `j`; the matrix
/// must be square with `n <= 16`. Returns `perm` with `perm[i] = j`.
pub fn min_cost_assignment(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension("assignment matrix must be square".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > 16 {
        return Err(Error::Config(format!(
            "assignment supports up to 16 items, got {n}"
        )));
    }
    let full = 1usize << n;
    let mut dp = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    dp[0] = 0.0;
    for mask in 0..full {
        if !dp[mask].is_finite() {
            continue;
        }
        let i = (mask as u32).count_ones() as usize;
        if i == n {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) != 0 {
                continue;
            }
            let next = mask | (1 << j);
            let cand = dp[mask] + cost[[i, j]];
            if cand < dp[next] {
                dp[next] = cand;
                choice[next] = j;
            }
        }
    }
    let mut perm = vec![0usize; n];
    let mut mask = full - 1;
    while mask != 0 {
        let i = (mask as u32).count_ones() as usize - 1;
        let j = choice[mask];
        perm[i] = j;
        mask &= !(1 << j);
    }
    Ok(perm)
}

/// Hermitian part of a matrix, `(M + M^H)/2`.
pub fn hermitian_part(m: &Array2<C64>) -> Array2<C64> {
    let mh = m.t().mapv(|z| z.conj());
    (m + &mh).mapv(|z| z * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigh_desc_orders_eigenvalues() {
        let m = array![
            [c(1.0, 0.0), c(0.0, 1.0)],
            [c(0.0, -1.0), c(2.0, 0.0)]
        ];
        let (vals, vecs) = eigh_desc(&m).unwrap();
        assert!(vals[0] >= vals[1]);
        // residual M v = lambda v
        for j in 0..2 {
            let v = vecs.column(j).to_owned();
            let mv = m.dot(&v);
            for i in 0..2 {
                assert_abs_diff_eq!((mv[i] - v[i] * vals[j]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eig_sorted_recovers_diagonal() {
        let m = array![
            [c(2.0, 1.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(-1.0, 3.0)]
        ];
        let (vals, _) = eig_sorted(&m).unwrap();
        assert_abs_diff_eq!(vals[0].re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn tls_matches_exact_invariance() {
        // Build B = A * Psi exactly; TLS must recover Psi.
        let a = array![
            [c(1.0, 0.2), c(0.3, -0.1)],
            [c(-0.5, 0.7), c(0.9, 0.4)],
            [c(0.2, -0.3), c(1.1, 0.0)],
            [c(0.8, 0.1), c(-0.2, 0.6)]
        ];
        let psi = array![
            [c(0.6, 0.8), c(0.0, 0.0)],
            [c(0.1, -0.2), c(-0.9, 0.3)]
        ];
        let b = a.dot(&psi);
        let est = tls_solve(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((est[[i, j]] - psi[[i, j]]).norm(), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn assignment_beats_greedy_trap() {
        // Greedy row-wise matching picks (0,0) then pays 10; optimum is 4.
        let cost = array![[1.0, 2.0], [1.5, 10.0]];
        let perm = min_cost_assignment(&cost).unwrap();
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn kron_vec_layout_is_left_major() {
        let a = array![c(1.0, 0.0), c(2.0, 0.0)];
        let b = array![c(3.0, 0.0), c(5.0, 0.0), c(7.0, 0.0)];
        let k = kron_vec(&a, &b);
        assert_eq!(k.len(), 6);
        assert_abs_diff_eq!(k[4].re, 10.0, epsilon = 1e-15);
    }
}

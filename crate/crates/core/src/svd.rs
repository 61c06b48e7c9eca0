//! Singular value decomposition: one-sided Jacobi for dense matrices and a
//! seeded randomized range-finder for sparse ones, plus the optimal rank-d
//! truncation built on top.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Default cap on Jacobi sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 60;
/// Relative off-diagonal tolerance for Jacobi convergence.
pub const DEFAULT_JACOBI_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            tol: DEFAULT_JACOBI_TOL,
        }
    }
}

/// Result of a full or truncated SVD, singular values descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// Columns are left singular vectors, when requested.
    pub left_vectors: Option<DenseMatrix>,
    /// Columns are right singular vectors, when requested.
    pub right_vectors: Option<DenseMatrix>,
    /// True when only the leading part of the spectrum is retained.
    pub truncated: bool,
    pub retained: usize,
    /// Set when k + oversample exceeded min(rows, cols) and was clamped.
    pub oversample_clamped: bool,
}

impl SvdResult {
    /// U * diag(sigma) * V^T over the retained spectrum.
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        let (u, v) = match (&self.left_vectors, &self.right_vectors) {
            (Some(u), Some(v)) => (u, v),
            _ => return Err(Error::InvalidInput("factors not computed".into())),
        };
        let mut us = u.clone();
        for j in 0..self.retained.min(us.cols) {
            let s = self.singular_values[j];
            for i in 0..us.rows {
                us.data[i * us.cols + j] *= s;
            }
        }
        Ok(us.matmul_bt(v))
    }
}

/// Full SVD of a dense matrix by one-sided Jacobi rotations.
///
/// Columns of the working copy are orthogonalized in place; their final norms
/// are the singular values and the accumulated rotations give V.
pub fn svd_dense(m: &DenseMatrix, want_factors: bool) -> Result<SvdResult> {
    svd_dense_with(m, want_factors, SvdOptions::default())
}

pub fn svd_dense_with(m: &DenseMatrix, want_factors: bool, opts: SvdOptions) -> Result<SvdResult> {
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    m.check_finite()?;

    // One-sided Jacobi wants at least as many rows as columns; work on the
    // transpose otherwise and swap the factors back.
    if m.rows < m.cols {
        let t = m.transpose();
        let mut r = svd_dense_with(&t, want_factors, opts)?;
        std::mem::swap(&mut r.left_vectors, &mut r.right_vectors);
        return Ok(r);
    }

    let (rows, cols) = (m.rows, m.cols);
    // Column-major working copy: a[j] is column j.
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m.get(i, j)).collect())
        .collect();
    let mut v = DenseMatrix::identity(cols);

    let scale = m.frobenius_norm();
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    alpha += a[p][i] * a[p][i];
                    beta += a[q][i] * a[q][i];
                    gamma += a[p][i] * a[q][i];
                }
                if gamma.abs() <= opts.tol * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let ap = a[p][i];
                    let aq = a[q][i];
                    a[p][i] = c * ap - s * aq;
                    a[q][i] = s * ap + c * aq;
                }
                for i in 0..cols {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!(
            "Jacobi SVD did not converge within {} sweeps",
            opts.max_sweeps
        )));
    }

    let mut sigma: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    // Sort descending, carrying columns of the working copy and V along.
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    sigma = order.iter().map(|&i| sigma[i]).collect();

    let (left, right) = if want_factors {
        let mut u = DenseMatrix::zeros(rows, cols);
        let mut vs = DenseMatrix::zeros(cols, cols);
        for (newj, &oldj) in order.iter().enumerate() {
            let s = sigma[newj];
            if s > scale * 1e-300 && s > 0.0 {
                for i in 0..rows {
                    u.set(i, newj, a[oldj][i] / s);
                }
            }
            for i in 0..cols {
                vs.set(i, newj, v.get(i, oldj));
            }
        }
        complete_zero_columns(&mut u);
        (Some(u), Some(vs))
    } else {
        (None, None)
    };

    Ok(SvdResult {
        singular_values: sigma,
        left_vectors: left,
        right_vectors: right,
        truncated: false,
        retained: cols,
        oversample_clamped: false,
    })
}

/// Replace (near-)zero columns with vectors orthonormal to the rest, so U has
/// orthonormal columns even for rank-deficient inputs.
fn complete_zero_columns(u: &mut DenseMatrix) {
    let (rows, cols) = (u.rows, u.cols);
    for j in 0..cols {
        let norm: f64 = (0..rows).map(|i| u.get(i, j).powi(2)).sum::<f64>().sqrt();
        if norm > 0.5 {
            continue;
        }
        // Try canonical basis vectors until orthogonalization leaves mass.
        let mut placed = false;
        for cand in 0..rows {
            let mut col = vec![0.0; rows];
            col[cand] = 1.0;
            for _ in 0..2 {
                for k in 0..cols {
                    if k == j {
                        continue;
                    }
                    let dot: f64 = (0..rows).map(|i| col[i] * u.get(i, k)).sum();
                    for (i, c) in col.iter_mut().enumerate() {
                        *c -= dot * u.get(i, k);
                    }
                }
            }
            let n: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                for (i, c) in col.iter().enumerate() {
                    u.set(i, j, c / n);
                }
                placed = true;
                break;
            }
        }
        if !placed {
            // rows < cols cannot happen here (caller guarantees rows >= cols)
            for i in 0..rows {
                u.set(i, j, 0.0);
            }
        }
    }
}

/// Orthonormalize the columns of `y` in place by modified Gram-Schmidt with
/// one reorthogonalization pass. Near-zero columns are completed with
/// canonical basis directions.
fn orthonormalize(y: &mut DenseMatrix) {
    let (rows, cols) = (y.rows, y.cols);
    let overall: f64 = y.frobenius_norm().max(1e-300);
    for j in 0..cols {
        let mut col: Vec<f64> = (0..rows).map(|i| y.get(i, j)).collect();
        for _pass in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|i| col[i] * y.get(i, k)).sum();
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= dot * y.get(i, k);
                }
            }
        }
        let mut n: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= overall * 1e-12 {
            // Column is in the span of earlier ones; complete with a basis
            // vector orthogonal to them.
            for cand in 0..rows {
                col = vec![0.0; rows];
                col[cand] = 1.0;
                for _pass in 0..2 {
                    for k in 0..j {
                        let dot: f64 = (0..rows).map(|i| col[i] * y.get(i, k)).sum();
                        for (i, c) in col.iter_mut().enumerate() {
                            *c -= dot * y.get(i, k);
                        }
                    }
                }
                n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    break;
                }
            }
        }
        if n > 0.0 {
            for (i, c) in col.iter().enumerate() {
                y.set(i, j, c / n);
            }
        }
    }
}

/// Randomized truncated SVD of a sparse matrix (Halko-style range finder with
/// power iterations). Deterministic for a fixed seed.
pub fn svd_randomized(
    m: &SparseMatrix,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdResult> {
    let min_dim = m.rows.min(m.cols);
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if k == 0 || k > min_dim {
        return Err(Error::InvalidInput(format!(
            "k = {k} out of range [1, {min_dim}]"
        )));
    }
    let mut clamped = false;
    let mut s = k + oversample;
    if s > min_dim {
        s = min_dim;
        clamped = true;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = DenseMatrix::zeros(m.cols, s);
    for v in &mut omega.data {
        *v = StandardNormal.sample(&mut rng);
    }

    let mut q = m.mul_dense(&omega);
    orthonormalize(&mut q);
    for _ in 0..power_iters {
        let mut z = m.t_mul_dense(&q);
        orthonormalize(&mut z);
        q = m.mul_dense(&z);
        orthonormalize(&mut q);
    }

    // B = Q^T A, computed as (A^T Q)^T, shape s x cols.
    let b = m.t_mul_dense(&q).transpose();
    let small = svd_dense(&b, true)?;
    let ub = small.left_vectors.expect("factors requested");
    let vb = small.right_vectors.expect("factors requested");

    let u_full = q.matmul(&ub);
    let mut u = DenseMatrix::zeros(m.rows, k);
    let mut v = DenseMatrix::zeros(m.cols, k);
    for j in 0..k {
        for i in 0..m.rows {
            u.set(i, j, u_full.get(i, j));
        }
        for i in 0..m.cols {
            v.set(i, j, vb.get(i, j));
        }
    }
    let sigma: Vec<f64> = small.singular_values[..k].to_vec();

    Ok(SvdResult {
        singular_values: sigma,
        left_vectors: Some(u),
        right_vectors: Some(v),
        truncated: k < min_dim,
        retained: k,
        oversample_clamped: clamped,
    })
}

/// Best rank-d approximation in Frobenius norm: the SVD truncation.
pub fn best_rank_d(m: &DenseMatrix, d: usize) -> Result<DenseMatrix> {
    let min_dim = m.rows.min(m.cols);
    if d > min_dim {
        return Err(Error::InvalidInput(format!(
            "rank {d} exceeds min(rows, cols) = {min_dim}"
        )));
    }
    if d == 0 {
        return Ok(DenseMatrix::zeros(m.rows, m.cols));
    }
    let svd = svd_dense(m, true)?;
    let u = svd.left_vectors.as_ref().unwrap();
    let v = svd.right_vectors.as_ref().unwrap();
    let mut out = DenseMatrix::zeros(m.rows, m.cols);
    for t in 0..d {
        let s = svd.singular_values[t];
        if s == 0.0 {
            break;
        }
        for i in 0..m.rows {
            let us = u.get(i, t) * s;
            if us == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, r) in row.iter_mut().enumerate() {
                *r += us * v.get(j, t);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn diag_spectrum() {
        let m = DenseMatrix::diag(&[3.0, 1.0]);
        let r = svd_dense(&m, false).unwrap();
        assert!((r.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((r.singular_values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_spectrum() {
        let m = DenseMatrix::zeros(2, 2);
        let r = svd_dense(&m, false).unwrap();
        assert_eq!(r.singular_values, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_one_ones() {
        // Oracle: eigenvalues of M^T M = [[2,2],[2,2]] are 4 and 0.
        let m = DenseMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        let r = svd_dense(&m, true).unwrap();
        assert!((r.singular_values[0] - 2.0).abs() < 1e-12);
        assert!(r.singular_values[1].abs() < 1e-12);
        // U must stay orthonormal even with a zero singular value.
        let u = r.left_vectors.as_ref().unwrap();
        let utu = u.matmul_at(u);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((utu.get(i, j) - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        for &(rows, cols) in &[(5usize, 3usize), (3, 5), (20, 20), (40, 7)] {
            let m = random_matrix(rows, cols, 42 + rows as u64 * 13 + cols as u64);
            let r = svd_dense(&m, true).unwrap();
            let rec = r.reconstruct().unwrap();
            let diff: f64 = m
                .data
                .iter()
                .zip(&rec.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff / m.frobenius_norm() < 1e-10, "{rows}x{cols}");
            let u = r.left_vectors.as_ref().unwrap();
            let v = r.right_vectors.as_ref().unwrap();
            let utu = u.matmul_at(u);
            let vtv = v.matmul_at(v);
            for i in 0..utu.rows {
                for j in 0..utu.cols {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((utu.get(i, j) - e).abs() < 1e-8);
                    assert!((vtv.get(i, j) - e).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn randomized_matches_dense_on_diag() {
        let m = SparseMatrix::from_dense(&DenseMatrix::diag(&[5.0, 4.0, 3.0, 2.0, 1.0]));
        let r = svd_randomized(&m, 2, 3, 2, 7).unwrap();
        assert!((r.singular_values[0] - 5.0).abs() < 1e-6);
        assert!((r.singular_values[1] - 4.0).abs() < 1e-6);
        assert!(r.truncated);
        assert_eq!(r.retained, 2);
    }

    #[test]
    fn randomized_full_rank_matches_dense() {
        let d = random_matrix(12, 8, 99);
        let s = SparseMatrix::from_dense(&d);
        let dense = svd_dense(&d, false).unwrap();
        let rand = svd_randomized(&s, 8, 0, 2, 3).unwrap();
        for (a, b) in dense.singular_values.iter().zip(&rand.singular_values) {
            assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn randomized_zero_matrix() {
        let m = SparseMatrix::from_row_entries(4, 4, &vec![vec![]; 4]).unwrap();
        let r = svd_randomized(&m, 3, 1, 1, 0).unwrap();
        assert!(r.singular_values.iter().all(|&s| s.abs() < 1e-12));
        assert_eq!(r.singular_values.len(), 3);
    }

    #[test]
    fn randomized_is_deterministic() {
        let d = random_matrix(10, 6, 5);
        let s = SparseMatrix::from_dense(&d);
        let a = svd_randomized(&s, 3, 2, 1, 11).unwrap();
        let b = svd_randomized(&s, 3, 2, 1, 11).unwrap();
        assert_eq!(a.singular_values, b.singular_values);
    }

    #[test]
    fn randomized_clamps_oversample() {
        let d = random_matrix(4, 4, 6);
        let s = SparseMatrix::from_dense(&d);
        let r = svd_randomized(&s, 4, 10, 2, 0).unwrap();
        assert!(r.oversample_clamped);
        assert_eq!(r.retained, 4);
    }

    #[test]
    fn best_rank_d_diag() {
        let m = DenseMatrix::diag(&[3.0, 1.0]);
        let t = best_rank_d(&m, 1).unwrap();
        assert!((t.get(0, 0) - 3.0).abs() < 1e-12);
        assert!(t.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn best_rank_full_is_identityish() {
        let m = random_matrix(6, 4, 17);
        let t = best_rank_d(&m, 4).unwrap();
        let diff: f64 = m
            .data
            .iter()
            .zip(&t.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-10 * m.frobenius_norm().max(1.0));
    }

    #[test]
    fn eym_equality_random() {
        // Lemma: distance to the best rank-d approximation equals the tail norm.
        let m = random_matrix(50, 30, 23);
        let svd = svd_dense(&m, false).unwrap();
        let t = best_rank_d(&m, 10).unwrap();
        let dist: f64 = m
            .data
            .iter()
            .zip(&t.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let tail: f64 = svd.singular_values[10..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        assert!((dist - tail).abs() < 1e-8 * m.frobenius_norm());
    }

    #[test]
    fn best_rank_rejects_oversized_d() {
        let m = DenseMatrix::zeros(3, 2);
        assert!(best_rank_d(&m, 3).is_err());
    }

    #[test]
    fn frobenius_matches_spectrum() {
        let m = random_matrix(15, 9, 31);
        let svd = svd_dense(&m, false).unwrap();
        let from_sigma: f64 = svd.singular_values.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((from_sigma - m.frobenius_norm()).abs() < 1e-8 * m.frobenius_norm());
    }
}

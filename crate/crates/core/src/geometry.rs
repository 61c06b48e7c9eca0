//! Anisotropy of representation sets: average pairwise cosine similarity,
//! computed through the sum-of-unit-vectors identity.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use serde::Serialize;

/// A batch of representation vectors from one layer of one checkpoint.
#[derive(Debug, Clone)]
pub struct RepresentationSet {
    /// n rows of d-dimensional vectors.
    pub vectors: DenseMatrix,
    pub layer_id: String,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnisotropyRow {
    pub checkpoint_id: String,
    pub layer_id: String,
    pub n: usize,
    pub anisotropy: f64,
}

/// Average cosine similarity over ordered pairs i != j:
/// (1 / (n^2 - n)) * sum_{i != j} cos(h_i, h_j).
///
/// Uses sum_{i != j} cos = ||sum_i h_i / ||h_i|| ||^2 - n, which agrees with
/// the naive pairwise sum to within rounding.
pub fn anisotropy(vectors: &DenseMatrix) -> Result<f64> {
    let n = vectors.rows;
    let d = vectors.cols;
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "anisotropy needs at least 2 vectors, got {n}"
        )));
    }
    vectors.check_finite()?;
    let mut acc = vec![0.0; d];
    for i in 0..n {
        let row = vectors.row(i);
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!(
                "row {i} has zero norm; filter zero vectors before calling"
            )));
        }
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x / norm;
        }
    }
    let sum_sq: f64 = acc.iter().map(|x| x * x).sum();
    let nf = n as f64;
    Ok((sum_sq - nf) / (nf * nf - nf))
}

/// Reference O(n^2) implementation, used as the oracle in tests.
pub fn anisotropy_naive(vectors: &DenseMatrix) -> Result<f64> {
    let n = vectors.rows;
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 vectors".into()));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| vectors.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::InvalidInput(format!("row {i} has zero norm")));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dot: f64 = vectors.row(i).iter().zip(vectors.row(j)).map(|(a, b)| a * b).sum();
            total += dot / (norms[i] * norms[j]);
        }
    }
    let nf = n as f64;
    Ok(total / (nf * nf - nf))
}

/// One anisotropy value per set, in input order. An error on any set is
/// reported with the offending labels.
pub fn anisotropy_sweep(sets: &[RepresentationSet]) -> Result<Vec<AnisotropyRow>> {
    sets.iter()
        .map(|set| {
            let value = anisotropy(&set.vectors).map_err(|e| {
                Error::InvalidInput(format!(
                    "set (checkpoint {}, layer {}): {e}",
                    set.checkpoint_id, set.layer_id
                ))
            })?;
            Ok(AnisotropyRow {
                checkpoint_id: set.checkpoint_id.clone(),
                layer_id: set.layer_id.clone(),
                n: set.vectors.rows,
                anisotropy: value,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_directions() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert!((anisotropy(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_pair() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(anisotropy(&m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn e1_e1_e2() {
        // 6 ordered pairs, two of them cos = 1, rest 0.
        let m =
            DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((anisotropy(&m).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_row_and_single_vector() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(anisotropy(&m).is_err());
        let one = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(anisotropy(&one).is_err());
    }

    #[test]
    fn fast_path_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for n in [2usize, 3, 17, 120] {
            let data: Vec<f64> = (0..n * 8).map(|_| StandardNormal.sample(&mut rng)).collect();
            let m = DenseMatrix::new(n, 8, data).unwrap();
            let fast = anisotropy(&m).unwrap();
            let naive = anisotropy_naive(&m).unwrap();
            assert!((fast - naive).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn scale_invariance_per_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = DenseMatrix::new(10, 4, data.clone()).unwrap();
        let mut scaled = m.clone();
        for i in 0..10 {
            let c = rng.gen_range(0.1..5.0);
            for v in scaled.row_mut(i) {
                *v *= c;
            }
        }
        assert!((anisotropy(&m).unwrap() - anisotropy(&scaled).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sweep_preserves_order_and_labels_errors() {
        let good = RepresentationSet {
            vectors: DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            layer_id: "0".into(),
            checkpoint_id: "ckpt".into(),
        };
        let ortho = RepresentationSet {
            vectors: DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            layer_id: "1".into(),
            checkpoint_id: "ckpt".into(),
        };
        let rows = anisotropy_sweep(&[good.clone(), ortho]).unwrap();
        assert!((rows[0].anisotropy - 1.0).abs() < 1e-12);
        assert!(rows[1].anisotropy.abs() < 1e-12);

        let bad = RepresentationSet {
            vectors: DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            layer_id: "7".into(),
            checkpoint_id: "c2".into(),
        };
        let err = anisotropy_sweep(&[good, bad]).unwrap_err();
        assert!(err.to_string().contains("layer 7"));
    }
}

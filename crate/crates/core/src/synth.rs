//! Synthetic data generators. Everything here is seeded and deterministic so
//! the test and acceptance suites run offline.

use crate::error::Result;
use crate::head::FeatureDataset;
use crate::matrix::{DenseMatrix, SparseMatrix};
use crate::ngram::TokenStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for x in &mut m.data {
        let g: f64 = StandardNormal.sample(rng);
        *x = g * std;
    }
    m
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    (probs.len() - 1) as u32
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Features are unit-scale Gaussians; labels are sampled from
/// softmax(W0 x) where W0 has the given rank (full rank when None).
/// `logit_scale` sets the per-logit standard deviation, so larger values
/// plant sharper conditional distributions.
pub fn planted_task(
    v: usize,
    d: usize,
    n_train: usize,
    n_eval: usize,
    target_rank: Option<usize>,
    logit_scale: f64,
    seed: u64,
) -> FeatureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = match target_rank {
        None => gaussian_matrix(v, d, logit_scale, &mut rng),
        Some(r) => {
            let p = gaussian_matrix(v, r, 1.0, &mut rng);
            let q = gaussian_matrix(r, d, 1.0, &mut rng);
            let mut w = p.matmul(&q);
            w.scale(logit_scale / (r as f64).sqrt());
            w
        }
    };
    let feature_std = 1.0 / (d as f64).sqrt();
    let make_split = |n: usize, rng: &mut ChaCha8Rng| {
        let x = gaussian_matrix(n, d, feature_std, rng);
        let logits = x.matmul_bt(&w0);
        let labels: Vec<u32> = (0..n)
            .map(|i| sample_categorical(&softmax(logits.row(i)), rng))
            .collect();
        (x, labels)
    };
    let (train_features, train_labels) = make_split(n_train, &mut rng);
    let (eval_features, eval_labels) = make_split(n_eval, &mut rng);
    FeatureDataset {
        train_features,
        train_labels,
        eval_features,
        eval_labels,
        vocab_size: v as u32,
    }
}

/// Labels drawn uniformly, independent of the features: the best achievable
/// eval CE is ln(V).
pub fn independent_labels_task(
    v: usize,
    d: usize,
    n_train: usize,
    n_eval: usize,
    seed: u64,
) -> FeatureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feature_std = 1.0 / (d as f64).sqrt();
    let train_features = gaussian_matrix(n_train, d, feature_std, &mut rng);
    let eval_features = gaussian_matrix(n_eval, d, feature_std, &mut rng);
    let train_labels = (0..n_train).map(|_| rng.gen_range(0..v as u32)).collect();
    let eval_labels = (0..n_eval).map(|_| rng.gen_range(0..v as u32)).collect();
    FeatureDataset {
        train_features,
        train_labels,
        eval_features,
        eval_labels,
        vocab_size: v as u32,
    }
}

/// Two linearly separable Gaussian blobs, one per class.
pub fn separable_two_class(n_per_class: usize, d: usize, seed: u64) -> FeatureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2u32 {
        let center = if class == 0 { 3.0 } else { -3.0 };
        for _ in 0..n_per_class {
            let mut row: Vec<f64> = (0..d)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g * 0.3
                })
                .collect();
            row[0] += center;
            rows.push(row);
            labels.push(class);
        }
    }
    let all = DenseMatrix::from_rows(&rows).unwrap();
    // Alternate samples between train and eval so both splits see both blobs.
    let mut tf = Vec::new();
    let mut tl = Vec::new();
    let mut ef = Vec::new();
    let mut el = Vec::new();
    for i in 0..all.rows {
        if i % 4 == 0 {
            ef.push(all.row(i).to_vec());
            el.push(labels[i]);
        } else {
            tf.push(all.row(i).to_vec());
            tl.push(labels[i]);
        }
    }
    FeatureDataset {
        train_features: DenseMatrix::from_rows(&tf).unwrap(),
        train_labels: tl,
        eval_features: DenseMatrix::from_rows(&ef).unwrap(),
        eval_labels: el,
        vocab_size: 2,
    }
}

/// One-hot-feature task with planted full-support conditional distributions;
/// the unconstrained optimum is analytically the empirical conditional.
pub struct OneHotTask {
    pub dataset: FeatureDataset,
    /// Planted conditionals, one row per context.
    pub conditionals: DenseMatrix,
}

pub fn onehot_task(v: usize, num_contexts: usize, samples_per_context: usize, seed: u64) -> OneHotTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Dirichlet(1) rows via normalized exponentials: full support.
    let mut conditionals = DenseMatrix::zeros(num_contexts, v);
    for c in 0..num_contexts {
        let mut row: Vec<f64> = (0..v).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let sum: f64 = row.iter().sum();
        for x in &mut row {
            *x /= sum;
        }
        conditionals.row_mut(c).copy_from_slice(&row);
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..num_contexts {
        for _ in 0..samples_per_context {
            let mut onehot = vec![0.0; num_contexts];
            onehot[c] = 1.0;
            features.push(onehot);
            labels.push(sample_categorical(conditionals.row(c), &mut rng));
        }
    }
    let all = DenseMatrix::from_rows(&features).unwrap();
    // Keep train = eval-complement; every context appears in both splits.
    let mut tf = Vec::new();
    let mut tl = Vec::new();
    let mut ef = Vec::new();
    let mut el = Vec::new();
    for i in 0..all.rows {
        if i % samples_per_context.max(2) == 1 {
            ef.push(all.row(i).to_vec());
            el.push(labels[i]);
        } else {
            tf.push(all.row(i).to_vec());
            tl.push(labels[i]);
        }
    }
    OneHotTask {
        dataset: FeatureDataset {
            train_features: DenseMatrix::from_rows(&tf).unwrap(),
            train_labels: tl,
            eval_features: DenseMatrix::from_rows(&ef).unwrap(),
            eval_labels: el,
            vocab_size: v as u32,
        },
        conditionals,
    }
}

/// Mean entropy of the empirical conditional distribution of labels given a
/// one-hot feature row: the optimum train CE for one-hot features.
pub fn empirical_conditional_entropy(features: &DenseMatrix, labels: &[u32], vocab_size: u32) -> f64 {
    let contexts = features.cols;
    let v = vocab_size as usize;
    let mut counts = vec![vec![0u64; v]; contexts];
    let mut totals = vec![0u64; contexts];
    for (i, &y) in labels.iter().enumerate() {
        let c = features
            .row(i)
            .iter()
            .position(|&x| x == 1.0)
            .expect("one-hot features");
        counts[c][y as usize] += 1;
        totals[c] += 1;
    }
    let n = labels.len() as f64;
    let mut total_entropy = 0.0;
    for c in 0..contexts {
        if totals[c] == 0 {
            continue;
        }
        let t = totals[c] as f64;
        for &cnt in &counts[c] {
            if cnt > 0 {
                let p = cnt as f64 / t;
                total_entropy += -(t / n) * p * p.ln();
            }
        }
    }
    total_entropy
}

/// Zipfian synthetic corpus: token frequencies proportional to 1 / rank.
pub fn zipfian_corpus(total_tokens: usize, vocab_size: u32, doc_len: usize, seed: u64) -> Result<TokenStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = vocab_size as usize;
    let mut cdf: Vec<f64> = Vec::with_capacity(v);
    let mut acc = 0.0;
    for i in 0..v {
        acc += 1.0 / (i + 1) as f64;
        cdf.push(acc);
    }
    let total = acc;
    let mut documents = Vec::new();
    let mut produced = 0;
    while produced < total_tokens {
        let len = doc_len.min(total_tokens - produced);
        let doc: Vec<u32> = (0..len)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * total;
                cdf.partition_point(|&c| c < u) as u32
            })
            .collect();
        produced += len;
        documents.push(doc);
    }
    TokenStream::new(documents, vocab_size)
}

/// Row-stochastic C x V matrix of rank at most `rank`: every row is a convex
/// mixture of `rank` base distributions.
pub fn planted_mixture_matrix(c: usize, v: usize, rank: usize, seed: u64) -> Result<SparseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bases = DenseMatrix::zeros(rank, v);
    for r in 0..rank {
        let mut row: Vec<f64> = (0..v).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let sum: f64 = row.iter().sum();
        for x in &mut row {
            *x /= sum;
        }
        bases.row_mut(r).copy_from_slice(&row);
    }
    let mut entries = Vec::with_capacity(c);
    for _ in 0..c {
        let mut weights: Vec<f64> = (0..rank).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
        let mut row = vec![0.0; v];
        for (r, &w) in weights.iter().enumerate() {
            for (x, &b) in row.iter_mut().zip(bases.row(r)) {
                *x += w * b;
            }
        }
        // Renormalize to keep row sums at 1 to within rounding of the sum.
        let rsum: f64 = row.iter().sum();
        let pairs: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .map(|(j, &x)| (j, x / rsum))
            .collect();
        entries.push(pairs);
    }
    SparseMatrix::from_row_entries(c, v, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::svd_randomized;

    #[test]
    fn planted_task_is_deterministic() {
        let a = planted_task(5, 4, 100, 20, Some(2), 1.5, 3);
        let b = planted_task(5, 4, 100, 20, Some(2), 1.5, 3);
        assert_eq!(a.train_labels, b.train_labels);
        assert_eq!(a.train_features.data, b.train_features.data);
    }

    #[test]
    fn mixture_matrix_is_low_rank_and_stochastic() {
        let m = planted_mixture_matrix(60, 40, 5, 8).unwrap();
        for r in 0..m.rows {
            assert!((m.row_sum(r) - 1.0).abs() < 1e-12);
        }
        let svd = svd_randomized(&m, 10, 5, 3, 0).unwrap();
        assert!(svd.singular_values[5] < 1e-10, "sigma_6 = {}", svd.singular_values[5]);
    }

    #[test]
    fn zipf_corpus_shape() {
        let ts = zipfian_corpus(10_000, 50, 512, 1).unwrap();
        let total: usize = ts.documents.iter().map(|d| d.len()).sum();
        assert_eq!(total, 10_000);
        assert!(ts.documents.iter().flatten().all(|&t| t < 50));
    }
}

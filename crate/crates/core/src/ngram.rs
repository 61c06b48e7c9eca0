//! Naive n-gram estimation of contextual next-token distributions.
//!
//! Token streams are counted into (context -> next-token) tables, which are
//! normalized into a row-stochastic CSR matrix with one row per observed
//! context. Contexts never cross document boundaries. The resulting C x V
//! matrix is handed to the randomized SVD for dimensionality reports.

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;
use crate::spectral::SpectralSummary;
use crate::svd::svd_randomized;
use std::collections::BTreeMap;

/// Pre-tokenized corpus: documents of token ids over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct TokenStream {
    pub documents: Vec<Vec<u32>>,
    pub vocab_size: u32,
}

impl TokenStream {
    pub fn new(documents: Vec<Vec<u32>>, vocab_size: u32) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::InvalidInput("empty token stream".into()));
        }
        for (d, doc) in documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::InvalidInput(format!("document {d} is empty")));
            }
            if doc.iter().any(|&t| t >= vocab_size) {
                return Err(Error::InvalidInput(format!(
                    "document {d} has token id >= vocab_size {vocab_size}"
                )));
            }
        }
        Ok(TokenStream {
            documents,
            vocab_size,
        })
    }
}

/// Counts of next tokens per (n-1)-token context, ordered lexicographically.
#[derive(Debug, Clone)]
pub struct NGramCounts {
    pub n: usize,
    pub vocab_size: u32,
    pub counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>>,
    /// Contexts observed before any filtering.
    pub total_contexts: usize,
}

impl NGramCounts {
    pub fn total_ngrams(&self) -> u64 {
        self.counts
            .values()
            .map(|m| m.values().sum::<u64>())
            .sum()
    }
}

/// Row-stochastic context-probability matrix (C rows, V columns).
#[derive(Debug, Clone)]
pub struct ContextDistributionMatrix {
    pub matrix: SparseMatrix,
    /// Row index -> context tokens.
    pub contexts: Vec<Vec<u32>>,
    pub min_count: u64,
}

/// Count (n-1)-token contexts and their next tokens. Contexts never span two
/// documents.
pub fn count_ngrams(ts: &TokenStream, n: usize) -> Result<NGramCounts> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("n-gram order {n} must be >= 2")));
    }
    let mut counts: BTreeMap<Vec<u32>, BTreeMap<u32, u64>> = BTreeMap::new();
    for doc in &ts.documents {
        if doc.len() < n {
            continue;
        }
        for window in doc.windows(n) {
            let (context, next) = window.split_at(n - 1);
            *counts
                .entry(context.to_vec())
                .or_default()
                .entry(next[0])
                .or_insert(0) += 1;
        }
    }
    let total_contexts = counts.len();
    Ok(NGramCounts {
        n,
        vocab_size: ts.vocab_size,
        counts,
        total_contexts,
    })
}

/// Normalize counts into empirical conditional distributions, keeping only
/// contexts whose total count reaches `min_count`. Rows are ordered
/// lexicographically by context tokens.
pub fn build_context_matrix(c: &NGramCounts, min_count: u64) -> Result<ContextDistributionMatrix> {
    let mut contexts = Vec::new();
    let mut entries = Vec::new();
    for (context, next_counts) in &c.counts {
        let total: u64 = next_counts.values().sum();
        if total < min_count {
            continue;
        }
        let row: Vec<(usize, f64)> = next_counts
            .iter()
            .map(|(&tok, &cnt)| (tok as usize, cnt as f64 / total as f64))
            .collect();
        contexts.push(context.clone());
        entries.push(row);
    }
    if contexts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no context reaches min_count = {min_count}"
        )));
    }
    let matrix = SparseMatrix::from_row_entries(contexts.len(), c.vocab_size as usize, &entries)?;
    Ok(ContextDistributionMatrix {
        matrix,
        contexts,
        min_count,
    })
}

/// Top-k spectrum of the context matrix with the W-error curve against the
/// exact Frobenius norm of the sparse matrix.
pub fn language_rank_report(
    m: &ContextDistributionMatrix,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SpectralSummary> {
    let svd = svd_randomized(&m.matrix, k, oversample, power_iters, seed)?;
    let fro = m.matrix.frobenius_norm();
    SpectralSummary::from_spectrum(svd.singular_values, fro, svd.truncated)
}

//! Spectral diagnostics for linear language-modeling heads.
//!
//! The crate bundles the numerical pieces needed to study how the rank of a
//! linear softmax head limits modeling performance: dense and randomized SVD
//! with optimal low-rank truncation, spectrum-derived metrics (singular
//! entropy, W-error curves), representation anisotropy, n-gram
//! context-probability matrices, rank-constrained head training, scaling-law
//! fitting, and empirical verification of the loss-gap bounds.

pub mod error;
pub mod geometry;
pub mod head;
pub mod io;
pub mod matrix;
pub mod ngram;
pub mod scaling;
pub mod spectral;
pub mod svd;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, SparseMatrix};
pub use svd::{best_rank_d, svd_dense, svd_randomized, SvdResult};

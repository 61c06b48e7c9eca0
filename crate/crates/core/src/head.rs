//! Rank-constrained linear head training.
//!
//! Heads are either a single V x d matrix or a factor pair W = AB with inner
//! rank r. Training is mini-batch gradient descent on the softmax
//! cross-entropy with analytic gradients, linear warmup and cosine decay.
//! A full-batch trainer with Barzilai-Borwein steps and backtracking drives
//! the unconstrained head to a gradient-norm convergence criterion for the
//! theory checks.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// Frozen feature matrix with next-token labels, split into disjoint train
/// and eval parts.
#[derive(Debug, Clone)]
pub struct FeatureDataset {
    pub train_features: DenseMatrix,
    pub train_labels: Vec<u32>,
    pub eval_features: DenseMatrix,
    pub eval_labels: Vec<u32>,
    pub vocab_size: u32,
}

impl FeatureDataset {
    pub fn validate(&self) -> Result<()> {
        if self.train_features.rows != self.train_labels.len()
            || self.eval_features.rows != self.eval_labels.len()
        {
            return Err(Error::InvalidInput("feature/label count mismatch".into()));
        }
        if self.train_features.cols != self.eval_features.cols {
            return Err(Error::InvalidInput("train/eval dimension mismatch".into()));
        }
        if self
            .train_labels
            .iter()
            .chain(&self.eval_labels)
            .any(|&y| y >= self.vocab_size)
        {
            return Err(Error::InvalidInput("label out of vocabulary".into()));
        }
        self.train_features.check_finite()?;
        self.eval_features.check_finite()
    }

    pub fn feature_dim(&self) -> usize {
        self.train_features.cols
    }
}

/// Factor pair A (V x r), B (r x d); rank(AB) <= r by construction.
#[derive(Debug, Clone)]
pub struct RankConstrainedHead {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub rank: usize,
    pub init_seed: u64,
}

impl RankConstrainedHead {
    pub fn product(&self) -> DenseMatrix {
        self.a.matmul(&self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Schedule {
    /// Linear warmup to the peak, then cosine decay to zero.
    WarmupCosine,
    Constant,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 1e-2,
            warmup_frac: 0.05,
            schedule: Schedule::WarmupCosine,
            batch_size: 256,
            epochs: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::InvalidInput("warmup fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.peak_lr,
            Schedule::WarmupCosine => {
                let warmup = (self.warmup_frac * total_steps as f64).ceil() as usize;
                if step < warmup {
                    self.peak_lr * (step + 1) as f64 / warmup.max(1) as f64
                } else {
                    let span = (total_steps - warmup).max(1) as f64;
                    let progress = (step - warmup) as f64 / span;
                    self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub loss_trajectory: Vec<f64>,
    pub eval_ce: f64,
    pub eval_accuracy: f64,
    pub learning_rate: f64,
    pub steps: usize,
}

/// Head with entries drawn i.i.d. from N(0, 1), deterministic per seed.
pub fn init_head(v: usize, d: usize, r: usize, seed: u64) -> Result<RankConstrainedHead> {
    if r == 0 || r > d {
        return Err(Error::InvalidInput(format!(
            "inner rank {r} out of range [1, {d}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DenseMatrix::zeros(v, r);
    for x in &mut a.data {
        *x = StandardNormal.sample(&mut rng);
    }
    let mut b = DenseMatrix::zeros(r, d);
    for x in &mut b.data {
        *x = StandardNormal.sample(&mut rng);
    }
    Ok(RankConstrainedHead {
        a,
        b,
        rank: r,
        init_seed: seed,
    })
}

/// -log softmax(logits)[y] with max subtraction.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::InvalidInput("label out of range".into()));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite logit".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let logsumexp = logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(logsumexp - logits[y])
}

/// Softmax rows of `logits` in place, returning the mean cross-entropy
/// against `labels` and leaving G = softmax - onehot behind.
fn softmax_grad_inplace(logits: &mut DenseMatrix, labels: &[u32]) -> f64 {
    let v = logits.cols;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &mut logits.data[i * v..(i + 1) * v];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
        total += -(row[y as usize].max(f64::MIN_POSITIVE)).ln();
        row[y as usize] -= 1.0;
    }
    total / labels.len() as f64
}

fn gather_rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(idx.len(), m.cols);
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(m.row(i));
    }
    out
}

/// Mean CE and analytic gradients for the factored head on the given batch.
pub fn factored_gradients(
    features: &DenseMatrix,
    labels: &[u32],
    a: &DenseMatrix,
    b: &DenseMatrix,
) -> (f64, DenseMatrix, DenseMatrix) {
    let h = features.matmul_bt(b); // n x r
    let mut g = h.matmul_bt(a); // n x V logits, becomes G in place
    let loss = softmax_grad_inplace(&mut g, labels);
    let scale = 1.0 / labels.len() as f64;
    let mut grad_a = g.matmul_at(&h); // V x r
    grad_a.scale(scale);
    let gh = g.matmul(a); // n x r
    let mut grad_b = gh.matmul_at(features); // r x d
    grad_b.scale(scale);
    (loss, grad_a, grad_b)
}

/// Mean CE and analytic gradient for an unfactored V x d head on the batch.
pub fn full_gradients(
    features: &DenseMatrix,
    labels: &[u32],
    w: &DenseMatrix,
) -> (f64, DenseMatrix) {
    let mut g = features.matmul_bt(w); // n x V
    let loss = softmax_grad_inplace(&mut g, labels);
    let mut grad = g.matmul_at(features); // V x d
    grad.scale(1.0 / labels.len() as f64);
    (loss, grad)
}

/// Mean CE of W on (features, labels), in batches.
pub fn mean_cross_entropy(features: &DenseMatrix, labels: &[u32], w: &DenseMatrix) -> f64 {
    let mut total = 0.0;
    let chunk = 1024;
    let n = features.rows;
    let mut i = 0;
    while i < n {
        let end = (i + chunk).min(n);
        let idx: Vec<usize> = (i..end).collect();
        let x = gather_rows(features, &idx);
        let mut z = x.matmul_bt(w);
        total += softmax_grad_inplace(&mut z, &labels[i..end]) * (end - i) as f64;
        i = end;
    }
    total / n as f64
}

/// Mean CE and accuracy (argmax ties resolved to the lowest token id).
pub fn evaluate(features: &DenseMatrix, labels: &[u32], w: &DenseMatrix) -> (f64, f64) {
    let n = features.rows;
    let mut ce = 0.0;
    let mut correct = 0usize;
    let chunk = 1024;
    let mut i = 0;
    while i < n {
        let end = (i + chunk).min(n);
        let idx: Vec<usize> = (i..end).collect();
        let x = gather_rows(features, &idx);
        let z = x.matmul_bt(w);
        for (k, &y) in labels[i..end].iter().enumerate() {
            let row = z.row(k);
            ce += cross_entropy(row, y as usize).expect("finite logits");
            let mut best = 0usize;
            for (j, &val) in row.iter().enumerate() {
                if val > row[best] {
                    best = j;
                }
            }
            if best == y as usize {
                correct += 1;
            }
        }
        i = end;
    }
    (ce / n as f64, correct as f64 / n as f64)
}

fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Train a factored head by mini-batch gradient descent. Deterministic per
/// (seed, config, data).
pub fn train_head(
    ds: &FeatureDataset,
    head: &RankConstrainedHead,
    cfg: &TrainConfig,
) -> Result<(RankConstrainedHead, TrainReport)> {
    ds.validate()?;
    cfg.validate()?;
    if head.b.cols != ds.feature_dim() {
        return Err(Error::InvalidInput(format!(
            "head expects dimension {}, dataset has {}",
            head.b.cols,
            ds.feature_dim()
        )));
    }
    let n = ds.train_features.rows;
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = head.a.clone();
    let mut b = head.b.clone();
    let mut trajectory = Vec::with_capacity(total_steps);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
            let x = gather_rows(&ds.train_features, &batch);
            let labels: Vec<u32> = batch.iter().map(|&i| ds.train_labels[i]).collect();
            let (loss, ga, gb) = factored_gradients(&x, &labels, &a, &b);
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            trajectory.push(loss);
            let lr = cfg.lr_at(step, total_steps);
            a = a.add_scaled(&ga, -lr)?;
            b = b.add_scaled(&gb, -lr)?;
            if !a.frobenius_norm().is_finite() || !b.frobenius_norm().is_finite() {
                return Err(Error::Divergence { step });
            }
            step += 1;
        }
    }
    let trained = RankConstrainedHead {
        a,
        b,
        rank: head.rank,
        init_seed: head.init_seed,
    };
    let w = trained.product();
    let (eval_ce, eval_accuracy) = evaluate(&ds.eval_features, &ds.eval_labels, &w);
    Ok((
        trained,
        TrainReport {
            loss_trajectory: trajectory,
            eval_ce,
            eval_accuracy,
            learning_rate: cfg.peak_lr,
            steps: step,
        },
    ))
}

/// Train an unfactored V x d head; the W* surrogate on the dataset.
pub fn train_full_head(ds: &FeatureDataset, cfg: &TrainConfig) -> Result<(DenseMatrix, TrainReport)> {
    ds.validate()?;
    cfg.validate()?;
    let v = ds.vocab_size as usize;
    let d = ds.feature_dim();
    let n = ds.train_features.rows;
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = DenseMatrix::zeros(v, d);
    let mut trajectory = Vec::with_capacity(total_steps);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
            let x = gather_rows(&ds.train_features, &batch);
            let labels: Vec<u32> = batch.iter().map(|&i| ds.train_labels[i]).collect();
            let (loss, gw) = full_gradients(&x, &labels, &w);
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            trajectory.push(loss);
            let lr = cfg.lr_at(step, total_steps);
            w = w.add_scaled(&gw, -lr)?;
            if !w.frobenius_norm().is_finite() {
                return Err(Error::Divergence { step });
            }
            step += 1;
        }
    }
    let (eval_ce, eval_accuracy) = evaluate(&ds.eval_features, &ds.eval_labels, &w);
    Ok((
        w,
        TrainReport {
            loss_trajectory: trajectory,
            eval_ce,
            eval_accuracy,
            learning_rate: cfg.peak_lr,
            steps: step,
        },
    ))
}

/// Full-batch trainer driving the unconstrained head to a gradient-norm
/// criterion, with Barzilai-Borwein steps safeguarded by backtracking.
pub fn train_full_to_convergence(
    features: &DenseMatrix,
    labels: &[u32],
    vocab_size: u32,
    grad_tol: f64,
    max_steps: usize,
) -> Result<(DenseMatrix, f64, f64, usize)> {
    let v = vocab_size as usize;
    let d = features.cols;
    let mut w = DenseMatrix::zeros(v, d);
    let (mut loss, mut grad) = full_gradients(features, labels, &w);
    let mut alpha = 1.0;
    let mut prev_w: Option<DenseMatrix> = None;
    let mut prev_grad: Option<DenseMatrix> = None;
    for step in 0..max_steps {
        let gnorm = grad.frobenius_norm();
        if gnorm < grad_tol {
            return Ok((w, loss, gnorm, step));
        }
        if let (Some(pw), Some(pg)) = (&prev_w, &prev_grad) {
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..w.data.len() {
                let s = w.data[i] - pw.data[i];
                let y = grad.data[i] - pg.data[i];
                ss += s * s;
                sy += s * y;
            }
            if sy > 0.0 && ss > 0.0 {
                alpha = (ss / sy).clamp(1e-8, 1e8);
            }
        }
        // Backtrack until sufficient decrease.
        let g2 = gnorm * gnorm;
        let mut t = alpha;
        let mut candidate;
        let mut cand_loss;
        let mut tries = 0;
        loop {
            candidate = w.add_scaled(&grad, -t)?;
            cand_loss = mean_cross_entropy(features, labels, &candidate);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * t * g2 {
                break;
            }
            // Near the optimum the decrease drops under f64 resolution;
            // accept a non-increasing step instead of halving forever.
            if tries >= 8 && cand_loss.is_finite() && cand_loss <= loss + 1e-12 * (1.0 + loss.abs()) {
                break;
            }
            t *= 0.5;
            tries += 1;
            if tries > 60 {
                return Err(Error::NonConvergence(
                    "line search stalled in convergence trainer".into(),
                ));
            }
        }
        prev_w = Some(w);
        prev_grad = Some(grad);
        w = candidate;
        let (l, g) = full_gradients(features, labels, &w);
        loss = l;
        grad = g;
        let _ = cand_loss;
    }
    let gnorm = grad.frobenius_norm();
    Err(Error::NonConvergence(format!(
        "gradient norm {gnorm:.3e} above tolerance {grad_tol:.1e} after {max_steps} steps"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub rank: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eval_ce: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankBest {
    pub rank: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eval_ce: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub best_per_rank: Vec<RankBest>,
}

/// Grid sweep over (rank, learning rate, seed). Failed cells are recorded,
/// not fatal. Cells run in parallel; results are ordered by grid position.
pub fn rank_sweep(
    ds: &FeatureDataset,
    ranks: &[usize],
    learning_rates: &[f64],
    seeds: &[u64],
    base_cfg: &TrainConfig,
) -> Result<SweepResult> {
    ds.validate()?;
    if ranks.is_empty() || learning_rates.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("empty sweep grid".into()));
    }
    let d = ds.feature_dim();
    let v = ds.vocab_size as usize;
    let grid: Vec<(usize, f64, u64)> = ranks
        .iter()
        .flat_map(|&r| {
            learning_rates
                .iter()
                .flat_map(move |&lr| seeds.iter().map(move |&s| (r, lr, s)))
        })
        .collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(r, lr, seed)| {
            let cfg = TrainConfig {
                peak_lr: lr,
                seed,
                ..base_cfg.clone()
            };
            let outcome = init_head(v, d, r, seed)
                .and_then(|head| train_head(ds, &head, &cfg));
            match outcome {
                Ok((_, report)) => SweepCell {
                    rank: r,
                    learning_rate: lr,
                    seed,
                    eval_ce: Some(report.eval_ce),
                    eval_accuracy: Some(report.eval_accuracy),
                    error: None,
                },
                Err(e) => SweepCell {
                    rank: r,
                    learning_rate: lr,
                    seed,
                    eval_ce: None,
                    eval_accuracy: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best_per_rank = Vec::new();
    for &r in ranks {
        let best = cells
            .iter()
            .filter(|c| c.rank == r && c.eval_ce.is_some())
            .min_by(|a, b| a.eval_ce.partial_cmp(&b.eval_ce).unwrap());
        if let Some(c) = best {
            best_per_rank.push(RankBest {
                rank: r,
                learning_rate: c.learning_rate,
                seed: c.seed,
                eval_ce: c.eval_ce.unwrap(),
                eval_accuracy: c.eval_accuracy.unwrap(),
            });
        }
    }
    Ok(SweepResult {
        cells,
        best_per_rank,
    })
}

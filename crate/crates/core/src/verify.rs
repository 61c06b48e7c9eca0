//! Empirical checks of the loss-gap theory on small synthetic tasks where the
//! unconstrained optimum is computable: first-order perturbation probes, the
//! optimal low-rank truncation equality, and the rank-sweep ordering between
//! trained and truncated low-rank heads.

use crate::error::{Error, Result};
use crate::head::{
    init_head, mean_cross_entropy, train_full_to_convergence, train_head, FeatureDataset,
    RankConstrainedHead, TrainConfig,
};
use crate::matrix::DenseMatrix;
use crate::svd::{best_rank_d, svd_dense};
use crate::synth;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Gaussian,
}

/// Description of a synthetic verification task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: FeatureKind,
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub planted_rank: Option<usize>,
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    pub seed: u64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_logit_scale() -> f64 {
    2.0
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_max_steps() -> usize {
    200_000
}

/// Task with its converged unconstrained head and spectrum.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub features: DenseMatrix,
    pub labels: Vec<u32>,
    pub vocab_size: u32,
    pub w_star: DenseMatrix,
    pub w_star_loss: f64,
    pub grad_norm: f64,
    /// Descending singular values of w_star.
    pub spectrum: Vec<f64>,
}

/// Build the task data and train the unconstrained head until the mean
/// gradient Frobenius norm falls under the requested tolerance.
pub fn build_task(spec: &TaskSpec) -> Result<SyntheticTask> {
    if spec.vocab_size < 2 || spec.feature_dim < 1 || spec.n_train < spec.feature_dim {
        return Err(Error::InvalidInput(
            "task needs vocab_size >= 2 and n_train >= feature_dim".into(),
        ));
    }
    let (features, labels) = match spec.kind {
        FeatureKind::OneHot => {
            let per_context = spec.n_train / spec.feature_dim;
            if per_context == 0 {
                return Err(Error::InvalidInput("too few samples per context".into()));
            }
            let task = synth::onehot_task(spec.vocab_size, spec.feature_dim, per_context, spec.seed);
            // The verification set is the training set itself.
            let mut f = task.dataset.train_features;
            let mut l = task.dataset.train_labels;
            for i in 0..task.dataset.eval_features.rows {
                let row = task.dataset.eval_features.row(i).to_vec();
                f.data.extend(row);
                f.rows += 1;
                l.push(task.dataset.eval_labels[i]);
            }
            (f, l)
        }
        FeatureKind::Gaussian => {
            let ds = synth::planted_task(
                spec.vocab_size,
                spec.feature_dim,
                spec.n_train,
                1,
                spec.planted_rank,
                spec.logit_scale,
                spec.seed,
            );
            (ds.train_features, ds.train_labels)
        }
    };
    let (w_star, loss, grad_norm, _steps) = train_full_to_convergence(
        &features,
        &labels,
        spec.vocab_size as u32,
        spec.grad_tol,
        spec.max_steps,
    )?;
    let spectrum = svd_dense(&w_star, false)?.singular_values;
    Ok(SyntheticTask {
        features,
        labels,
        vocab_size: spec.vocab_size as u32,
        w_star,
        w_star_loss: loss,
        grad_norm,
        spectrum,
    })
}

/// A unit-Frobenius perturbation direction and a decreasing epsilon ladder.
#[derive(Debug, Clone)]
pub struct PerturbationProbe {
    pub direction: DenseMatrix,
    pub epsilons: Vec<f64>,
}

impl PerturbationProbe {
    pub fn new(direction: DenseMatrix, epsilons: Vec<f64>) -> Result<Self> {
        let norm = direction.frobenius_norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "direction must have unit Frobenius norm, got {norm}"
            )));
        }
        if epsilons.is_empty() || epsilons.iter().any(|&e| e <= 0.0) {
            return Err(Error::InvalidInput("epsilons must be positive".into()));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("epsilons must be strictly decreasing".into()));
        }
        Ok(PerturbationProbe { direction, epsilons })
    }

    /// Random unit direction, deterministic per seed.
    pub fn random(rows: usize, cols: usize, epsilons: Vec<f64>, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = DenseMatrix::zeros(rows, cols);
        for x in &mut m.data {
            *x = rand_distr::StandardNormal.sample(&mut rng);
        }
        let norm = m.frobenius_norm();
        m.scale(1.0 / norm);
        // Renormalize once more so the norm is 1 to within 1e-12.
        let n2 = m.frobenius_norm();
        m.scale(1.0 / n2);
        Self::new(m, epsilons)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbePoint {
    pub epsilon: f64,
    /// Mean over samples of |L(W* + eps M, x_i, y_i) - L(W*, x_i, y_i)|.
    pub mean_abs_delta: f64,
    pub ratio: f64,
}

fn per_sample_losses(features: &DenseMatrix, labels: &[u32], w: &DenseMatrix) -> Vec<f64> {
    let z = features.matmul_bt(w);
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| crate::head::cross_entropy(z.row(i), y as usize).expect("finite logits"))
        .collect()
}

/// First-order probe: mean absolute per-sample loss change under W* + eps M,
/// per epsilon, with the ratio to eps.
pub fn lemma1_probe(task: &SyntheticTask, probe: &PerturbationProbe) -> Result<Vec<ProbePoint>> {
    if probe.direction.rows != task.w_star.rows || probe.direction.cols != task.w_star.cols {
        return Err(Error::InvalidInput("probe direction shape mismatch".into()));
    }
    let base = per_sample_losses(&task.features, &task.labels, &task.w_star);
    probe
        .epsilons
        .iter()
        .map(|&eps| {
            let perturbed = task.w_star.add_scaled(&probe.direction, eps)?;
            let losses = per_sample_losses(&task.features, &task.labels, &perturbed);
            let mean_abs: f64 = losses
                .iter()
                .zip(&base)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / base.len() as f64;
            Ok(ProbePoint {
                epsilon: eps,
                mean_abs_delta: mean_abs,
                ratio: mean_abs / eps,
            })
        })
        .collect()
}

/// Directional-derivative oracle for the probe: mean_i |<g_i, M>| from the
/// analytic per-sample gradients at W*.
pub fn lemma1_oracle(task: &SyntheticTask, direction: &DenseMatrix) -> f64 {
    let z = task.features.matmul_bt(&task.w_star);
    let mx = task.features.matmul_bt(direction); // n x V, row i = (M x_i)^T
    let mut total = 0.0;
    for (i, &y) in task.labels.iter().enumerate() {
        let row = z.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let mut dd = 0.0;
        for j in 0..row.len() {
            let p = exps[j] / sum;
            let indicator = if j == y as usize { 1.0 } else { 0.0 };
            dd += (p - indicator) * mx.get(i, j);
        }
        total += dd.abs();
    }
    total / task.labels.len() as f64
}

/// Relative residual of the truncation equality:
/// | ||M - M_d||_F - sqrt(tail) | / ||M||_F.
pub fn eym_verify(m: &DenseMatrix, d: usize) -> Result<f64> {
    let svd = svd_dense(m, false)?;
    let approx = best_rank_d(m, d)?;
    let dist: f64 = m
        .data
        .iter()
        .zip(&approx.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let tail: f64 = svd.singular_values[d..]
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt();
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok((dist - tail).abs());
    }
    Ok((dist - tail).abs() / norm)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem1Point {
    pub d: usize,
    /// sqrt of the spectrum tail beyond d.
    pub tail_norm: f64,
    /// Loss of the rank-d truncation of W* minus the loss of W*.
    pub gap_truncated: f64,
    /// Loss of a trained rank-d head minus the loss of W*.
    pub gap_trained: f64,
    pub w_error: f64,
}

fn spectral_init(task: &SyntheticTask, d: usize) -> Result<RankConstrainedHead> {
    let svd = svd_dense(&task.w_star, true)?;
    let u = svd.left_vectors.as_ref().unwrap();
    let v = svd.right_vectors.as_ref().unwrap();
    let mut a = DenseMatrix::zeros(task.w_star.rows, d);
    let mut b = DenseMatrix::zeros(d, task.w_star.cols);
    for j in 0..d {
        let s = svd.singular_values[j].sqrt();
        for i in 0..a.rows {
            a.set(i, j, u.get(i, j) * s);
        }
        for i in 0..b.cols {
            b.set(j, i, v.get(i, j) * s);
        }
    }
    Ok(RankConstrainedHead {
        a,
        b,
        rank: d,
        init_seed: 0,
    })
}

/// Loss gaps of truncated and trained rank-d heads against W*, on the
/// training set, for each candidate rank. The trained head is the better of
/// a random and a spectral initialization, both optimized with `cfg`.
pub fn theorem1_sweep(
    task: &SyntheticTask,
    ranks: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<Theorem1Point>> {
    let min_dim = task.w_star.rows.min(task.w_star.cols);
    if ranks.iter().any(|&r| r == 0 || r > min_dim) {
        return Err(Error::InvalidInput(format!(
            "ranks must lie in [1, {min_dim}]"
        )));
    }
    let fro = task.w_star.frobenius_norm();
    let ds = FeatureDataset {
        train_features: task.features.clone(),
        train_labels: task.labels.clone(),
        eval_features: task.features.clone(),
        eval_labels: task.labels.clone(),
        vocab_size: task.vocab_size,
    };
    let mut points = Vec::with_capacity(ranks.len());
    for &d in ranks {
        let tail_norm: f64 = task.spectrum[d.min(task.spectrum.len())..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        let truncated = best_rank_d(&task.w_star, d)?;
        let loss_truncated = mean_cross_entropy(&task.features, &task.labels, &truncated);
        let mut best_loss = f64::INFINITY;
        let random = init_head(task.vocab_size as usize, task.features.cols, d, cfg.seed)?;
        for head in [random, spectral_init(task, d)?] {
            let (trained, _) = train_head(&ds, &head, cfg)?;
            let loss = mean_cross_entropy(&task.features, &task.labels, &trained.product());
            if loss < best_loss {
                best_loss = loss;
            }
        }
        points.push(Theorem1Point {
            d,
            tail_norm,
            gap_truncated: loss_truncated - task.w_star_loss,
            gap_trained: best_loss - task.w_star_loss,
            w_error: tail_norm / fro,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCurve {
    /// Points sorted by ascending w_error.
    pub points: Vec<Theorem1Point>,
    /// Smallest w_error whose trained gap exceeds the threshold, if any.
    pub knee: Option<f64>,
    pub threshold: f64,
}

/// Sort sweep output by w_error and flag where the trained gap first exceeds
/// the threshold.
pub fn gap_vs_werror_report(sweep: &[Theorem1Point], threshold: f64) -> GapCurve {
    let mut points = sweep.to_vec();
    points.sort_by(|a, b| a.w_error.partial_cmp(&b.w_error).unwrap());
    let knee = points
        .iter()
        .find(|p| p.gap_trained > threshold)
        .map(|p| p.w_error);
    GapCurve {
        points,
        knee,
        threshold,
    }
}

/// Spearman rank correlation; used to check the monotone relation between
/// trained gaps and spectrum tails.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let rx = rank(x);
    let ry = rank(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..x.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    num / (dx.sqrt() * dy.sqrt())
}

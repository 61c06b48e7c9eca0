use crate::manifest::RunManifest;
use crate::output::{fmt, write_json, Csv};
use crate::Outcome;
use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankscope::error::{Error, Result};
use rankscope::head::TrainConfig;
use rankscope::matrix::DenseMatrix;
use rankscope::verify::{
    build_task, eym_verify, lemma1_oracle, lemma1_probe, theorem1_sweep, PerturbationProbe,
    TaskSpec,
};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// First-order loss response to head perturbations.
    Lemma1,
    /// Best rank-d error equals the singular tail norm.
    Eym,
    /// Loss ordering: optimum <= trained rank-d <= truncated rank-d.
    Theorem1,
}

#[derive(Parser)]
pub struct Args {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Task description (JSON).
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training epochs for the theorem1 suite.
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// Peak learning rate for the theorem1 suite.
    #[arg(long, default_value_t = 0.05)]
    pub peak_lr: f64,
}

#[derive(Serialize)]
struct SuiteResult {
    suite: String,
    pass: bool,
    checks: usize,
    failures: usize,
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Lemma1 => "lemma1",
        Suite::Eym => "eym",
        Suite::Theorem1 => "theorem1",
    }
}

pub fn run(args: &Args) -> std::result::Result<(), Outcome> {
    let bytes = std::fs::read(&args.task).map_err(Error::from)?;
    let spec: TaskSpec = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("task JSON: {e}")))?;

    let mut manifest = RunManifest::new(
        "verify",
        spec.seed,
        json!({
            "suite": suite_name(args.suite),
            "task": args.task.display().to_string(),
            "epochs": args.epochs,
            "peak_lr": args.peak_lr,
        }),
    );
    manifest.add_input(&args.task)?;

    std::fs::create_dir_all(&args.out_dir).map_err(Error::from)?;
    let csv_path = args.out_dir.join(format!("{}.csv", suite_name(args.suite)));
    let result_path = args.out_dir.join("result.json");
    manifest.add_output(&csv_path);
    manifest.add_output(&result_path);
    manifest.write(&args.out_dir)?;

    let (csv, checks, failures) = match args.suite {
        Suite::Eym => eym_suite(&spec)?,
        Suite::Lemma1 => lemma1_suite(&spec)?,
        Suite::Theorem1 => theorem1_suite(&spec, args)?,
    };
    csv.write(&csv_path)?;
    let pass = failures == 0;
    write_json(
        &result_path,
        &SuiteResult {
            suite: suite_name(args.suite).to_string(),
            pass,
            checks,
            failures,
        },
    )?;
    if pass {
        Ok(())
    } else {
        Err(Outcome::Failed(format!(
            "{}: {failures}/{checks} checks failed",
            suite_name(args.suite)
        )))
    }
}

/// Random matrices of the task's head shape; every rank must satisfy the
/// tail-norm identity to 1e-8.
fn eym_suite(spec: &TaskSpec) -> Result<(Csv, usize, usize)> {
    let mut csv = Csv::new("trial,d,residual");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (rows, cols) = (spec.vocab_size, spec.feature_dim);
    let mut checks = 0;
    let mut failures = 0;
    for trial in 0..20 {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = DenseMatrix::new(rows, cols, data)?;
        for d in 0..=rows.min(cols) {
            let res = eym_verify(&m, d)?;
            csv.row(&[trial.to_string(), d.to_string(), fmt(res)]);
            checks += 1;
            if res >= 1e-8 {
                failures += 1;
            }
        }
    }
    Ok((csv, checks, failures))
}

/// Ten random unit directions; the |loss delta| / epsilon ratio must be
/// stable across the two smallest epsilons and match the gradient oracle.
fn lemma1_suite(spec: &TaskSpec) -> Result<(Csv, usize, usize)> {
    let task = build_task(spec)?;
    let mut csv = Csv::new("direction,epsilon,mean_abs_delta,ratio,oracle");
    let mut checks = 0;
    let mut failures = 0;
    for dir in 0..10u64 {
        let probe = PerturbationProbe::random(
            task.w_star.rows,
            task.w_star.cols,
            vec![1e-3, 1e-4, 1e-5],
            spec.seed.wrapping_add(1 + dir),
        )?;
        let oracle = lemma1_oracle(&task, &probe.direction);
        let points = lemma1_probe(&task, &probe)?;
        for p in &points {
            csv.row(&[
                dir.to_string(),
                fmt(p.epsilon),
                fmt(p.mean_abs_delta),
                fmt(p.ratio),
                fmt(oracle),
            ]);
        }
        let last = points[points.len() - 1].ratio;
        let prev = points[points.len() - 2].ratio;
        checks += 2;
        if (prev - last).abs() / last >= 0.05 {
            failures += 1;
        }
        if (last - oracle).abs() / oracle >= 0.05 {
            failures += 1;
        }
    }
    Ok((csv, checks, failures))
}

/// Rank sweep: each point must respect the ordering chain within 0.02 nats.
fn theorem1_suite(spec: &TaskSpec, args: &Args) -> Result<(Csv, usize, usize)> {
    let task = build_task(spec)?;
    let min_dim = task.w_star.rows.min(task.w_star.cols);
    let mut ranks: Vec<usize> = (1..=min_dim).collect();
    if ranks.len() > 8 {
        // Thin to at most 8 points, keeping the endpoints.
        let stride = (ranks.len() as f64 / 8.0).ceil() as usize;
        let mut thin: Vec<usize> = ranks.iter().copied().step_by(stride).collect();
        if *thin.last().unwrap() != min_dim {
            thin.push(min_dim);
        }
        ranks = thin;
    }
    let cfg = TrainConfig {
        peak_lr: args.peak_lr,
        epochs: args.epochs,
        seed: spec.seed,
        ..TrainConfig::default()
    };
    let points = theorem1_sweep(&task, &ranks, &cfg)?;
    let mut csv = Csv::new("d,tail_norm,w_error,gap_truncated,gap_trained");
    let mut checks = 0;
    let mut failures = 0;
    for p in &points {
        csv.row(&[
            p.d.to_string(),
            fmt(p.tail_norm),
            fmt(p.w_error),
            fmt(p.gap_truncated),
            fmt(p.gap_trained),
        ]);
        checks += 2;
        if p.gap_trained < -0.02 {
            failures += 1;
        }
        if p.gap_trained > p.gap_truncated + 0.02 {
            failures += 1;
        }
    }
    Ok((csv, checks, failures))
}

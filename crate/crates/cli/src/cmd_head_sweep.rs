use crate::manifest::RunManifest;
use crate::output::{fmt, Csv};
use clap::Parser;
use rankscope::error::{Error, Result};
use rankscope::head::{rank_sweep, FeatureDataset, TrainConfig};
use rankscope::io::{read_bmat, read_labels};
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Training features (BMAT, n x d).
    #[arg(long)]
    pub features: PathBuf,
    /// Training labels (LBLS1).
    #[arg(long)]
    pub labels: PathBuf,
    /// Held-out features (BMAT).
    #[arg(long)]
    pub eval_features: PathBuf,
    /// Held-out labels (LBLS1).
    #[arg(long)]
    pub eval_labels: PathBuf,
    /// Vocabulary size; defaults to max label + 1.
    #[arg(long)]
    pub vocab_size: Option<u32>,
    /// Comma-separated inner ranks, e.g. 1,2,4,8.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<usize>,
    /// Comma-separated peak learning rates.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lrs: Vec<f64>,
    /// Comma-separated init/shuffle seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: &Args) -> Result<()> {
    let train_features = read_bmat(&args.features)?;
    let train_labels = read_labels(&args.labels)?;
    let eval_features = read_bmat(&args.eval_features)?;
    let eval_labels = read_labels(&args.eval_labels)?;
    let vocab_size = match args.vocab_size {
        Some(v) => v,
        None => train_labels
            .iter()
            .chain(&eval_labels)
            .max()
            .map(|m| m + 1)
            .ok_or_else(|| Error::InvalidInput("no labels".into()))?,
    };
    let ds = FeatureDataset {
        train_features,
        train_labels,
        eval_features,
        eval_labels,
        vocab_size,
    };

    let mut manifest = RunManifest::new(
        "head-sweep",
        args.seeds[0],
        json!({
            "features": args.features.display().to_string(),
            "labels": args.labels.display().to_string(),
            "eval_features": args.eval_features.display().to_string(),
            "eval_labels": args.eval_labels.display().to_string(),
            "vocab_size": vocab_size,
            "ranks": args.ranks,
            "lrs": args.lrs,
            "seeds": args.seeds,
            "batch": args.batch,
            "epochs": args.epochs,
        }),
    );
    for p in [&args.features, &args.labels, &args.eval_features, &args.eval_labels] {
        manifest.add_input(p)?;
    }

    let cfg = TrainConfig {
        batch_size: args.batch,
        epochs: args.epochs,
        ..TrainConfig::default()
    };
    let sweep = rank_sweep(&ds, &args.ranks, &args.lrs, &args.seeds, &cfg)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let cells_path = args.out_dir.join("cells.csv");
    let best_path = args.out_dir.join("best_per_rank.csv");
    manifest.add_output(&cells_path);
    manifest.add_output(&best_path);
    manifest.write(&args.out_dir)?;

    let mut csv = Csv::new("rank,learning_rate,seed,eval_ce,eval_accuracy,error");
    for c in &sweep.cells {
        csv.row(&[
            c.rank.to_string(),
            fmt(c.learning_rate),
            c.seed.to_string(),
            c.eval_ce.map(fmt).unwrap_or_default(),
            c.eval_accuracy.map(fmt).unwrap_or_default(),
            c.error.clone().unwrap_or_default().replace(',', ";"),
        ]);
    }
    csv.write(&cells_path)?;

    // The chosen-learning-rate-per-rank table.
    let mut csv = Csv::new("rank,learning_rate,seed,eval_ce,eval_accuracy");
    for b in &sweep.best_per_rank {
        csv.row(&[
            b.rank.to_string(),
            fmt(b.learning_rate),
            b.seed.to_string(),
            fmt(b.eval_ce),
            fmt(b.eval_accuracy),
        ]);
    }
    csv.write(&best_path)
}

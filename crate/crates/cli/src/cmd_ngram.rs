use crate::manifest::RunManifest;
use crate::output::{fmt, write_json, Csv};
use clap::Parser;
use rankscope::error::Result;
use rankscope::io::read_tokens;
use rankscope::ngram::{build_context_matrix, count_ngrams, language_rank_report};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Token stream (TOKS1).
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// N-gram order (context length is n - 1).
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Drop contexts observed fewer than this many times.
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Retained spectrum size.
    #[arg(long, default_value_t = 128)]
    pub topk: usize,
    #[arg(long, default_value_t = 10)]
    pub oversample: usize,
    #[arg(long, default_value_t = 4)]
    pub power_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct Report {
    order: usize,
    vocab_size: u32,
    min_count: u64,
    contexts: usize,
    total_ngrams: u64,
    retained: usize,
    truncated: bool,
    fro_norm: f64,
    singular_entropy: f64,
}

pub fn run(args: &Args) -> Result<()> {
    let ts = read_tokens(&args.tokens)?;
    let counts = count_ngrams(&ts, args.n)?;
    let matrix = build_context_matrix(&counts, args.min_count)?;
    let min_dim = matrix.matrix.rows.min(matrix.matrix.cols);

    let mut manifest = RunManifest::new(
        "ngram",
        args.seed,
        json!({
            "tokens": args.tokens.display().to_string(),
            "n": args.n,
            "min_count": args.min_count,
            "topk": args.topk,
            "oversample": args.oversample,
            "power_iters": args.power_iters,
        }),
    );
    manifest.add_input(&args.tokens)?;

    let k = if args.topk > min_dim {
        manifest.warn(format!(
            "topk {} exceeds min dimension; clamped to {min_dim}",
            args.topk
        ));
        min_dim
    } else {
        args.topk
    };
    let summary = language_rank_report(&matrix, k, args.oversample, args.power_iters, args.seed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("report.json");
    let spectrum_path = args.out_dir.join("spectrum.csv");
    let werror_path = args.out_dir.join("werror.csv");
    manifest.add_output(&report_path);
    manifest.add_output(&spectrum_path);
    manifest.add_output(&werror_path);
    manifest.write(&args.out_dir)?;

    write_json(
        &report_path,
        &Report {
            order: args.n,
            vocab_size: ts.vocab_size,
            min_count: args.min_count,
            contexts: matrix.matrix.rows,
            total_ngrams: counts.total_ngrams(),
            retained: summary.sigma.len(),
            truncated: summary.truncated,
            fro_norm: summary.fro_norm,
            singular_entropy: summary.singular_entropy,
        },
    )?;

    let mut csv = Csv::new("i,sigma");
    for (i, s) in summary.sigma.iter().enumerate() {
        csv.row(&[i.to_string(), fmt(*s)]);
    }
    csv.write(&spectrum_path)?;

    let mut csv = Csv::new("d,w_error,is_lower_bound");
    for p in &summary.w_error {
        csv.row(&[p.d.to_string(), fmt(p.value), p.lower_bound.to_string()]);
    }
    csv.write(&werror_path)
}

use crate::manifest::RunManifest;
use crate::output::{fmt, write_json, Csv};
use clap::Parser;
use rankscope::error::{Error, Result};
use rankscope::io::read_bmat;
use rankscope::matrix::SparseMatrix;
use rankscope::spectral::{spectrum_normalize, SpectralSummary};
use rankscope::svd::{svd_dense, svd_randomized};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Input matrix (BMAT).
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Add a top-normalized column to spectrum.csv.
    #[arg(long)]
    pub normalized: bool,
    /// Include the singular entropy in summary.json.
    #[arg(long)]
    pub entropy: bool,
    /// Emit the W-error curve as werror.csv.
    #[arg(long)]
    pub werror: bool,
    /// Keep only the top-k singular values (randomized solver).
    #[arg(long)]
    pub topk: Option<usize>,
    /// Oversampling columns for the randomized solver.
    #[arg(long, default_value_t = 10)]
    pub oversample: usize,
    /// Power iterations for the randomized solver.
    #[arg(long, default_value_t = 4)]
    pub power_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct Summary {
    rows: usize,
    cols: usize,
    retained: usize,
    truncated: bool,
    fro_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    singular_entropy: Option<f64>,
}

pub fn run(args: &Args) -> Result<()> {
    let m = read_bmat(&args.input)?;
    let fro = m.frobenius_norm();
    if fro == 0.0 {
        return Err(Error::InvalidInput("all-zero spectrum".into()));
    }
    let min_dim = m.rows.min(m.cols);

    let mut manifest = RunManifest::new(
        "spectrum",
        args.seed,
        json!({
            "input": args.input.display().to_string(),
            "normalized": args.normalized,
            "entropy": args.entropy,
            "werror": args.werror,
            "topk": args.topk,
            "oversample": args.oversample,
            "power_iters": args.power_iters,
        }),
    );
    manifest.add_input(&args.input)?;

    let svd = match args.topk {
        Some(k) => {
            let k = if k > min_dim {
                manifest.warn(format!("topk {k} exceeds min dimension; clamped to {min_dim}"));
                min_dim
            } else {
                k
            };
            svd_randomized(
                &SparseMatrix::from_dense(&m),
                k,
                args.oversample,
                args.power_iters,
                args.seed,
            )?
        }
        None => svd_dense(&m, false)?,
    };
    let summary = SpectralSummary::from_spectrum(svd.singular_values, fro, svd.truncated)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let spectrum_path = args.out_dir.join("spectrum.csv");
    let summary_path = args.out_dir.join("summary.json");
    let werror_path = args.out_dir.join("werror.csv");
    manifest.add_output(&summary_path);
    manifest.add_output(&spectrum_path);
    if args.werror {
        manifest.add_output(&werror_path);
    }
    manifest.write(&args.out_dir)?;

    write_json(
        &summary_path,
        &Summary {
            rows: m.rows,
            cols: m.cols,
            retained: summary.sigma.len(),
            truncated: summary.truncated,
            fro_norm: summary.fro_norm,
            singular_entropy: args.entropy.then_some(summary.singular_entropy),
        },
    )?;

    let normalized = args
        .normalized
        .then(|| spectrum_normalize(&summary.sigma))
        .transpose()?;
    let mut csv = Csv::new(if args.normalized {
        "i,sigma,sigma_normalized"
    } else {
        "i,sigma"
    });
    for (i, s) in summary.sigma.iter().enumerate() {
        let mut row = vec![i.to_string(), fmt(*s)];
        if let Some(norm) = &normalized {
            row.push(fmt(norm[i]));
        }
        csv.row(&row);
    }
    csv.write(&spectrum_path)?;

    if args.werror {
        let mut csv = Csv::new("d,w_error,is_lower_bound");
        for p in &summary.w_error {
            csv.row(&[p.d.to_string(), fmt(p.value), p.lower_bound.to_string()]);
        }
        csv.write(&werror_path)?;
    }
    Ok(())
}

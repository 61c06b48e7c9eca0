use crate::manifest::RunManifest;
use crate::output::{fmt, Csv};
use clap::Parser;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankscope::error::{Error, Result};
use rankscope::geometry::{anisotropy_sweep, RepresentationSet};
use rankscope::io::read_bmat;
use rankscope::matrix::DenseMatrix;
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
pub struct Args {
    /// JSON manifest: [{"path", "layer_id", "checkpoint_id"}, ...].
    #[arg(long)]
    pub dumps: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Rows sampled per dump (all rows when omitted).
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Deserialize)]
struct DumpEntry {
    path: PathBuf,
    layer_id: String,
    checkpoint_id: String,
}

fn subsample(m: DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    if k >= m.rows {
        return m;
    }
    let mut idx: Vec<usize> = (0..m.rows).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.sort_unstable();
    let mut data = Vec::with_capacity(k * m.cols);
    for &i in &idx {
        data.extend_from_slice(m.row(i));
    }
    DenseMatrix::new(k, m.cols, data).expect("sampled rows are well-formed")
}

pub fn run(args: &Args) -> Result<()> {
    let manifest_bytes = std::fs::read(&args.dumps)?;
    let entries: Vec<DumpEntry> = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::Format(format!("dump manifest: {e}")))?;
    if entries.is_empty() {
        return Err(Error::InvalidInput("dump manifest lists no files".into()));
    }

    let mut manifest = RunManifest::new(
        "anisotropy",
        args.seed,
        json!({
            "dumps": args.dumps.display().to_string(),
            "sample_size": args.sample_size,
        }),
    );
    manifest.add_input(&args.dumps)?;
    for e in &entries {
        manifest.add_input(&e.path)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut sets = Vec::with_capacity(entries.len());
    for e in &entries {
        let mut vectors = read_bmat(&e.path)?;
        if let Some(k) = args.sample_size {
            vectors = subsample(vectors, k, &mut rng);
        }
        sets.push(RepresentationSet {
            vectors,
            layer_id: e.layer_id.clone(),
            checkpoint_id: e.checkpoint_id.clone(),
        });
    }
    let rows = anisotropy_sweep(&sets)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let csv_path: &Path = &args.out_dir.join("anisotropy.csv");
    manifest.add_output(csv_path);
    manifest.write(&args.out_dir)?;

    let mut csv = Csv::new("checkpoint_id,layer_id,n,anisotropy");
    for r in &rows {
        csv.row(&[
            r.checkpoint_id.clone(),
            r.layer_id.clone(),
            r.n.to_string(),
            fmt(r.anisotropy),
        ]);
    }
    csv.write(csv_path)
}

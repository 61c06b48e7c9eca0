use crate::manifest::RunManifest;
use crate::output::{fmt, write_json, Csv};
use clap::Parser;
use rankscope::error::{Error, Result};
use rankscope::scaling::{
    extrapolation_gap, fit_scaling_law, FreeParam, LossPoint, ScalingLawParams,
};
use serde::Serialize;
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
pub struct Args {
    /// Observed losses, CSV with header tag,N,T,L.
    #[arg(long)]
    pub points: PathBuf,
    /// Parameters to fit, e.g. A,alpha.
    #[arg(long, value_delimiter = ',')]
    pub free: Vec<String>,
    /// Pinned parameters, e.g. B=410.7,beta=0.28,E=1.69.
    #[arg(long, value_delimiter = ',')]
    pub fixed: Vec<String>,
    /// Also emit a per-tag observed-vs-predicted gap table.
    #[arg(long)]
    pub gap: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct FitOutput {
    params: ScalingLawParams,
    free: Vec<FreeParam>,
    objective: f64,
    residuals: Vec<f64>,
    starts_evaluated: usize,
}

fn parse_points(text: &str) -> Result<Vec<LossPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "tag,N,T,L" => {}
        other => {
            return Err(Error::Format(format!(
                "points CSV must start with 'tag,N,T,L', got {other:?}"
            )))
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 fields", i + 2)));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|e| Error::Format(format!("line {}: bad {what}: {e}", i + 2)))
        };
        points.push(LossPoint {
            tag: parts[0].trim().to_string(),
            n: num(parts[1], "N")?,
            t: num(parts[2], "T")?,
            loss: num(parts[3], "L")?,
        });
    }
    Ok(points)
}

/// Builds the full parameter vector from the fixed assignments; free
/// parameters get placeholder values that the fit replaces.
fn parse_params(free: &[FreeParam], fixed: &[String]) -> Result<ScalingLawParams> {
    let mut p = ScalingLawParams {
        a: 1.0,
        alpha: 0.5,
        b: 1.0,
        beta: 0.5,
        e: 0.0,
    };
    let mut seen = Vec::new();
    for item in fixed {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected name=value, got '{item}'")))?;
        let which = FreeParam::parse(name.trim())?;
        if free.contains(&which) {
            return Err(Error::InvalidInput(format!(
                "parameter '{name}' is both free and fixed"
            )));
        }
        if seen.contains(&which) {
            return Err(Error::InvalidInput(format!("parameter '{name}' fixed twice")));
        }
        seen.push(which);
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("bad value for '{name}': {e}")))?;
        match which {
            FreeParam::A => p.a = v,
            FreeParam::Alpha => p.alpha = v,
            FreeParam::B => p.b = v,
            FreeParam::Beta => p.beta = v,
            FreeParam::E => p.e = v,
        }
    }
    for which in [
        FreeParam::A,
        FreeParam::Alpha,
        FreeParam::B,
        FreeParam::Beta,
        FreeParam::E,
    ] {
        if !free.contains(&which) && !seen.contains(&which) {
            return Err(Error::InvalidInput(format!(
                "parameter {which:?} is neither free nor fixed"
            )));
        }
    }
    Ok(p)
}

pub fn run(args: &Args) -> Result<()> {
    let text = std::fs::read_to_string(&args.points)?;
    let points = parse_points(&text)?;
    let free: Vec<FreeParam> = args
        .free
        .iter()
        .map(|s| FreeParam::parse(s))
        .collect::<Result<_>>()?;
    let fixed = parse_params(&free, &args.fixed)?;

    let mut manifest = RunManifest::new(
        "fit-scaling",
        args.seed,
        json!({
            "points": args.points.display().to_string(),
            "free": args.free,
            "fixed": args.fixed,
            "gap": args.gap,
        }),
    );
    manifest.add_input(&args.points)?;

    let (params, diag) = fit_scaling_law(&points, &free, &fixed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let fit_path = args.out_dir.join("fit.json");
    let gap_path = args.out_dir.join("gaps.csv");
    manifest.add_output(&fit_path);
    if args.gap {
        manifest.add_output(&gap_path);
    }
    manifest.write(&args.out_dir)?;

    write_json(
        &fit_path,
        &FitOutput {
            params,
            free,
            objective: diag.objective,
            residuals: diag.residuals,
            starts_evaluated: diag.starts_evaluated,
        },
    )?;

    if args.gap {
        let rows = extrapolation_gap(&points, &params)?;
        let mut csv = Csv::new("tag,points,mean_observed,mean_predicted,gap_percent");
        for r in &rows {
            csv.row(&[
                r.tag.clone(),
                r.points.to_string(),
                fmt(r.mean_observed),
                fmt(r.mean_predicted),
                fmt(r.gap_percent),
            ]);
        }
        csv.write(&gap_path)?;
    }
    Ok(())
}

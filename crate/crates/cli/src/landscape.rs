//! The `landscape` subcommand.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use roomwave_core::io::load_for_spec;
use roomwave_core::{hessian_top_eigenvalue, landscape_grid, sample, LandscapeGrid, Normalization};

use crate::config::RunConfig;
use crate::{CliError, TOOL_NAME, TOOL_VERSION};

#[derive(Clone, Debug)]
pub struct LandscapeArgs {
    pub checkpoint: PathBuf,
    pub resolution: usize,
    pub half_range: f64,
    pub seeds: (u64, u64),
    pub normalization: Normalization,
    /// Power-iteration steps for the top Hessian eigenvalue; 0 skips it.
    pub hessian_iters: usize,
    pub out_dir: PathBuf,
}

/// Matrix CSV: header `alpha,<betas>`, then one row per alpha.
pub fn write_landscape_csv(grid: &LandscapeGrid, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["alpha".to_string()];
    header.extend(grid.betas.iter().map(|b| b.to_string()));
    w.write_record(&header)?;
    for (a, row) in grid.alphas.iter().zip(&grid.loss) {
        let mut rec = vec![a.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_landscape(config_path: &Path, args: &LandscapeArgs) -> Result<LandscapeGrid, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let problem = cfg.problem()?;
    let f = File::open(&args.checkpoint)?;
    let params = load_for_spec(BufReader::new(f), &cfg.network)?;
    let samples = sample(&problem, cfg.sampling.ppw, cfg.sampling.seed)?;
    let weights = cfg.training.loss_weights;
    let grid = landscape_grid(
        &params,
        &cfg.network,
        &problem,
        &samples,
        weights,
        args.half_range,
        args.resolution,
        args.seeds,
        args.normalization,
    )?;
    fs::create_dir_all(&args.out_dir)?;
    write_landscape_csv(&grid, &args.out_dir.join("landscape.csv"))?;
    let hessian = if args.hessian_iters > 0 {
        Some(hessian_top_eigenvalue(
            &params,
            &cfg.network,
            &problem,
            &samples,
            weights,
            args.hessian_iters,
            1e-6,
        )?)
    } else {
        None
    };
    let (ai, bi) = grid.argmin();
    let sidecar = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "spec_hash": cfg.network.hash(),
        "checkpoint": args.checkpoint,
        "resolution": args.resolution,
        "half_range": args.half_range,
        "direction_seeds": args.seeds,
        "normalization": args.normalization,
        "center_loss": grid.center(),
        "argmin": [ai, bi],
        "center_is_minimum": grid.center_is_minimum(),
        "alpha_curvature_sign_changes": grid.alpha_curvature_sign_changes(),
        "hessian_top_eigenvalue": hessian,
    });
    let mut f = BufWriter::new(File::create(args.out_dir.join("landscape.json"))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    f.flush()?;
    Ok(grid)
}

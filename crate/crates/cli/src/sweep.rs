//! The `sweep` subcommand: a grid of runs with one summary table.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use clap::ValueEnum;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use roomwave_core::{Activation, FreezePolicy};

use crate::config::{resolve_dir, RunConfig};
use crate::run::{execute, RunSummary};
use crate::{fmt_opt, CliError, TOOL_NAME, TOOL_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepAxis {
    Ppw,
    ActivationScale,
    Freeze,
    /// Values are seeds; every cell uses the base config otherwise.
    Repeat,
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub index: usize,
    pub value: String,
    pub seed: u64,
    pub config: RunConfig,
    pub dir: PathBuf,
}

fn parse_freeze(v: &str) -> Result<FreezePolicy, CliError> {
    let bad = || {
        CliError::config(format!(
            "freeze value `{v}` (expected none, all_but_first_<k> or all_but_last_<k>)"
        ))
    };
    if v == "none" {
        return Ok(FreezePolicy::None);
    }
    let k = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if let Some(r) = v.strip_prefix("all_but_first_") {
        return Ok(FreezePolicy::AllButFirstK(k(r)?));
    }
    if let Some(r) = v.strip_prefix("all_but_last_") {
        return Ok(FreezePolicy::AllButLastK(k(r)?));
    }
    Err(bad())
}

fn with_seed(mut cfg: RunConfig, seed: u64) -> RunConfig {
    cfg.network.init_seed = seed;
    cfg.sampling.seed = seed;
    if let Some(p) = cfg.pretrain.as_mut() {
        p.split_seed = seed;
    }
    cfg
}

/// The cross product `values x seeds`, in row-major order. Without `seeds` each
/// value runs once with the seeds of `base`.
pub fn plan(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: Option<&[u64]>,
    root: &Path,
) -> Result<Vec<Cell>, CliError> {
    if values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let mut cells = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::Ppw => {
                cfg.sampling.ppw = v
                    .parse()
                    .map_err(|_| CliError::config(format!("ppw value `{v}` is not a number")))?;
            }
            SweepAxis::ActivationScale => {
                let s: f64 = v.parse().map_err(|_| {
                    CliError::config(format!("activation scale `{v}` is not a number"))
                })?;
                let n = cfg.network.hidden_activations.len();
                cfg.network.hidden_activations = vec![Activation::sin(s); n];
            }
            SweepAxis::Freeze => cfg.training.freeze_policy = parse_freeze(v)?,
            SweepAxis::Repeat => {
                let s: u64 = v
                    .parse()
                    .map_err(|_| CliError::config(format!("repeat value `{v}` is not a seed")))?;
                cfg = with_seed(cfg, s);
            }
        }
        let cell_seeds: Vec<u64> = match (axis, seeds) {
            (SweepAxis::Repeat, _) | (_, None) => vec![cfg.network.init_seed],
            (_, Some(s)) => s.to_vec(),
        };
        for s in cell_seeds {
            let index = cells.len();
            let mut c = with_seed(cfg.clone(), s);
            let dir = root.join(format!("cell_{index:03}"));
            c.outputs.dir = dir.clone();
            c.validate()?;
            cells.push(Cell {
                index,
                value: v.clone(),
                seed: s,
                config: c,
                dir,
            });
        }
    }
    Ok(cells)
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "axis_value",
    "seed",
    "e_rel_ref",
    "e_rel_gf",
    "onset",
    "wall_time_s",
    "status",
];

fn summary_row(cell: &Cell, res: &Result<RunSummary, CliError>) -> Vec<String> {
    match res {
        Ok(s) => vec![
            cell.value.clone(),
            cell.seed.to_string(),
            fmt_opt(s.e_rel_ref),
            fmt_opt(s.e_rel_gf),
            s.onset.map(|o| o.to_string()).unwrap_or_default(),
            s.wall_time_s.to_string(),
            "ok".into(),
        ],
        Err(e) => vec![
            cell.value.clone(),
            cell.seed.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!("error: {e}"),
        ],
    }
}

/// Runs all cells on the rayon pool and streams `summary.csv` in cell order,
/// flushing after every row. Failed cells are recorded and the sweep continues.
pub fn run_cells(
    cells: &[Cell],
    summary_path: &Path,
) -> Result<Vec<Result<RunSummary, CliError>>, CliError> {
    let mut w = csv::Writer::from_path(summary_path)?;
    w.write_record(SUMMARY_HEADER)?;
    w.flush()?;
    let (tx, rx) = mpsc::channel();
    let mut done: Vec<Option<Result<RunSummary, CliError>>> = cells.iter().map(|_| None).collect();
    std::thread::scope(|scope| -> Result<(), CliError> {
        scope.spawn(move || {
            cells.par_iter().for_each_with(tx, |tx, cell| {
                let res = execute(&cell.config, &cell.dir);
                let _ = tx.send((cell.index, res));
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, res) in rx {
            if let Err(e) = &res {
                warn!("cell {i} failed: {e}");
            }
            pending.insert(i, res);
            while let Some(res) = pending.remove(&next) {
                w.write_record(summary_row(&cells[next], &res))?;
                w.flush()?;
                info!("cell {next} of {} written", cells.len());
                done[next] = Some(res);
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(done
        .into_iter()
        .map(|r| r.expect("every cell reports"))
        .collect())
}

/// `roomwave sweep <config> --axis <axis> --values ... [--seeds ...]`.
pub fn cmd_sweep(
    config_path: &Path,
    axis: SweepAxis,
    values: &[String],
    seeds: Option<&[u64]>,
) -> Result<PathBuf, CliError> {
    let base = RunConfig::load(config_path)?;
    let root = resolve_dir(config_path, &base.outputs.dir);
    fs::create_dir_all(&root)?;
    let cells = plan(&base, axis, values, seeds, &root)?;
    let sweep = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config_hash": base.hash(),
        "config": base,
        "axis": axis,
        "values": values,
        "seeds": seeds,
        "cells": cells.iter().map(|c| json!({"index": c.index, "value": c.value, "seed": c.seed, "dir": c.dir})).collect::<Vec<_>>(),
    });
    let mut f = File::create(root.join("sweep.json"))?;
    serde_json::to_writer_pretty(&mut f, &sweep)?;
    writeln!(f)?;
    let summary = root.join("summary.csv");
    run_cells(&cells, &summary)?;
    Ok(summary)
}

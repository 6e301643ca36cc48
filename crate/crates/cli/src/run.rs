//! The `train` and `oracle` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use serde_json::json;

use roomwave_core::io::write_checkpoint;
use roomwave_core::training::{train_pinn_observed, ErrorProbe, LogEvent, PretrainOutcome};
use roomwave_core::{
    analytic_infty, evaluation_grid, forward_batch, gf_convolve, init_glorot, meaningful_check,
    modal_solve, pretrain_supervised, relative_l2, sample, FieldOnPoints, HelmholtzProblem,
    NetworkSpec, ParameterVector, PretrainConfig, ReferenceField, TensorGrid,
};

use crate::config::{resolve_dir, DataSource, RunConfig, RunMode};
use crate::{fmt_opt, CliError, TOOL_NAME, TOOL_VERSION};

/// Headline numbers of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub e_rel_ref: Option<f64>,
    pub e_rel_gf: Option<f64>,
    pub onset: Option<usize>,
    pub final_loss: Option<f64>,
    pub wall_time_s: f64,
}

/// Field of `which` at `points`.
pub fn oracle_field(
    cfg: &RunConfig,
    problem: &HelmholtzProblem,
    which: DataSource,
    points: &ndarray::Array2<f64>,
) -> Result<FieldOnPoints, CliError> {
    Ok(match which {
        DataSource::Analytic => analytic_infty(problem)?.on_points(points.view()),
        DataSource::Modal => {
            let sol = modal_solve(problem, cfg.evaluation.modal_modes.as_deref())?;
            sol.on_points(points.view())
        }
        DataSource::Gf => {
            let n = cfg.evaluation.gf_grid_n;
            gf_convolve(problem, &[n, n, n], points.view())?
        }
    })
}

fn predict(
    params: &ParameterVector,
    spec: &NetworkSpec,
    points: &ndarray::Array2<f64>,
) -> Result<FieldOnPoints, CliError> {
    let out = forward_batch(params, spec, points.view())?;
    Ok(FieldOnPoints {
        points: points.clone(),
        p_r: out.column(0).to_vec(),
        p_i: out.column(1).to_vec(),
    })
}

fn manifest(
    cfg: &RunConfig,
    problem: &HelmholtzProblem,
    results: serde_json::Value,
) -> serde_json::Value {
    let m = &problem.medium;
    let kc2 = m.k_squared_complex();
    json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config_hash": cfg.hash(),
        "config": cfg,
        "derived": {
            "frequency": m.frequency(),
            "omega": m.omega(),
            "k0": m.k0(),
            "k_c_squared": [kc2.re, kc2.im],
            "wavelength": m.wavelength(),
            "n_params": cfg.network.n_params(),
            "spec_hash": cfg.network.hash(),
        },
        "results": results,
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn save_params(
    path: &Path,
    params: &ParameterVector,
    spec: &NetworkSpec,
    seed: u64,
) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut f, params, spec, seed)?;
    f.flush()?;
    Ok(())
}

fn pretrain_phase(
    cfg: &RunConfig,
    problem: &HelmholtzProblem,
    dir: &Path,
) -> Result<PretrainOutcome, CliError> {
    let p = cfg.pretrain.as_ref().expect("validated");
    let grid = TensorGrid::uniform(&problem.domain, p.data_grid_n);
    let data = oracle_field(cfg, problem, p.source, &grid.points())?;
    let pcfg = PretrainConfig {
        iterations: p.iterations,
        learning_rate: p.learning_rate,
        data,
        train_fraction: p.train_fraction,
        test_fraction: p.test_fraction,
        seed: p.split_seed,
        log_every: p.log_every,
    };
    let out = pretrain_supervised(&cfg.network, &pcfg, None)?;
    let mut w = csv::Writer::from_path(dir.join("pretrain_loss.csv"))?;
    w.write_record(["iteration", "mse"])?;
    for (it, mse) in &out.loss_history {
        w.write_record([it.to_string(), mse.to_string()])?;
    }
    w.flush()?;
    info!(
        "pretraining: {} iterations, train mse {:.3e}, test mse {}",
        p.iterations,
        out.train_mse,
        fmt_opt(out.test_mse)
    );
    Ok(out)
}

/// Runs `cfg` and writes every output into `dir`.
pub fn execute(cfg: &RunConfig, dir: &Path) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let problem = cfg.problem()?;
    let spec = &cfg.network;
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join("manifest.json"),
        &manifest(cfg, &problem, json!(null)),
    )?;

    let eval_pts = evaluation_grid(&problem.domain, cfg.evaluation.grid_n).points();
    let reference = oracle_field(cfg, &problem, cfg.evaluation.oracles[0], &eval_pts)?;
    let gf = if cfg.evaluation.oracles.contains(&DataSource::Gf) {
        Some(oracle_field(cfg, &problem, DataSource::Gf, &eval_pts)?)
    } else {
        None
    };

    let mut errors = csv::Writer::from_path(dir.join("errors.csv"))?;
    errors.write_record(["stage", "e_rel_ref", "e_rel_gf", "meaningful"])?;
    let mut report =
        |stage: &str, params: &ParameterVector| -> Result<(f64, Option<f64>), CliError> {
            let pred = predict(params, spec, &eval_pts)?;
            let (e_ref, e_gf, meaningful) = match &gf {
                Some(g) => {
                    let r = meaningful_check(&pred, &reference, g)?;
                    (r.e_rel_ref, Some(r.e_rel_gf), Some(r.meaningful))
                }
                None => (relative_l2(&pred, &reference)?, None, None),
            };
            errors.write_record([
                stage.to_string(),
                e_ref.to_string(),
                fmt_opt(e_gf),
                meaningful.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
            errors.flush()?;
            Ok((e_ref, e_gf))
        };

    let (init, pre) = match cfg.mode {
        RunMode::Scratch => (init_glorot(spec), None),
        RunMode::Supervised | RunMode::Discrepancy => {
            let out = pretrain_phase(cfg, &problem, dir)?;
            report("pretrain", &out.params)?;
            (out.params.clone(), Some(out))
        }
    };

    let seed = cfg.network.init_seed;
    let (final_params, onset, final_loss) = if cfg.mode == RunMode::Supervised {
        let out = pre
            .as_ref()
            .expect("supervised run has a pretraining phase");
        (out.params.clone(), None, Some(out.train_mse))
    } else {
        let samples = sample(&problem, cfg.sampling.ppw, cfg.sampling.seed)?;
        let probe_ref = cfg.evaluation.track_error.then_some(&reference);
        let probe = probe_ref.map(|r| ErrorProbe { reference: r });
        let ckpt_dir = dir.join("checkpoints");
        if cfg.outputs.checkpoint_every > 0 {
            fs::create_dir_all(&ckpt_dir)?;
        }
        let mut loss_csv = csv::Writer::from_path(dir.join("loss.csv"))?;
        loss_csv.write_record([
            "iteration",
            "pde_r",
            "pde_i",
            "bc_r",
            "bc_i",
            "total",
            "e_rel",
        ])?;
        let every = cfg.outputs.checkpoint_every;
        let observer = |ev: &LogEvent<'_>| -> roomwave_core::Result<()> {
            let l = ev.loss;
            let row = [
                ev.iteration.to_string(),
                l.pde_r.to_string(),
                l.pde_i.to_string(),
                l.bc_r.to_string(),
                l.bc_i.to_string(),
                l.total.to_string(),
                fmt_opt(ev.e_rel),
            ];
            loss_csv
                .write_record(&row)
                .and_then(|_| loss_csv.flush().map_err(Into::into))
                .map_err(|e| roomwave_core::Error::Io(std::io::Error::other(e.to_string())))?;
            if every > 0 && ev.iteration.is_multiple_of(every) {
                let path = ckpt_dir.join(format!("iter_{:07}.bin", ev.iteration));
                let mut f = BufWriter::new(File::create(path)?);
                write_checkpoint(&mut f, ev.params, spec, seed)?;
                f.flush()?;
            }
            Ok(())
        };
        let rec = match train_pinn_observed(
            spec,
            &problem,
            &samples,
            &cfg.training,
            &init,
            probe.as_ref(),
            observer,
        ) {
            Ok(r) => r,
            Err(e) => {
                let err = CliError::from(e);
                write_json(&dir.join("error.json"), &err.to_json())?;
                return Err(err);
            }
        };
        info!(
            "physics phase: {} iterations in {:.1} s, onset {:?}",
            cfg.training.iterations, rec.wall_time_s, rec.onset_iteration
        );
        let fl = rec.final_loss().map(|l| l.total);
        (rec.final_params, rec.onset_iteration, fl)
    };

    let (e_ref, e_gf) = report("final", &final_params)?;
    save_params(&dir.join("params.bin"), &final_params, spec, seed)?;
    let summary = RunSummary {
        e_rel_ref: Some(e_ref),
        e_rel_gf: e_gf,
        onset,
        final_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut results = serde_json::to_value(&summary)?;
    if let Some(p) = &pre {
        results["pretrain"] = json!({
            "train_mse": p.train_mse,
            "test_mse": p.test_mse,
            "n_train": p.n_train,
            "n_test": p.n_test,
        });
    }
    write_json(
        &dir.join("manifest.json"),
        &manifest(cfg, &problem, results),
    )?;
    Ok(summary)
}

/// `roomwave train <config>`.
pub fn cmd_train(config_path: &Path) -> Result<RunSummary, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let dir = resolve_dir(config_path, &cfg.outputs.dir);
    execute(&cfg, &dir)
}

/// `roomwave oracle <config> --which <kind> --out <csv>`: the field on the evaluation grid.
pub fn cmd_oracle(config_path: &Path, which: DataSource, out: &Path) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let problem = cfg.problem()?;
    match which {
        DataSource::Analytic if !problem.source.sharpness.is_infinite() => {
            return Err(CliError::config(
                "analytic oracle requires problem.sharpness = \"inf\"",
            ));
        }
        DataSource::Gf if problem.dim() != 3 => {
            return Err(CliError::config("gf oracle requires a 3D problem"));
        }
        _ => {}
    }
    let pts = evaluation_grid(&problem.domain, cfg.evaluation.grid_n).points();
    let field = oracle_field(&cfg, &problem, which, &pts)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = BufWriter::new(File::create(out)?);
    field.write_csv(&mut f)?;
    f.flush()?;
    Ok(out.to_path_buf())
}

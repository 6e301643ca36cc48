//! Experiment runner for roomwave: single training runs, parameter sweeps,
//! reference-field export and loss landscapes.
//!
//! Output files (all CSV with a header row):
//!
//! * `loss.csv`: `iteration,pde_r,pde_i,bc_r,bc_i,total,e_rel` (physics phase, one
//!   row per log point; `e_rel` in percent, empty when not tracked)
//! * `pretrain_loss.csv`: `iteration,mse`
//! * `errors.csv`: `stage,e_rel_ref,e_rel_gf,meaningful`
//! * `summary.csv` (sweeps): `axis_value,seed,e_rel_ref,e_rel_gf,onset,wall_time_s,status`
//! * `landscape.csv`: first row `alpha,<beta values>`, then one row per alpha
//! * oracle fields: `x,y[,z],p_r,p_i`

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod landscape;
pub mod run;
pub mod sweep;

use serde_json::json;

pub use config::{DataSource, RunConfig, RunMode};
pub use landscape::{cmd_landscape, LandscapeArgs};
pub use run::{cmd_oracle, cmd_train, execute, RunSummary};
pub use sweep::{cmd_sweep, SweepAxis};

pub const TOOL_NAME: &str = "roomwave";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration} (term {term})")]
    NonFinite { iteration: usize, term: String },
    #[error("{0}")]
    Core(roomwave_core::Error),
    #[error("{0:#}")]
    Io(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonFinite { .. } => 3,
            CliError::Core(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    /// One-line JSON description for scripts.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::NonFinite { .. } => "non_finite",
            CliError::Core(_) => "solver",
            CliError::Io(_) => "io",
        };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        if let CliError::NonFinite { iteration, term } = self {
            v["iteration"] = json!(iteration);
            v["term"] = json!(term);
        }
        v
    }
}

impl From<roomwave_core::Error> for CliError {
    fn from(e: roomwave_core::Error) -> Self {
        match e {
            roomwave_core::Error::NonFinite { iteration, term } => {
                CliError::NonFinite { iteration, term }
            }
            roomwave_core::Error::Input(m) => CliError::Config(m),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Shortest round-trip text for a float; empty for `None`.
pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

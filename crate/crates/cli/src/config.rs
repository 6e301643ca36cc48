//! Run configuration: one TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use roomwave_core::physics::SourceSpec;
use roomwave_core::{
    BcGrouping, BoxDomain, FreezePolicy, HelmholtzProblem, MediumSpec, NetworkSpec, Sharpness,
    TrainConfig,
};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Physics loss from Glorot initialisation.
    #[default]
    Scratch,
    /// Supervised fit to a reference field only.
    Supervised,
    /// Supervised fit followed by the physics loss.
    Discrepancy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Unit square or cube when `domain_lower`/`domain_upper` are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "one")]
    pub l_ref: f64,
    #[serde(default = "infinite")]
    pub sharpness: Sharpness,
    /// Domain centre when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_location: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine_wavenumber: Option<f64>,
    #[serde(default)]
    pub bc_grouping: BcGrouping,
}

fn one() -> f64 {
    1.0
}

fn infinite() -> Sharpness {
    Sharpness::INFINITE
}

impl ProblemConfig {
    pub fn build(&self) -> Result<HelmholtzProblem, CliError> {
        let nu = self
            .nu
            .ok_or_else(|| CliError::config("problem.nu required"))?;
        let domain = match (&self.domain_lower, &self.domain_upper, self.dim) {
            (Some(lo), Some(hi), d) => {
                if d.is_some_and(|d| d != lo.len()) {
                    return Err(CliError::config(
                        "problem.dim disagrees with problem.domain_lower",
                    ));
                }
                BoxDomain::new(lo.clone(), hi.clone())
                    .map_err(|e| CliError::config(format!("problem.domain: {e}")))?
            }
            (None, None, Some(d)) if d == 2 || d == 3 => BoxDomain::unit(d),
            (None, None, Some(d)) => {
                return Err(CliError::config(format!(
                    "problem.dim must be 2 or 3, got {d}"
                )));
            }
            (None, None, None) => return Err(CliError::config("problem.dim required")),
            _ => {
                return Err(CliError::config(
                    "problem.domain_lower and problem.domain_upper must be given together",
                ))
            }
        };
        let location = self
            .source_location
            .clone()
            .unwrap_or_else(|| domain.center());
        let source = SourceSpec {
            sharpness: self.sharpness,
            location,
            cosine_wavenumber: self.cosine_wavenumber,
        };
        let medium = MediumSpec {
            c0: self.c0,
            eta: self.eta,
            nu,
            l_ref: self.l_ref,
        };
        HelmholtzProblem::new(domain, medium, source, self.bc_grouping)
            .map_err(|e| CliError::config(format!("problem: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub ppw: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Closed form, infinite sharpness only.
    Analytic,
    Modal,
    /// Free-field Green's-function convolution, 3D only.
    Gf,
}

fn default_pretrain_lr() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    pub source: DataSource,
    pub iterations: usize,
    #[serde(default = "default_pretrain_lr")]
    pub learning_rate: f64,
    /// Data points per axis of the uniform grid the data is drawn from.
    pub data_grid_n: usize,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub log_every: usize,
}

fn default_grid_n() -> usize {
    roomwave_core::analysis::DEFAULT_GRID_N
}

fn default_gf_grid_n() -> usize {
    40
}

fn default_oracles() -> Vec<DataSource> {
    vec![DataSource::Modal]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    /// The first entry is the reference for `e_rel_ref`; `gf` adds `e_rel_gf`.
    #[serde(default = "default_oracles")]
    pub oracles: Vec<DataSource>,
    /// Cells per axis of the Green's-function quadrature.
    #[serde(default = "default_gf_grid_n")]
    pub gf_grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_modes: Option<Vec<usize>>,
    /// Track `e_rel_ref` at every log point of the physics phase.
    #[serde(default = "yes")]
    pub track_error: bool,
}

fn yes() -> bool {
    true
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            grid_n: default_grid_n(),
            oracles: default_oracles(),
            gf_grid_n: default_gf_grid_n(),
            modal_modes: None,
            track_error: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `checkpoints/iter_<n>.bin` every this many iterations (0: final only).
    #[serde(default)]
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: RunMode,
    pub problem: ProblemConfig,
    pub network: NetworkSpec,
    pub sampling: SamplingConfig,
    pub training: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PretrainSection>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub outputs: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::config(toml_message(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` object of a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(CliError::Io)?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("manifest: {e}")))?;
            let inner = m.get("config").cloned().unwrap_or(m);
            let cfg: RunConfig = serde_json::from_value(inner)
                .map_err(|e| CliError::config(format!("manifest: {e}")))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml(&text)
    }

    pub fn problem(&self) -> Result<HelmholtzProblem, CliError> {
        self.problem.build()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let problem = self.problem()?;
        self.network
            .validate()
            .map_err(|e| CliError::config(format!("network: {e}")))?;
        if self.network.input_dim != problem.dim() {
            return Err(CliError::config(format!(
                "network.input_dim is {} but the problem is {}D",
                self.network.input_dim,
                problem.dim()
            )));
        }
        if !(self.sampling.ppw > 0.0) || !self.sampling.ppw.is_finite() {
            return Err(CliError::config("sampling.ppw must be positive"));
        }
        self.training
            .validate()
            .map_err(|e| CliError::config(format!("training: {e}")))?;
        if let FreezePolicy::AllButFirstK(k) | FreezePolicy::AllButLastK(k) =
            self.training.freeze_policy
        {
            let n = self.network.n_layers();
            if k == 0 || k > n {
                return Err(CliError::config(format!(
                    "training.freeze_policy keeps {k} of {n} layers"
                )));
            }
        }
        match (self.mode, &self.pretrain) {
            (RunMode::Scratch, _) => {}
            (_, None) => {
                return Err(CliError::config(format!(
                    "pretrain required for mode {:?}",
                    self.mode
                )))
            }
            (_, Some(p)) => {
                if p.data_grid_n < 2 {
                    return Err(CliError::config("pretrain.data_grid_n must be at least 2"));
                }
                check_source(p.source, &problem, "pretrain.source")?;
            }
        }
        if self.evaluation.grid_n < 2 {
            return Err(CliError::config("evaluation.grid_n must be at least 2"));
        }
        if self.evaluation.oracles.is_empty() {
            return Err(CliError::config("evaluation.oracles must not be empty"));
        }
        for &o in &self.evaluation.oracles {
            check_source(o, &problem, "evaluation.oracles")?;
        }
        if self.evaluation.oracles[0] == DataSource::Gf {
            return Err(CliError::config(
                "evaluation.oracles must start with a room reference (modal or analytic)",
            ));
        }
        if let Some(m) = &self.evaluation.modal_modes {
            if m.len() != problem.dim() {
                return Err(CliError::config(
                    "evaluation.modal_modes needs one count per axis",
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn check_source(s: DataSource, problem: &HelmholtzProblem, field: &str) -> Result<(), CliError> {
    match s {
        DataSource::Analytic if !problem.source.sharpness.is_infinite() => Err(CliError::config(
            format!("{field}: analytic requires problem.sharpness = \"inf\""),
        )),
        DataSource::Gf if problem.dim() != 3 => Err(CliError::config(format!(
            "{field}: gf requires a 3D problem"
        ))),
        _ => Ok(()),
    }
}

fn toml_message(e: &toml::de::Error) -> String {
    let msg = e.message();
    // toml reports missing keys without the table path; add it where the span tells us.
    match msg
        .strip_prefix("missing field `")
        .and_then(|m| m.strip_suffix('`'))
    {
        Some(field) => format!("{field} required ({})", msg),
        None => msg.to_string(),
    }
}

/// `dir` relative to the config file when not absolute.
pub fn resolve_dir(config_path: &Path, dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        dir.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BASE: &str = r#"
[problem]
dim = 2
nu = 1.0
eta = -0.04
sharpness = "inf"

[network]
input_dim = 2
hidden_widths = [8, 8]
hidden_activations = ["sin", "sin"]
output_activation = "linear"
init_seed = 1

[sampling]
ppw = 6.0
seed = 2

[training]
iterations = 10
log_every = 5
loss_weights = { w_bc_r = 0.01, w_bc_i = 0.0002, w_pde_r = 1.0, w_pde_i = 0.02 }

[outputs]
dir = "out"
"#;

    #[test]
    fn base_config_parses() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.mode, RunMode::Scratch);
        assert_eq!(cfg.evaluation.grid_n, 41);
        assert!(cfg.problem().unwrap().source.sharpness.is_infinite());
    }

    #[test]
    fn missing_nu_is_named() {
        let text = BASE.replace("nu = 1.0\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("problem.nu required"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = BASE.replace("eta = -0.04", "eta = -0.04\nnuu = 2.0");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("nuu"), "{err}");
    }

    #[test]
    fn cross_field_checks() {
        let text = BASE.replace("input_dim = 2", "input_dim = 3");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = BASE.replace("sharpness = \"inf\"", "sharpness = 0.0");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = format!("mode = \"discrepancy\"\n{BASE}");
        assert!(RunConfig::from_toml(&text)
            .unwrap_err()
            .to_string()
            .contains("pretrain"));
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}

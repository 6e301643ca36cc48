//! Full-batch Adam training of the physics loss, supervised pretraining and
//! convergence-onset detection.

mod adam;
mod onset;

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use onset::{detect_onset, ONSET_FRACTION, ONSET_WINDOW};

use crate::analysis::relative_l2;
use crate::error::{input, Error, Result};
use crate::model::{forward_batch, init_glorot, ChannelPlan, NetworkSpec, ParameterVector, Tape};
use crate::oracle::FieldOnPoints;
use crate::physics::{HelmholtzProblem, LossBreakdown, LossContext, LossWeights};
use crate::sampling::SampleSet;

/// Which layers stay trainable. Layers count the output layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    #[default]
    None,
    AllButFirstK(usize),
    AllButLastK(usize),
}

impl FreezePolicy {
    /// Sets the trainable mask of `params` for a network with `n_layers` layers.
    pub fn apply(self, params: &mut ParameterVector) -> Result<()> {
        let n = params.layout.len();
        let layers: Vec<usize> = match self {
            FreezePolicy::None => (0..n).collect(),
            FreezePolicy::AllButFirstK(k) | FreezePolicy::AllButLastK(k) if k == 0 || k > n => {
                return input(format!("freeze policy keeps {k} of {n} layers"));
            }
            FreezePolicy::AllButFirstK(k) => (0..k).collect(),
            FreezePolicy::AllButLastK(k) => (n - k..n).collect(),
        };
        params.set_trainable_layers(layers);
        Ok(())
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    pub log_every: usize,
    pub loss_weights: LossWeights,
    /// Recorded with the run; full-batch training draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub freeze_policy: FreezePolicy,
}

impl TrainConfig {
    pub fn new(iterations: usize, log_every: usize, loss_weights: LossWeights) -> Self {
        TrainConfig {
            iterations,
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            log_every,
            loss_weights,
            seed: 0,
            freeze_policy: FreezePolicy::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return input("training.learning_rate must be positive");
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return input(format!("training.{name} must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return input("training.adam_eps must be positive");
        }
        if self.log_every == 0 {
            return input("training.log_every must be at least 1");
        }
        self.loss_weights.validate()
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Outcome of one PINN run.
#[derive(Clone, Debug)]
pub struct TrainingRecord {
    pub loss_history: Vec<(usize, LossBreakdown)>,
    pub error_history: Option<Vec<(usize, f64)>>,
    pub final_params: ParameterVector,
    pub onset_iteration: Option<usize>,
    pub wall_time_s: f64,
}

impl TrainingRecord {
    pub fn total_history(&self) -> Vec<(usize, f64)> {
        self.loss_history
            .iter()
            .map(|(i, l)| (*i, l.total))
            .collect()
    }

    pub fn final_loss(&self) -> Option<&LossBreakdown> {
        self.loss_history.last().map(|(_, l)| l)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_history
            .as_ref()
            .and_then(|h| h.last().map(|&(_, e)| e))
    }
}

/// Reference values at fixed points, used to track `e_rel` while training.
#[derive(Clone, Debug)]
pub struct ErrorProbe<'a> {
    pub reference: &'a FieldOnPoints,
}

impl ErrorProbe<'_> {
    pub fn error(&self, params: &ParameterVector, spec: &NetworkSpec) -> Result<f64> {
        let out = forward_batch(params, spec, self.reference.points.view())?;
        let pred = FieldOnPoints {
            points: self.reference.points.clone(),
            p_r: out.column(0).to_vec(),
            p_i: out.column(1).to_vec(),
        };
        relative_l2(&pred, self.reference)
    }
}

/// What a training loop reports at each log point.
pub struct LogEvent<'a> {
    pub iteration: usize,
    pub loss: &'a LossBreakdown,
    pub e_rel: Option<f64>,
    pub params: &'a ParameterVector,
}

/// Runs `config.iterations` full-batch Adam steps on the physics loss.
pub fn train_pinn(
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    config: &TrainConfig,
    init_params: &ParameterVector,
    probe: Option<&ErrorProbe<'_>>,
) -> Result<TrainingRecord> {
    train_pinn_observed(spec, problem, samples, config, init_params, probe, |_| {
        Ok(())
    })
}

/// [`train_pinn`] with a callback at every log point (CSV streaming, checkpoints).
pub fn train_pinn_observed(
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    config: &TrainConfig,
    init_params: &ParameterVector,
    probe: Option<&ErrorProbe<'_>>,
    mut observer: impl FnMut(&LogEvent<'_>) -> Result<()>,
) -> Result<TrainingRecord> {
    let start = Instant::now();
    config.validate()?;
    spec.validate()?;
    init_params.check_against(spec)?;
    if samples.interior.nrows() == 0 {
        return input("no interior collocation points");
    }
    let ctx = LossContext::new(problem, samples, config.loss_weights)?;
    let mut params = init_params.clone();
    config.freeze_policy.apply(&mut params)?;
    let hp = config.adam();
    let mut state = AdamState::new(params.len());
    let mut loss_history = Vec::new();
    let mut error_history = probe.map(|_| Vec::new());

    for it in 0..=config.iterations {
        let (loss, grad) = ctx.loss_and_gradient(&params, spec)?;
        if let Some(term) = loss.non_finite_term() {
            return Err(Error::NonFinite {
                iteration: it,
                term: term.to_string(),
            });
        }
        if it % config.log_every == 0 || it == config.iterations {
            let e = probe.map(|p| p.error(&params, spec)).transpose()?;
            if let (Some(h), Some(e)) = (error_history.as_mut(), e) {
                h.push((it, e));
            }
            observer(&LogEvent {
                iteration: it,
                loss: &loss,
                e_rel: e,
                params: &params,
            })?;
            log::debug!("iteration {it}: total {:.6e}", loss.total);
            loss_history.push((it, loss));
        }
        if it == config.iterations {
            break;
        }
        adam_step(&mut params, &grad, &mut state, &hp)?;
    }

    let totals: Vec<(usize, f64)> = loss_history.iter().map(|(i, l)| (*i, l.total)).collect();
    Ok(TrainingRecord {
        onset_iteration: detect_onset(&totals),
        loss_history,
        error_history,
        final_params: params,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Supervised fit of the network to reference pressure values.
#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub data: FieldOnPoints,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return input("pretraining data is empty");
        }
        let ok = |f: f64| f > 0.0 && f <= 1.0;
        if !ok(self.train_fraction) || !ok(self.test_fraction) {
            return input("pretraining fractions must lie in (0, 1]");
        }
        if self.train_fraction + self.test_fraction > 1.0 + 1e-12 {
            return input("train_fraction + test_fraction exceeds 1");
        }
        if !(self.learning_rate > 0.0) {
            return input("pretraining learning_rate must be positive");
        }
        if self.log_every == 0 {
            return input("pretraining log_every must be at least 1");
        }
        if !self.data.is_finite() {
            return input("pretraining data contains non-finite values");
        }
        Ok(())
    }

    /// Seeded disjoint train/test index sets.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.data.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let n_train = ((self.train_fraction * n as f64).round() as usize).clamp(1, n);
        let n_test = ((self.test_fraction * n as f64).round() as usize).min(n - n_train);
        let test = idx[n_train..n_train + n_test].to_vec();
        idx.truncate(n_train);
        (idx, test)
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub params: ParameterVector,
    /// `(iteration, train MSE)` at each log point.
    pub loss_history: Vec<(usize, f64)>,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_time_s: f64,
}

fn mse_and_adjoint(
    out: &Array2<f64>,
    target: &Array2<f64>,
    with_adjoint: bool,
) -> (f64, Option<Array2<f64>>) {
    let n = out.nrows() as f64;
    let diff = out - target;
    let mse = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (mse, with_adjoint.then(|| diff * (2.0 / n)))
}

fn subset(data: &FieldOnPoints, idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
    let d = data.points.ncols();
    let pts = Array2::from_shape_fn((idx.len(), d), |(i, j)| data.points[[idx[i], j]]);
    let vals = Array2::from_shape_fn((idx.len(), 2), |(i, j)| {
        if j == 0 {
            data.p_r[idx[i]]
        } else {
            data.p_i[idx[i]]
        }
    });
    (pts, vals)
}

/// Mean squared error `|p - p_data|^2` over the train split, minimised with
/// Adam from `init` (Glorot from the spec seed when `None`).
pub fn pretrain_supervised(
    spec: &NetworkSpec,
    cfg: &PretrainConfig,
    init: Option<&ParameterVector>,
) -> Result<PretrainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    spec.validate()?;
    if cfg.data.points.ncols() != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: cfg.data.points.ncols(),
        });
    }
    let mut params = match init {
        Some(p) => {
            p.check_against(spec)?;
            p.clone()
        }
        None => init_glorot(spec),
    };
    let (train_idx, test_idx) = cfg.split();
    let (x_train, y_train) = subset(&cfg.data, &train_idx);
    let hp = AdamHyper {
        learning_rate: cfg.learning_rate,
        ..AdamHyper::default()
    };
    let mut state = AdamState::new(params.len());
    let mut history = Vec::new();
    let mut train_mse = f64::NAN;
    for it in 0..=cfg.iterations {
        let tape = Tape::forward(
            &params,
            spec,
            x_train.view(),
            ChannelPlan::value_only(),
            true,
        );
        let (mse, adj) = mse_and_adjoint(&tape.output, &y_train, it < cfg.iterations);
        if !mse.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                term: "mse".into(),
            });
        }
        train_mse = mse;
        if it % cfg.log_every == 0 || it == cfg.iterations {
            history.push((it, mse));
        }
        let Some(adj) = adj else { break };
        let mut grad = vec![0.0; params.len()];
        tape.backward(&params, adj, &mut grad);
        for (g, &t) in grad.iter_mut().zip(&params.trainable) {
            if !t {
                *g = 0.0;
            }
        }
        adam_step(&mut params, &grad, &mut state, &hp)?;
    }
    let test_mse = if test_idx.is_empty() {
        None
    } else {
        let (x_test, y_test) = subset(&cfg.data, &test_idx);
        let out = forward_batch(&params, spec, x_test.view())?;
        Some(mse_and_adjoint(&out, &y_test, false).0)
    };
    Ok(PretrainOutcome {
        params,
        loss_history: history,
        train_mse,
        test_mse,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Both phases of discrepancy learning.
#[derive(Clone, Debug)]
pub struct DiscrepancyRecord {
    pub pretrain: PretrainOutcome,
    pub pinn: TrainingRecord,
}

/// Pretrains on reference data, applies the freeze policy of `pinn_cfg`,
/// then continues with the physics loss.
pub fn run_discrepancy(
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    pre_cfg: &PretrainConfig,
    pinn_cfg: &TrainConfig,
    probe: Option<&ErrorProbe<'_>>,
) -> Result<DiscrepancyRecord> {
    let pretrain = pretrain_supervised(spec, pre_cfg, None)?;
    let pinn = train_pinn(spec, problem, samples, pinn_cfg, &pretrain.params, probe)?;
    Ok(DiscrepancyRecord { pretrain, pinn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::physics::Sharpness;
    use crate::sampling::sample;

    fn small() -> (NetworkSpec, HelmholtzProblem, SampleSet) {
        let spec = NetworkSpec::uniform(2, 2, 8, Activation::SIN, 7).unwrap();
        let problem = HelmholtzProblem::unit_box(2, 1.0, -0.04, Sharpness::INFINITE);
        let samples = sample(&problem, 6.0, 3).unwrap();
        (spec, problem, samples)
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let spec = NetworkSpec::uniform(2, 2, 5, Activation::SIN, 3).unwrap();
        let p0 = init_glorot(&spec);
        let x = Array2::from_shape_fn((7, 2), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let y = Array2::from_shape_fn((7, 2), |(i, j)| ((i + 2 * j) as f64 * 0.5).cos());
        let mse = |p: &ParameterVector| {
            let out = forward_batch(p, &spec, x.view()).unwrap();
            mse_and_adjoint(&out, &y, false).0
        };
        let tape = Tape::forward(&p0, &spec, x.view(), ChannelPlan::value_only(), true);
        let (_, adj) = mse_and_adjoint(&tape.output, &y, true);
        let mut grad = vec![0.0; p0.len()];
        tape.backward(&p0, adj.unwrap(), &mut grad);
        let h = 1e-6;
        for i in 0..p0.len() {
            let mut a = p0.clone();
            let mut b = p0.clone();
            a.values[i] += h;
            b.values[i] -= h;
            let fd = (mse(&a) - mse(&b)) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "entry {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_params() {
        let (spec, problem, samples) = small();
        let p0 = init_glorot(&spec);
        let cfg = TrainConfig::new(0, 1, LossWeights::square_2d_complex());
        let rec = train_pinn(&spec, &problem, &samples, &cfg, &p0, None).unwrap();
        assert_eq!(rec.final_params, p0);
        assert_eq!(rec.loss_history.len(), 1);
    }

    #[test]
    fn logging_cadence_and_determinism() {
        let (spec, problem, samples) = small();
        let p0 = init_glorot(&spec);
        let cfg = TrainConfig::new(30, 10, LossWeights::square_2d_complex());
        let a = train_pinn(&spec, &problem, &samples, &cfg, &p0, None).unwrap();
        let b = train_pinn(&spec, &problem, &samples, &cfg, &p0, None).unwrap();
        let its: Vec<usize> = a.loss_history.iter().map(|(i, _)| *i).collect();
        assert_eq!(its, vec![0, 10, 20, 30]);
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.final_params, b.final_params);
        assert!(a.final_loss().unwrap().total < a.loss_history[0].1.total);
    }

    #[test]
    fn initial_total_scales_with_weights() {
        let (spec, problem, samples) = small();
        let p0 = init_glorot(&spec);
        let w = LossWeights::square_2d_complex();
        let one = train_pinn(
            &spec,
            &problem,
            &samples,
            &TrainConfig::new(0, 1, w),
            &p0,
            None,
        )
        .unwrap();
        let two = train_pinn(
            &spec,
            &problem,
            &samples,
            &TrainConfig::new(0, 1, w.scaled(2.0)),
            &p0,
            None,
        )
        .unwrap();
        let (a, b) = (one.loss_history[0].1.total, two.loss_history[0].1.total);
        assert!((b - 2.0 * a).abs() <= 1e-14 * b);
    }

    #[test]
    fn frozen_layers_stay_bit_identical() {
        let (spec, problem, samples) = small();
        let p0 = init_glorot(&spec);
        let mut cfg = TrainConfig::new(15, 5, LossWeights::square_2d_complex());
        cfg.freeze_policy = FreezePolicy::AllButLastK(2);
        let rec = train_pinn(&spec, &problem, &samples, &cfg, &p0, None).unwrap();
        let first = p0.layout[0].range();
        assert_eq!(&rec.final_params.values[first.clone()], &p0.values[first]);
        let last = p0.layout[2].weight_range();
        assert_ne!(&rec.final_params.values[last.clone()], &p0.values[last]);
    }

    #[test]
    fn freeze_policy_masks() {
        let (spec, _, _) = small();
        let mut p = init_glorot(&spec);
        FreezePolicy::AllButFirstK(1).apply(&mut p).unwrap();
        assert_eq!(p.n_trainable(), p.layout[0].range().len());
        assert!(FreezePolicy::AllButLastK(4).apply(&mut p).is_err());
        FreezePolicy::None.apply(&mut p).unwrap();
        assert_eq!(p.n_trainable(), p.len());
    }

    #[test]
    fn nan_aborts_with_term() {
        let (spec, problem, samples) = small();
        let mut p0 = init_glorot(&spec);
        p0.values[0] = f64::NAN;
        let cfg = TrainConfig::new(5, 1, LossWeights::square_2d_complex());
        match train_pinn(&spec, &problem, &samples, &cfg, &p0, None) {
            Err(Error::NonFinite { iteration, term }) => {
                assert_eq!(iteration, 0);
                assert_eq!(term, "pde_r");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_generated_data_is_a_fixed_point() {
        let (spec, _, _) = small();
        let p0 = init_glorot(&spec);
        let grid = crate::oracle::TensorGrid::uniform(&crate::physics::BoxDomain::unit(2), 12);
        let pts = grid.points();
        let out = forward_batch(&p0, &spec, pts.view()).unwrap();
        let data = FieldOnPoints {
            points: pts,
            p_r: out.column(0).to_vec(),
            p_i: out.column(1).to_vec(),
        };
        let cfg = PretrainConfig {
            iterations: 20,
            learning_rate: 1e-3,
            data,
            train_fraction: 0.7,
            test_fraction: 0.3,
            seed: 1,
            log_every: 5,
        };
        let res = pretrain_supervised(&spec, &cfg, None).unwrap();
        assert_eq!(res.train_mse, 0.0);
        assert_eq!(res.test_mse, Some(0.0));
        assert_eq!(res.params, p0);
        let (tr, te) = cfg.split();
        assert_eq!(tr.len() + te.len(), 144);
        assert!(tr.iter().all(|i| !te.contains(i)));
    }

    #[test]
    fn pretraining_reduces_mse() {
        let (_, problem, _) = small();
        let spec = NetworkSpec::uniform(2, 2, 16, Activation::SIN, 7).unwrap();
        let exact = crate::oracle::analytic_infty(&problem).unwrap();
        let grid = crate::oracle::TensorGrid::uniform(&problem.domain, 15);
        use crate::oracle::ReferenceField;
        let data = exact.on_points(grid.points().view());
        let cfg = PretrainConfig {
            iterations: 1500,
            learning_rate: 1e-2,
            data,
            train_fraction: 0.8,
            test_fraction: 0.2,
            seed: 4,
            log_every: 250,
        };
        let res = pretrain_supervised(&spec, &cfg, None).unwrap();
        assert!(
            res.loss_history.last().unwrap().1 < 0.2 * res.loss_history[0].1,
            "{:?}",
            res.loss_history
        );
        assert!(res.test_mse.unwrap() < 0.2 * res.loss_history[0].1);
    }
}

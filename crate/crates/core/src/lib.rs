//! Physics-informed neural networks for the damped Helmholtz equation in
//! rectangular rooms with sound-hard walls, with spectral reference solvers.
//!
//! The pressure `p = p_r + i p_i` solves `lap p + k_c^2 p = -k0^2 g` with
//! `k_c^2 = k0^2 / (1 + i eta)` and zero normal derivative on every wall.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod physics;
pub mod sampling;
pub mod training;

pub use analysis::{
    evaluation_grid, hessian_top_eigenvalue, landscape_grid, meaningful_check, relative_l2,
    EigenEstimate, ErrorReport, LandscapeGrid, Normalization,
};
pub use error::{Error, Result};
pub use model::{
    forward, forward_batch, forward_with_derivatives, forward_with_derivatives_batch, init_glorot,
    Activation, EvalWithDerivatives, NetworkSpec, ParameterVector, WideningVariant,
};
pub use oracle::{
    analytic_infty, galerkin_solve, gf_convolve, greens_function, modal_solve, FieldOnPoints,
    ReferenceField, TensorGrid,
};
pub use physics::{
    total_loss, BcGrouping, BoxDomain, HelmholtzProblem, LossBreakdown, LossWeights, MediumSpec,
    Sharpness, SourceSpec,
};
pub use sampling::{sample, SampleSet};
pub use training::{
    detect_onset, pretrain_supervised, run_discrepancy, train_pinn, FreezePolicy, PretrainConfig,
    TrainConfig, TrainingRecord,
};

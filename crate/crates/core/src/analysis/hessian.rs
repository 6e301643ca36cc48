use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::model::{NetworkSpec, ParameterVector};
use crate::physics::{HelmholtzProblem, LossContext, LossWeights};
use crate::sampling::SampleSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    /// Largest Rayleigh quotient seen during the iteration.
    pub value: f64,
    /// `||H v - lambda v||` for the last unit probe vector.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration with a Hessian-vector product. Entries with `mask[i] ==
/// false` are held at zero.
pub fn power_iteration(
    mask: &[bool],
    mut hvp: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<EigenEstimate> {
    if !mask.iter().any(|&m| m) {
        return input("no trainable entries for the Hessian estimate");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = mask
        .iter()
        .map(|&m| {
            if m {
                StandardNormal.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut best = f64::NEG_INFINITY;
    let mut residual = f64::INFINITY;
    let mut done = 0;
    for k in 0..iters.max(1) {
        done = k + 1;
        let mut w = hvp(&v)?;
        for (x, &m) in w.iter_mut().zip(mask) {
            if !m {
                *x = 0.0;
            }
        }
        let lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        best = best.max(lambda);
        residual = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (b - lambda * a).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            break;
        }
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    Ok(EigenEstimate {
        value: best,
        residual,
        converged: residual <= tol,
        iterations: done,
    })
}

/// Top Hessian eigenvalue from central differences of an exact gradient,
/// step `1e-4 (1 + ||theta||_inf)`.
pub fn top_eigenvalue_fd(
    theta: &[f64],
    mask: &[bool],
    mut grad: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    iters: usize,
    tol: f64,
) -> Result<EigenEstimate> {
    let h = 1e-4 * (1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    power_iteration(
        mask,
        |v| {
            for i in 0..theta.len() {
                plus[i] = theta[i] + h * v[i];
                minus[i] = theta[i] - h * v[i];
            }
            let gp = grad(&plus)?;
            let gm = grad(&minus)?;
            Ok(gp
                .iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect())
        },
        iters,
        tol,
        0,
    )
}

/// Dominant eigenvalue of the physics-loss Hessian over the trainable entries.
pub fn hessian_top_eigenvalue(
    params: &ParameterVector,
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    weights: LossWeights,
    iters: usize,
    tol: f64,
) -> Result<EigenEstimate> {
    params.check_against(spec)?;
    let ctx = LossContext::new(problem, samples, weights)?;
    let mut probe = params.clone();
    top_eigenvalue_fd(
        &params.values,
        &params.trainable,
        |x| {
            probe.values.copy_from_slice(x);
            ctx.loss_and_gradient(&probe, spec).map(|(_, g)| g)
        },
        iters,
        tol,
    )
}

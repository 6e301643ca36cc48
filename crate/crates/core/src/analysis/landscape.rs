use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::model::{NetworkSpec, ParameterVector};
use crate::physics::{HelmholtzProblem, LossContext, LossWeights};
use crate::sampling::SampleSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each weight row (one neuron) and each bias vector rescaled to the norm
    /// of the matching block of the parameters.
    #[default]
    FilterNorm,
    /// The whole direction rescaled to the norm of the parameters.
    GlobalNorm,
}

/// Total loss on the plane `params + alpha d1 + beta d2`; `loss[i][j]` is at
/// `(alphas[i], betas[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub loss: Vec<Vec<f64>>,
    pub direction_seeds: Option<(u64, u64)>,
    pub normalization: Normalization,
}

impl LandscapeGrid {
    pub fn center(&self) -> f64 {
        self.loss[self.alphas.len() / 2][self.betas.len() / 2]
    }

    /// Grid index of the smallest loss (first one on ties).
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.loss.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < self.loss[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn center_is_minimum(&self) -> bool {
        let c = self.center();
        self.loss.iter().flatten().all(|&v| v >= c)
    }

    /// Sign changes of the discrete second difference along alpha, summed over
    /// all beta lines. Smooth bowls give none; oscillatory surfaces many.
    pub fn alpha_curvature_sign_changes(&self) -> usize {
        let na = self.alphas.len();
        let mut count = 0;
        for j in 0..self.betas.len() {
            let d2: Vec<f64> = (1..na.saturating_sub(1))
                .map(|i| self.loss[i + 1][j] - 2.0 * self.loss[i][j] + self.loss[i - 1][j])
                .filter(|v| v.is_finite() && *v != 0.0)
                .collect();
            count += d2
                .windows(2)
                .filter(|w| w[0].signum() != w[1].signum())
                .count();
        }
        count
    }
}

fn scale_block(d: &mut [f64], theta: &[f64]) {
    let nd = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = if nd > 0.0 { nt / nd } else { 0.0 };
    d.iter_mut().for_each(|v| *v *= s);
}

/// Seeded Gaussian direction normalised against `params`; frozen entries are zero.
pub fn random_direction(params: &ParameterVector, seed: u64, norm: Normalization) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f64> = (0..params.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for (v, &t) in d.iter_mut().zip(&params.trainable) {
        if !t {
            *v = 0.0;
        }
    }
    match norm {
        Normalization::GlobalNorm => {
            let theta: Vec<f64> = params
                .values
                .iter()
                .zip(&params.trainable)
                .map(|(&v, &t)| if t { v } else { 0.0 })
                .collect();
            scale_block(&mut d, &theta);
        }
        Normalization::FilterNorm => {
            for l in &params.layout {
                for row in 0..l.fan_out {
                    let r =
                        l.weight_offset + row * l.fan_in..l.weight_offset + (row + 1) * l.fan_in;
                    scale_block(&mut d[r.clone()], &params.values[r]);
                }
                let r = l.bias_range();
                scale_block(&mut d[r.clone()], &params.values[r]);
            }
        }
    }
    d
}

fn axis(half_range: f64, resolution: usize) -> Vec<f64> {
    let c = resolution / 2;
    (0..resolution)
        .map(|i| {
            if i == c {
                0.0
            } else {
                half_range * (i as f64 - c as f64) / c as f64
            }
        })
        .collect()
}

/// Loss over a plane spanned by explicit directions.
#[allow(clippy::too_many_arguments)]
pub fn landscape_with_directions(
    params: &ParameterVector,
    spec: &NetworkSpec,
    ctx: &LossContext,
    d1: &[f64],
    d2: &[f64],
    half_range: f64,
    resolution: usize,
) -> Result<LandscapeGrid> {
    if resolution.is_multiple_of(2) {
        return input(format!(
            "landscape resolution must be odd, got {resolution}"
        ));
    }
    if !(half_range > 0.0) {
        return input("landscape half_range must be positive");
    }
    if d1.len() != params.len() || d2.len() != params.len() {
        return input("direction length differs from parameter count");
    }
    let alphas = axis(half_range, resolution);
    let betas = alphas.clone();
    let mut probe = params.clone();
    let mut loss = Vec::with_capacity(resolution);
    for &a in &alphas {
        let mut row = Vec::with_capacity(resolution);
        for &b in &betas {
            for (i, v) in probe.values.iter_mut().enumerate() {
                *v = if a == 0.0 && b == 0.0 {
                    params.values[i]
                } else {
                    params.values[i] + a * d1[i] + b * d2[i]
                };
            }
            let l = ctx.loss(&probe, spec).map(|l| l.total).unwrap_or(f64::NAN);
            row.push(if l.is_finite() { l } else { f64::INFINITY });
        }
        loss.push(row);
    }
    Ok(LandscapeGrid {
        alphas,
        betas,
        loss,
        direction_seeds: None,
        normalization: Normalization::FilterNorm,
    })
}

/// Loss on a seeded, normalised random plane through `params`.
#[allow(clippy::too_many_arguments)]
pub fn landscape_grid(
    params: &ParameterVector,
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    weights: LossWeights,
    half_range: f64,
    resolution: usize,
    seeds: (u64, u64),
    normalization: Normalization,
) -> Result<LandscapeGrid> {
    params.check_against(spec)?;
    let ctx = LossContext::new(problem, samples, weights)?;
    let d1 = random_direction(params, seeds.0, normalization);
    let d2 = random_direction(params, seeds.1, normalization);
    let mut grid = landscape_with_directions(params, spec, &ctx, &d1, &d2, half_range, resolution)?;
    grid.direction_seeds = Some(seeds);
    grid.normalization = normalization;
    Ok(grid)
}

//! Dense feed-forward network `x -> (p_r, p_i)`.
//!
//! The forward pass carries, next to the activations, their first derivatives
//! along a chosen set of input axes and (optionally) the matching unmixed second
//! derivatives. That is enough for exact gradients, Laplacians and normal
//! derivatives, and the whole pass is differentiated in reverse mode for the
//! parameter gradients of the physics loss.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, Error, Result};

/// Activation of one dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    /// `sin(scale * z)`.
    SinScaled {
        scale: f64,
    },
    Tanh,
    Linear,
}

impl Activation {
    pub const SIN: Activation = Activation::SinScaled { scale: 1.0 };

    pub fn sin(scale: f64) -> Self {
        Activation::SinScaled { scale }
    }

    /// Value and first three derivatives at `z`.
    #[inline]
    pub fn eval(self, z: f64) -> [f64; 4] {
        match self {
            Activation::SinScaled { scale } => {
                let (s, c) = (scale * z).sin_cos();
                let a2 = scale * scale;
                [s, scale * c, -a2 * s, -a2 * scale * c]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let u = 1.0 - t * t;
                [t, u, -2.0 * t * u, -2.0 * u * (1.0 - 3.0 * t * t)]
            }
            Activation::Linear => [z, 1.0, 0.0, 0.0],
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::SinScaled { scale } if !(scale > 0.0 && scale.is_finite()) => {
                input(format!("activation scale must be positive, got {scale}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::SinScaled { scale } if *scale == 1.0 => write!(f, "sin"),
            Activation::SinScaled { scale } => write!(f, "sin({scale})"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "sin" => return Ok(Activation::SIN),
            "tanh" => return Ok(Activation::Tanh),
            "linear" | "identity" => return Ok(Activation::Linear),
            _ => {}
        }
        let scale = t
            .strip_prefix("sin(")
            .and_then(|r| r.strip_suffix(')'))
            .map(|r| r.trim().trim_end_matches('x').trim())
            .and_then(|r| r.parse::<f64>().ok());
        match scale {
            Some(scale) => {
                let act = Activation::SinScaled { scale };
                act.validate()?;
                Ok(act)
            }
            None => input(format!(
                "unknown activation `{s}` (expected sin, sin(<scale>), tanh or linear)"
            )),
        }
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

fn default_output_dim() -> usize {
    2
}

/// Architecture of the network. Immutable once validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    pub hidden_activations: Vec<Activation>,
    pub output_activation: Activation,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        hidden_activations: Vec<Activation>,
        output_activation: Activation,
        init_seed: u64,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            input_dim,
            hidden_widths,
            output_dim: 2,
            hidden_activations,
            output_activation,
            init_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth` hidden layers of equal `width`, all with `activation`, linear output.
    pub fn uniform(
        input_dim: usize,
        depth: usize,
        width: usize,
        activation: Activation,
        init_seed: u64,
    ) -> Result<Self> {
        Self::new(
            input_dim,
            vec![width; depth],
            vec![activation; depth],
            Activation::Linear,
            init_seed,
        )
    }

    /// The widening 32/64/128 architecture. `Va` uses sin, sin(2), sin(4) with a tanh
    /// output, `Vb` the same hidden stack with a sin output, and the plain variant
    /// uses sin everywhere with a linear output.
    pub fn widening(input_dim: usize, variant: WideningVariant, init_seed: u64) -> Result<Self> {
        let widths = vec![32, 64, 128];
        let graded = vec![
            Activation::sin(1.0),
            Activation::sin(2.0),
            Activation::sin(4.0),
        ];
        let (hidden, out) = match variant {
            WideningVariant::Sin => (vec![Activation::SIN; 3], Activation::Linear),
            WideningVariant::A => (graded, Activation::Tanh),
            WideningVariant::B => (graded, Activation::SIN),
        };
        Self::new(input_dim, widths, hidden, out, init_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != 2 && self.input_dim != 3 {
            return input(format!("input_dim must be 2 or 3, got {}", self.input_dim));
        }
        if self.output_dim != 2 {
            return input(format!("output_dim must be 2, got {}", self.output_dim));
        }
        if self.hidden_widths.len() != self.hidden_activations.len() {
            return input(format!(
                "{} hidden widths but {} hidden activations",
                self.hidden_widths.len(),
                self.hidden_activations.len()
            ));
        }
        if let Some(pos) = self.hidden_widths.iter().position(|&w| w == 0) {
            return input(format!("hidden layer {pos} has zero width"));
        }
        for a in self
            .hidden_activations
            .iter()
            .chain(Some(&self.output_activation))
        {
            a.validate()?;
        }
        Ok(())
    }

    /// Number of dense layers (hidden layers plus the output layer).
    pub fn n_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer < self.hidden_activations.len() {
            self.hidden_activations[layer]
        } else {
            self.output_activation
        }
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("network spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WideningVariant {
    Sin,
    A,
    B,
}

/// Placement of one layer's weights (row-major `fan_out x fan_in`) and biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.fan_in * self.fan_out
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset + self.fan_out
    }
}

/// Flat trainable parameters with their layer map and freeze mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayerLayout>,
    pub trainable: Vec<bool>,
}

impl ParameterVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut layout = Vec::with_capacity(spec.n_layers());
        let mut offset = 0;
        for (fan_in, fan_out) in spec.layer_shapes() {
            layout.push(LayerLayout {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        ParameterVector {
            values: vec![0.0; offset],
            layout,
            trainable: vec![true; offset],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let l = &self.layout[layer];
        ArrayView2::from_shape((l.fan_out, l.fan_in), &self.values[l.weight_range()])
            .expect("layout matches storage")
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.values[self.layout[layer].bias_range()]
    }

    /// Marks exactly the layers in `layers` as trainable.
    pub fn set_trainable_layers(&mut self, layers: impl IntoIterator<Item = usize>) {
        self.trainable.iter_mut().for_each(|t| *t = false);
        for l in layers {
            let r = self.layout[l].range();
            self.trainable[r].iter_mut().for_each(|t| *t = true);
        }
    }

    /// Checks that the layout is contiguous and matches `spec`.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = ParameterVector::zeros(spec);
        if expected.layout != self.layout || self.values.len() != expected.values.len() {
            return input("parameter layout does not match the network spec");
        }
        if self.trainable.len() != self.values.len() {
            return input("trainable mask length differs from parameter count");
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, everything trainable.
pub fn init_glorot(spec: &NetworkSpec) -> ParameterVector {
    let mut params = ParameterVector::zeros(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    for l in params.layout.clone() {
        let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in &mut params.values[l.weight_range()] {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

/// Network output with its input derivatives at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalWithDerivatives {
    /// `(p_r, p_i)`.
    pub value: [f64; 2],
    /// `[grad p_r, grad p_i]`, each of length `input_dim`.
    pub gradient: [Vec<f64>; 2],
    /// `(lap p_r, lap p_i)`.
    pub laplacian: [f64; 2],
}

impl EvalWithDerivatives {
    pub fn is_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
            && self.laplacian.iter().all(|v| v.is_finite())
            && self.gradient.iter().flatten().all(|v| v.is_finite())
    }
}

fn check_point(spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: x.len(),
        });
    }
    Ok(())
}

pub fn forward(params: &ParameterVector, spec: &NetworkSpec, x: &[f64]) -> Result<[f64; 2]> {
    check_point(spec, x)?;
    let pts = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    let out = forward_batch(params, spec, pts)?;
    Ok([out[[0, 0]], out[[0, 1]]])
}

/// Outputs for a batch of points (`n x input_dim`), returned as `n x 2`.
pub fn forward_batch(
    params: &ParameterVector,
    spec: &NetworkSpec,
    points: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if points.ncols() != spec.input_dim {
        return Err(Error::Dimension {
            expected: spec.input_dim,
            got: points.ncols(),
        });
    }
    let tape = Tape::forward(params, spec, points, ChannelPlan::value_only(), false);
    Ok(tape.output)
}

pub fn forward_with_derivatives(
    params: &ParameterVector,
    spec: &NetworkSpec,
    x: &[f64],
) -> Result<EvalWithDerivatives> {
    check_point(spec, x)?;
    let pts = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    Ok(forward_with_derivatives_batch(params, spec, pts)?.remove(0))
}

pub fn forward_with_derivatives_batch(
    params: &ParameterVector,
    spec: &NetworkSpec,
    points: ArrayView2<'_, f64>,
) -> Result<Vec<EvalWithDerivatives>> {
    let d = spec.input_dim;
    if points.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            got: points.ncols(),
        });
    }
    let plan = ChannelPlan::full(d);
    let tape = Tape::forward(params, spec, points, plan.clone(), false);
    let b = points.nrows();
    let out = &tape.output;
    Ok((0..b)
        .map(|i| {
            let mut gradient = [vec![0.0; d], vec![0.0; d]];
            let mut laplacian = [0.0; 2];
            for k in 0..d {
                for o in 0..2 {
                    gradient[o][k] = out[[plan.first(k) * b + i, o]];
                    laplacian[o] += out[[plan.second(k) * b + i, o]];
                }
            }
            EvalWithDerivatives {
                value: [out[[i, 0]], out[[i, 1]]],
                gradient,
                laplacian,
            }
        })
        .collect())
}

pub use crate::physics::loss_gradient;

/// Which derivative channels a batched pass carries.
///
/// Channel 0 is the value, channels `1..=dirs.len()` are first derivatives
/// along `dirs`, and, when `second` is set, the next `dirs.len()` channels hold
/// the unmixed second derivatives along the same axes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ChannelPlan {
    pub dirs: Vec<usize>,
    pub second: bool,
}

impl ChannelPlan {
    pub fn value_only() -> Self {
        ChannelPlan {
            dirs: Vec::new(),
            second: false,
        }
    }

    pub fn full(dim: usize) -> Self {
        ChannelPlan {
            dirs: (0..dim).collect(),
            second: true,
        }
    }

    pub fn gradient_along(axis: usize) -> Self {
        ChannelPlan {
            dirs: vec![axis],
            second: false,
        }
    }

    pub fn count(&self) -> usize {
        1 + self.dirs.len() * if self.second { 2 } else { 1 }
    }

    pub fn first(&self, k: usize) -> usize {
        1 + k
    }

    pub fn second(&self, k: usize) -> usize {
        debug_assert!(self.second);
        1 + self.dirs.len() + k
    }
}

/// Intermediate state of a batched forward pass.
///
/// Every matrix stacks the channels of [`ChannelPlan`] as row blocks of
/// `batch` rows each.
pub(crate) struct Tape {
    pub plan: ChannelPlan,
    pub batch: usize,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    /// Per layer: activation derivatives `[s1, s2, s3]` at the value channel.
    slopes: Vec<[Array2<f64>; 3]>,
    pub output: Array2<f64>,
}

impl Tape {
    pub fn forward(
        params: &ParameterVector,
        spec: &NetworkSpec,
        points: ArrayView2<'_, f64>,
        plan: ChannelPlan,
        keep: bool,
    ) -> Tape {
        let b = points.nrows();
        let d = points.ncols();
        let nc = plan.count();
        let nd = plan.dirs.len();
        let mut a = Array2::<f64>::zeros((nc * b, d));
        a.slice_mut(s![0..b, ..]).assign(&points);
        for (k, &axis) in plan.dirs.iter().enumerate() {
            let c = plan.first(k);
            a.slice_mut(s![c * b..(c + 1) * b, axis..axis + 1])
                .fill(1.0);
        }

        let n_layers = params.layout.len();
        let mut inputs = Vec::with_capacity(if keep { n_layers } else { 0 });
        let mut pre = Vec::with_capacity(if keep { n_layers } else { 0 });
        let mut slopes = Vec::with_capacity(if keep { n_layers } else { 0 });

        for layer in 0..n_layers {
            let w = params.weights(layer);
            let mut z = a.dot(&w.t());
            if !z.is_standard_layout() {
                z = z.as_standard_layout().into_owned();
            }
            let bias = params.biases(layer);
            for mut row in z.slice_mut(s![0..b, ..]).rows_mut() {
                row.iter_mut().zip(bias).for_each(|(v, bb)| *v += bb);
            }
            let act = spec.activation(layer);
            let n = z.ncols();
            let mut out = Array2::<f64>::zeros(z.raw_dim());
            let mut sl = if keep {
                Some([
                    Array2::<f64>::zeros((b, n)),
                    Array2::<f64>::zeros((b, n)),
                    Array2::<f64>::zeros((b, n)),
                ])
            } else {
                None
            };
            {
                let zs = z.as_slice().expect("standard layout");
                let os = out.as_slice_mut().expect("standard layout");
                for i in 0..b {
                    for j in 0..n {
                        let idx = i * n + j;
                        let [s0, s1, s2, s3] = act.eval(zs[idx]);
                        os[idx] = s0;
                        for k in 0..nd {
                            let di = (plan.first(k) * b) * n + idx;
                            let zd = zs[di];
                            os[di] = s1 * zd;
                            if plan.second {
                                let si = (plan.second(k) * b) * n + idx;
                                os[si] = s2 * zd * zd + s1 * zs[si];
                            }
                        }
                        if let Some(sl) = sl.as_mut() {
                            sl[0].as_slice_mut().unwrap()[idx] = s1;
                            sl[1].as_slice_mut().unwrap()[idx] = s2;
                            sl[2].as_slice_mut().unwrap()[idx] = s3;
                        }
                    }
                }
            }
            if keep {
                inputs.push(std::mem::replace(&mut a, out));
                pre.push(z);
                slopes.push(sl.unwrap());
            } else {
                a = out;
            }
        }
        Tape {
            plan,
            batch: b,
            inputs,
            pre,
            slopes,
            output: a,
        }
    }

    /// Reverse pass. `adjoint` has the shape of `output`; parameter gradients
    /// are accumulated into `grad` (full parameter length).
    pub fn backward(&self, params: &ParameterVector, adjoint: Array2<f64>, grad: &mut [f64]) {
        assert!(
            !self.inputs.is_empty(),
            "backward requires a tape recorded with keep = true"
        );
        let b = self.batch;
        let nd = self.plan.dirs.len();
        let mut abar = adjoint;
        for layer in (0..params.layout.len()).rev() {
            if !abar.is_standard_layout() {
                abar = abar.as_standard_layout().into_owned();
            }
            let z = &self.pre[layer];
            let n = z.ncols();
            let mut zbar = Array2::<f64>::zeros(z.raw_dim());
            {
                let zs = z.as_slice().unwrap();
                let ab = abar.as_slice().unwrap();
                let zb = zbar.as_slice_mut().unwrap();
                let [s1a, s2a, s3a] = &self.slopes[layer];
                let (s1a, s2a, s3a) = (
                    s1a.as_slice().unwrap(),
                    s2a.as_slice().unwrap(),
                    s3a.as_slice().unwrap(),
                );
                for idx in 0..b * n {
                    let (s1, s2, s3) = (s1a[idx], s2a[idx], s3a[idx]);
                    let mut v = ab[idx] * s1;
                    for k in 0..nd {
                        let di = (self.plan.first(k) * b) * n + idx;
                        let zd = zs[di];
                        let dbar = ab[di];
                        v += dbar * s2 * zd;
                        let mut dz = dbar * s1;
                        if self.plan.second {
                            let si = (self.plan.second(k) * b) * n + idx;
                            let sbar = ab[si];
                            v += sbar * (s3 * zd * zd + s2 * zs[si]);
                            dz += sbar * 2.0 * s2 * zd;
                            zb[si] = sbar * s1;
                        }
                        zb[di] = dz;
                    }
                    zb[idx] = v;
                }
            }
            let l = params.layout[layer];
            let a_in = &self.inputs[layer];
            let wbar = zbar.t().dot(a_in);
            let gw = &mut grad[l.weight_range()];
            gw.iter_mut().zip(wbar.iter()).for_each(|(g, v)| *g += v);
            let bbar = zbar.slice(s![0..b, ..]).sum_axis(Axis(0));
            grad[l.bias_range()]
                .iter_mut()
                .zip(bbar.iter())
                .for_each(|(g, v)| *g += v);
            if layer > 0 {
                abar = zbar.dot(&params.weights(layer));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_neuron(scale: f64, w: f64) -> (NetworkSpec, ParameterVector) {
        let spec = NetworkSpec::new(
            3,
            vec![1],
            vec![Activation::sin(scale)],
            Activation::Linear,
            0,
        )
        .unwrap();
        let mut p = ParameterVector::zeros(&spec);
        // hidden weight on x1 only; output row 0 reads the neuron
        p.values[0] = w;
        let out = p.layout[1];
        p.values[out.weight_offset] = 1.0;
        (spec, p)
    }

    #[test]
    fn parameter_count_for_three_by_150() {
        let spec = NetworkSpec::uniform(3, 3, 150, Activation::SIN, 1).unwrap();
        assert_eq!(spec.n_params(), 46202);
        assert_eq!(init_glorot(&spec).len(), 46202);
    }

    #[test]
    fn layout_is_contiguous() {
        let spec = NetworkSpec::uniform(2, 2, 8, Activation::SIN, 1).unwrap();
        let p = ParameterVector::zeros(&spec);
        let mut next = 0;
        for l in &p.layout {
            assert_eq!(l.weight_offset, next);
            next = l.bias_offset + l.fan_out;
        }
        assert_eq!(next, p.len());
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let spec = NetworkSpec::uniform(3, 1, 1, Activation::SIN, 9).unwrap();
        let p = init_glorot(&spec);
        for l in &p.layout {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            assert!(p.values[l.weight_range()].iter().all(|w| w.abs() <= bound));
            assert!(p.values[l.bias_range()].iter().all(|&b| b == 0.0));
        }
        assert!(p.trainable.iter().all(|&t| t));
        assert_eq!(p, init_glorot(&spec));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = NetworkSpec::uniform(3, 2, 5, Activation::SIN, 0).unwrap();
        let p = ParameterVector::zeros(&spec);
        assert_eq!(forward(&p, &spec, &[0.3, 0.2, 0.1]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn single_neuron_by_hand() {
        let (spec, p) = single_neuron(1.0, 0.7);
        let out = forward(&p, &spec, &[0.4, 0.9, 0.1]).unwrap();
        assert_relative_eq!(out[0], (0.7f64 * 0.4).sin(), epsilon = 1e-15);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn sin_identity_derivatives_at_origin() {
        let (spec, p) = single_neuron(1.0, 1.0);
        let e = forward_with_derivatives(&p, &spec, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e.gradient[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(e.laplacian[0], 0.0);
    }

    #[test]
    fn scaled_sine_laplacian() {
        let (spec, p) = single_neuron(4.0, 1.0);
        let x = std::f64::consts::PI / 8.0;
        let e = forward_with_derivatives(&p, &spec, &[x, 0.3, 0.3]).unwrap();
        assert_relative_eq!(e.laplacian[0], -16.0, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_scales_with_square_of_activation_scale() {
        let x = [0.37, 0.1, 0.8];
        for a in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let (spec, p) = single_neuron(a, 0.9);
            let e = forward_with_derivatives(&p, &spec, &x).unwrap();
            let expected = -(a * a) * 0.81 * (a * 0.9 * x[0]).sin();
            assert_relative_eq!(e.laplacian[0], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut spec = NetworkSpec::uniform(2, 2, 16, Activation::sin(4.0), 3).unwrap();
        spec.output_activation = Activation::Tanh;
        let mut p = init_glorot(&spec);
        p.values.iter_mut().for_each(|v| *v *= 20.0);
        for x in [[0.1, 0.2], [0.9, 0.4], [0.5, 0.5]] {
            let out = forward(&p, &spec, &x).unwrap();
            assert!(out.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = NetworkSpec::uniform(3, 1, 4, Activation::SIN, 0).unwrap();
        let p = init_glorot(&spec);
        assert!(matches!(
            forward(&p, &spec, &[0.1, 0.2]),
            Err(Error::Dimension {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(
            NetworkSpec::new(4, vec![4], vec![Activation::SIN], Activation::Linear, 0).is_err()
        );
        assert!(
            NetworkSpec::new(2, vec![4, 4], vec![Activation::SIN], Activation::Linear, 0).is_err()
        );
        assert!(
            NetworkSpec::new(2, vec![0], vec![Activation::SIN], Activation::Linear, 0).is_err()
        );
        assert!(NetworkSpec::new(
            2,
            vec![3],
            vec![Activation::sin(0.0)],
            Activation::Linear,
            0
        )
        .is_err());
    }

    #[test]
    fn activation_strings() {
        for s in ["sin", "sin(2)", "sin(0.5)", "tanh", "linear"] {
            let a: Activation = s.parse().unwrap();
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert_eq!(
            "sin(4x)".parse::<Activation>().unwrap(),
            Activation::sin(4.0)
        );
        assert!("relu".parse::<Activation>().is_err());
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let h = 1e-5;
        for act in [Activation::sin(3.0), Activation::Tanh, Activation::Linear] {
            for z in [-1.3, -0.2, 0.0, 0.4, 1.7] {
                let d = act.eval(z);
                for k in 0..3 {
                    let fd = (act.eval(z + h)[k] - act.eval(z - h)[k]) / (2.0 * h);
                    assert!(
                        (fd - d[k + 1]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "{act} k={k} z={z}"
                    );
                }
            }
        }
    }
}

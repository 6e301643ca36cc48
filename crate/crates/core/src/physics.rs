//! Problem definition and PINN residuals for the damped Helmholtz equation
//! split into real and imaginary parts, with sound-hard walls.
//!
//! With `1/k_i^2 = eta/k0^2` the two real equations are
//!
//! ```text
//! lap(p_r)/k0^2 - eta lap(p_i)/k0^2 + p_r = -g_r + eta g_i
//! lap(p_i)/k0^2 + eta lap(p_r)/k0^2 + p_i = -eta g_r - g_i
//! ```
//!
//! which is the complex equation `lap(p) + k0^2/(1 + i eta) p = -k0^2 g`.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::model::{ChannelPlan, EvalWithDerivatives, NetworkSpec, ParameterVector, Tape};
use crate::sampling::SampleSet;

/// Axis-aligned box `[lower, upper]` in 2 or 3 dimensions (metres).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = BoxDomain { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return input("domain lower and upper have different dimensions");
        }
        if !(2..=3).contains(&self.lower.len()) {
            return input(format!(
                "domain must be 2D or 3D, got {}D",
                self.lower.len()
            ));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return input(format!("domain axis {i}: upper must exceed lower"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    /// All `2 * dim` faces, ordered by axis then lower/upper.
    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim())
            .flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }])
            .collect()
    }
}

/// One face of a box, identified by its normal axis and side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn id(&self) -> usize {
        2 * self.axis + usize::from(self.upper)
    }

    /// Sign of the outward normal along `axis`.
    pub fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    pub fn normal(&self, dim: usize) -> Vec<f64> {
        let mut n = vec![0.0; dim];
        n[self.axis] = self.sign();
        n
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = ["x", "y", "z"].get(self.axis).copied().unwrap_or("?");
        write!(f, "{}{}", name, if self.upper { "+" } else { "-" })
    }
}

/// Medium and excitation frequency.
///
/// `eta = c_i^2 / c0^2` (negative for absorption), `nu = f L_ref / c0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default)]
    pub eta: f64,
    pub nu: f64,
    #[serde(default = "one")]
    pub l_ref: f64,
}

fn one() -> f64 {
    1.0
}

impl MediumSpec {
    pub fn new(nu: f64, eta: f64) -> Self {
        MediumSpec {
            c0: 1.0,
            eta,
            nu,
            l_ref: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0) {
            return input("medium.c0 must be positive");
        }
        if !(self.nu > 0.0) {
            return input("medium.nu must be positive");
        }
        if !(self.l_ref > 0.0) {
            return input("medium.l_ref must be positive");
        }
        if !(self.eta.abs() < 1.0) {
            return input("medium.eta must satisfy |eta| < 1");
        }
        Ok(())
    }

    pub fn frequency(&self) -> f64 {
        self.nu * self.c0 / self.l_ref
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency()
    }

    pub fn k0(&self) -> f64 {
        self.omega() / self.c0
    }

    pub fn wavelength(&self) -> f64 {
        self.c0 / self.frequency()
    }

    /// `1/k_i^2 = eta / k0^2`, sign included.
    pub fn inv_ki_squared(&self) -> f64 {
        self.eta / (self.k0() * self.k0())
    }

    /// `k_c^2 = k0^2 / (1 + i eta)`.
    pub fn k_squared_complex(&self) -> Complex64 {
        let k0 = self.k0();
        Complex64::new(k0 * k0, 0.0) / Complex64::new(1.0, self.eta)
    }

    /// Principal square root of `k_c^2`; `Im(k) > 0` for `eta < 0`.
    pub fn k_complex(&self) -> Complex64 {
        self.k_squared_complex().sqrt()
    }
}

/// Source width `s` of the Gaussian envelope, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Sharpness(pub f64);

impl Sharpness {
    pub const INFINITE: Sharpness = Sharpness(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Sharpness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Sharpness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Sharpness {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Sharpness;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a positive number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Sharpness, E> {
                Ok(Sharpness(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Sharpness, E> {
                Ok(Sharpness(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Sharpness, E> {
                Ok(Sharpness(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Sharpness, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => Ok(Sharpness::INFINITE),
                    other => other
                        .parse::<f64>()
                        .map(Sharpness)
                        .map_err(|_| E::custom(format!("invalid sharpness `{v}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Forcing `g_r = 2 prod_j cos(k x_j) exp(-|x - x_s|^2 / (2 s^2))`, `g_i = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub sharpness: Sharpness,
    pub location: Vec<f64>,
    /// Defaults to `k0` of the medium when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine_wavenumber: Option<f64>,
}

impl SourceSpec {
    pub fn new(sharpness: Sharpness, location: Vec<f64>) -> Self {
        SourceSpec {
            sharpness,
            location,
            cosine_wavenumber: None,
        }
    }

    /// The separable one-dimensional factor along `axis` (without the leading 2).
    #[inline]
    pub fn axis_factor(&self, k: f64, axis: usize, x: f64) -> f64 {
        let c = (k * x).cos();
        if self.sharpness.is_infinite() {
            c
        } else {
            let d = x - self.location[axis];
            let s = self.sharpness.0;
            c * (-d * d / (2.0 * s * s)).exp()
        }
    }
}

/// How boundary points are grouped into loss sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcGrouping {
    /// All boundary points form one set.
    #[default]
    SingleSet,
    /// Each face is its own set; the reported term is the mean of per-face means.
    PerFaceSets,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelmholtzProblem {
    pub domain: BoxDomain,
    pub medium: MediumSpec,
    pub source: SourceSpec,
    #[serde(default)]
    pub bc_grouping: BcGrouping,
}

impl HelmholtzProblem {
    pub fn new(
        domain: BoxDomain,
        medium: MediumSpec,
        source: SourceSpec,
        bc_grouping: BcGrouping,
    ) -> Result<Self> {
        let p = HelmholtzProblem {
            domain,
            medium,
            source,
            bc_grouping,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit square or cube with the source at the centre.
    pub fn unit_box(dim: usize, nu: f64, eta: f64, sharpness: Sharpness) -> Self {
        let domain = BoxDomain::unit(dim);
        let location = domain.center();
        HelmholtzProblem {
            domain,
            medium: MediumSpec::new(nu, eta),
            source: SourceSpec::new(sharpness, location),
            bc_grouping: BcGrouping::SingleSet,
        }
    }

    pub fn with_grouping(mut self, g: BcGrouping) -> Self {
        self.bc_grouping = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.medium.validate()?;
        let s = self.source.sharpness.0;
        if !(s > 0.0) {
            return input("source.sharpness must be positive or inf");
        }
        if self.source.location.len() != self.dim() {
            return input(format!(
                "source.location has {} coordinates, domain is {}D",
                self.source.location.len(),
                self.dim()
            ));
        }
        if !self.domain.contains_closed(&self.source.location) {
            return input("source.location lies outside the domain");
        }
        if let Some(k) = self.source.cosine_wavenumber {
            if !k.is_finite() {
                return input("source.cosine_wavenumber must be finite");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Wavenumber of the cosine factors of the source.
    pub fn cosine_wavenumber(&self) -> f64 {
        self.source
            .cosine_wavenumber
            .unwrap_or_else(|| self.medium.k0())
    }

    /// `(g_r, g_i)` at `x`.
    pub fn forcing(&self, x: &[f64]) -> (f64, f64) {
        eval_forcing(&self.source, self.cosine_wavenumber(), x)
    }
}

/// Evaluates the source at `x` with cosine wavenumber `k`.
pub fn eval_forcing(source: &SourceSpec, k: f64, x: &[f64]) -> (f64, f64) {
    let g = 2.0
        * x.iter()
            .enumerate()
            .map(|(j, &xj)| source.axis_factor(k, j, xj))
            .product::<f64>();
    (g, 0.0)
}

/// Weights of the four loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_bc_r: f64,
    pub w_bc_i: f64,
    pub w_pde_r: f64,
    pub w_pde_i: f64,
}

impl LossWeights {
    pub fn new(w_bc_r: f64, w_bc_i: f64, w_pde_r: f64, w_pde_i: f64) -> Result<Self> {
        let w = LossWeights {
            w_bc_r,
            w_bc_i,
            w_pde_r,
            w_pde_i,
        };
        w.validate()?;
        Ok(w)
    }

    /// `[5/k0^2, 1/k0^2; 1, 0.2]` used for the 3D rooms.
    pub fn room_3d(k0: f64) -> Self {
        let k2 = k0 * k0;
        LossWeights {
            w_bc_r: 5.0 / k2,
            w_bc_i: 1.0 / k2,
            w_pde_r: 1.0,
            w_pde_i: 0.2,
        }
    }

    /// `[0.01, 0.0002; 1, 0.02]`, the complex 2D square.
    pub fn square_2d_complex() -> Self {
        LossWeights {
            w_bc_r: 0.01,
            w_bc_i: 0.0002,
            w_pde_r: 1.0,
            w_pde_i: 0.02,
        }
    }

    /// `[0.01; 1]`, the real 2D square (imaginary terms unweighted).
    pub fn square_2d_real() -> Self {
        LossWeights {
            w_bc_r: 0.01,
            w_bc_i: 0.0,
            w_pde_r: 1.0,
            w_pde_i: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_bc_r, self.w_bc_i, self.w_pde_r, self.w_pde_i];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return input("loss weights must be finite and nonnegative");
        }
        if all.iter().all(|&w| w == 0.0) {
            return input("at least one loss weight must be positive");
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        LossWeights {
            w_bc_r: c * self.w_bc_r,
            w_bc_i: c * self.w_bc_i,
            w_pde_r: c * self.w_pde_r,
            w_pde_i: c * self.w_pde_i,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceLoss {
    pub face: Face,
    pub bc_r: f64,
    pub bc_i: f64,
}

/// Mean-squared residuals and their weighted sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pde_r: f64,
    pub pde_i: f64,
    pub bc_r: f64,
    pub bc_i: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_set: Option<Vec<FaceLoss>>,
}

impl LossBreakdown {
    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("pde_r", self.pde_r),
            ("pde_i", self.pde_i),
            ("bc_r", self.bc_r),
            ("bc_i", self.bc_i),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// `(r_r, r_i)` of the split PDE at one point.
pub fn pde_residual(eval: &EvalWithDerivatives, medium: &MediumSpec, g: (f64, f64)) -> (f64, f64) {
    let k0 = medium.k0();
    let inv_k0 = 1.0 / (k0 * k0);
    let eta = medium.eta;
    let [lr, li] = eval.laplacian;
    let [pr, pi] = eval.value;
    let (gr, gi) = g;
    let rr = lr * inv_k0 - eta * li * inv_k0 + pr + gr - eta * gi;
    let ri = li * inv_k0 + eta * lr * inv_k0 + pi + eta * gr + gi;
    (rr, ri)
}

/// `(grad p_r . n, grad p_i . n)`; `normal` must have unit length.
pub fn bc_residual(eval: &EvalWithDerivatives, normal: &[f64]) -> Result<(f64, f64)> {
    if normal.len() != eval.gradient[0].len() {
        return Err(Error::Dimension {
            expected: eval.gradient[0].len(),
            got: normal.len(),
        });
    }
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return input(format!(
            "boundary normal must be a unit vector, |n| = {norm}"
        ));
    }
    let dot = |g: &[f64]| g.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>();
    Ok((dot(&eval.gradient[0]), dot(&eval.gradient[1])))
}

/// Boundary points sharing a normal axis, evaluated in one batch.
struct BoundaryBatch {
    axis: usize,
    points: Array2<f64>,
    sign: Vec<f64>,
    /// Index into `LossContext::faces` per point.
    face: Vec<usize>,
    /// Contribution of one squared residual to the reported BC term.
    weight: Vec<f64>,
}

/// Collocation data prepared once per training run: forcing values at the
/// interior points and the boundary points grouped by normal axis.
pub struct LossContext {
    dim: usize,
    interior: Array2<f64>,
    g_r: Vec<f64>,
    g_i: Vec<f64>,
    boundary: Vec<BoundaryBatch>,
    faces: Vec<(Face, usize)>,
    weights: LossWeights,
    inv_k0_sq: f64,
    eta: f64,
    grouping: BcGrouping,
}

impl LossContext {
    pub fn new(
        problem: &HelmholtzProblem,
        samples: &SampleSet,
        weights: LossWeights,
    ) -> Result<Self> {
        problem.validate()?;
        weights.validate()?;
        let dim = problem.dim();
        if samples.interior.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: samples.interior.ncols(),
            });
        }
        let n_int = samples.interior.nrows();
        let faces: Vec<(Face, usize)> = samples
            .boundary
            .iter()
            .filter(|b| b.points.nrows() > 0)
            .map(|b| (b.face, b.points.nrows()))
            .collect();
        let n_bnd: usize = faces.iter().map(|f| f.1).sum();
        if n_int == 0 || n_bnd == 0 {
            return input("sample set must contain interior and boundary points");
        }

        let mut g_r = Vec::with_capacity(n_int);
        let mut g_i = Vec::with_capacity(n_int);
        for row in samples.interior.rows() {
            let (a, b) = problem.forcing(row.as_slice().expect("contiguous rows"));
            g_r.push(a);
            g_i.push(b);
        }

        let n_faces = faces.len() as f64;
        let mut boundary = Vec::new();
        for axis in 0..dim {
            let mut rows = Vec::new();
            let mut sign = Vec::new();
            let mut face_idx = Vec::new();
            let mut weight = Vec::new();
            for b in samples.boundary.iter().filter(|b| b.face.axis == axis) {
                let Some(fi) = faces.iter().position(|f| f.0 == b.face) else {
                    continue;
                };
                let n = b.points.nrows();
                let w = match problem.bc_grouping {
                    BcGrouping::SingleSet => 1.0 / n_bnd as f64,
                    BcGrouping::PerFaceSets => 1.0 / (n_faces * n as f64),
                };
                for r in b.points.rows() {
                    if r.len() != dim {
                        return Err(Error::Dimension {
                            expected: dim,
                            got: r.len(),
                        });
                    }
                    rows.extend(r.iter().copied());
                    sign.push(b.face.sign());
                    face_idx.push(fi);
                    weight.push(w);
                }
            }
            if sign.is_empty() {
                continue;
            }
            let points = Array2::from_shape_vec((sign.len(), dim), rows).expect("row-major");
            boundary.push(BoundaryBatch {
                axis,
                points,
                sign,
                face: face_idx,
                weight,
            });
        }

        let k0 = problem.medium.k0();
        Ok(LossContext {
            dim,
            interior: samples.interior.clone(),
            g_r,
            g_i,
            boundary,
            faces,
            weights,
            inv_k0_sq: 1.0 / (k0 * k0),
            eta: problem.medium.eta,
            grouping: problem.bc_grouping,
        })
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    pub fn loss(&self, params: &ParameterVector, spec: &NetworkSpec) -> Result<LossBreakdown> {
        self.run(params, spec, false).map(|(l, _)| l)
    }

    /// Loss and its gradient (full parameter length, zero at frozen entries).
    pub fn loss_and_gradient(
        &self,
        params: &ParameterVector,
        spec: &NetworkSpec,
    ) -> Result<(LossBreakdown, Vec<f64>)> {
        self.run(params, spec, true)
            .map(|(l, g)| (l, g.expect("gradient requested")))
    }

    fn run(
        &self,
        params: &ParameterVector,
        spec: &NetworkSpec,
        with_grad: bool,
    ) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        if spec.input_dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: spec.input_dim,
            });
        }
        params.check_against(spec)?;
        let w = self.weights;
        let mut grad = with_grad.then(|| vec![0.0; params.len()]);

        // interior
        let plan = ChannelPlan::full(self.dim);
        let tape = Tape::forward(params, spec, self.interior.view(), plan.clone(), with_grad);
        let b = tape.batch;
        let out = &tape.output;
        let nf = b as f64;
        let (mut pde_r, mut pde_i) = (0.0, 0.0);
        let mut adj = with_grad.then(|| Array2::<f64>::zeros(out.raw_dim()));
        for p in 0..b {
            let (mut lr, mut li) = (0.0, 0.0);
            for k in 0..self.dim {
                let row = plan.second(k) * b + p;
                lr += out[[row, 0]];
                li += out[[row, 1]];
            }
            let (gr, gi) = (self.g_r[p], self.g_i[p]);
            let rr = (lr - self.eta * li) * self.inv_k0_sq + out[[p, 0]] + gr - self.eta * gi;
            let ri = (li + self.eta * lr) * self.inv_k0_sq + out[[p, 1]] + self.eta * gr + gi;
            pde_r += rr * rr;
            pde_i += ri * ri;
            if let Some(adj) = adj.as_mut() {
                let rho_r = w.w_pde_r * 2.0 * rr / nf;
                let rho_i = w.w_pde_i * 2.0 * ri / nf;
                adj[[p, 0]] = rho_r;
                adj[[p, 1]] = rho_i;
                let sr = (rho_r + self.eta * rho_i) * self.inv_k0_sq;
                let si = (rho_i - self.eta * rho_r) * self.inv_k0_sq;
                for k in 0..self.dim {
                    let row = plan.second(k) * b + p;
                    adj[[row, 0]] = sr;
                    adj[[row, 1]] = si;
                }
            }
        }
        pde_r /= nf;
        pde_i /= nf;
        if let (Some(adj), Some(g)) = (adj, grad.as_mut()) {
            tape.backward(params, adj, g);
        }

        // boundary
        let (mut bc_r, mut bc_i) = (0.0, 0.0);
        let mut face_sums = vec![(0.0, 0.0); self.faces.len()];
        for batch in &self.boundary {
            let plan = ChannelPlan::gradient_along(batch.axis);
            let tape = Tape::forward(params, spec, batch.points.view(), plan.clone(), with_grad);
            let b = tape.batch;
            let out = &tape.output;
            let mut adj = with_grad.then(|| Array2::<f64>::zeros(out.raw_dim()));
            let c = plan.first(0);
            for p in 0..b {
                let s = batch.sign[p];
                let rr = s * out[[c * b + p, 0]];
                let ri = s * out[[c * b + p, 1]];
                let wt = batch.weight[p];
                bc_r += wt * rr * rr;
                bc_i += wt * ri * ri;
                let fs = &mut face_sums[batch.face[p]];
                fs.0 += rr * rr;
                fs.1 += ri * ri;
                if let Some(adj) = adj.as_mut() {
                    adj[[c * b + p, 0]] = w.w_bc_r * 2.0 * wt * rr * s;
                    adj[[c * b + p, 1]] = w.w_bc_i * 2.0 * wt * ri * s;
                }
            }
            if let (Some(adj), Some(g)) = (adj, grad.as_mut()) {
                tape.backward(params, adj, g);
            }
        }

        let per_set = (self.grouping == BcGrouping::PerFaceSets).then(|| {
            self.faces
                .iter()
                .zip(&face_sums)
                .map(|(&(face, n), &(r, i))| FaceLoss {
                    face,
                    bc_r: r / n as f64,
                    bc_i: i / n as f64,
                })
                .collect()
        });
        let total = w.w_pde_r * pde_r + w.w_pde_i * pde_i + w.w_bc_r * bc_r + w.w_bc_i * bc_i;
        if let Some(g) = grad.as_mut() {
            g.iter_mut()
                .zip(&params.trainable)
                .filter(|(_, &t)| !t)
                .for_each(|(v, _)| *v = 0.0);
        }
        Ok((
            LossBreakdown {
                pde_r,
                pde_i,
                bc_r,
                bc_i,
                total,
                per_set,
            },
            grad,
        ))
    }
}

pub fn total_loss(
    params: &ParameterVector,
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    LossContext::new(problem, samples, weights)?.loss(params, spec)
}

/// Exact gradient of [`total_loss`] over the parameters; frozen entries are zero.
pub fn loss_gradient(
    params: &ParameterVector,
    spec: &NetworkSpec,
    problem: &HelmholtzProblem,
    samples: &SampleSet,
    weights: LossWeights,
) -> Result<Vec<f64>> {
    LossContext::new(problem, samples, weights)?
        .loss_and_gradient(params, spec)
        .map(|(_, g)| g)
}

/// Helper for residual checks on reference fields given as points.
pub fn pde_residuals_at(
    problem: &HelmholtzProblem,
    points: ArrayView2<'_, f64>,
    eval: impl Fn(&[f64]) -> EvalWithDerivatives,
) -> Vec<(f64, f64)> {
    points
        .rows()
        .into_iter()
        .map(|r| {
            let x = r.to_vec();
            pde_residual(&eval(&x), &problem.medium, problem.forcing(&x))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_glorot, Activation};
    use crate::sampling::sample;
    use approx::assert_relative_eq;

    fn eval_of(value: [f64; 2], lap: [f64; 2], grad: [Vec<f64>; 2]) -> EvalWithDerivatives {
        EvalWithDerivatives {
            value,
            gradient: grad,
            laplacian: lap,
        }
    }

    #[test]
    fn forcing_examples() {
        let mut src = SourceSpec::new(Sharpness::INFINITE, vec![0.5; 3]);
        let k = 2.0 * PI;
        assert_eq!(eval_forcing(&src, k, &[0.0, 0.0, 0.0]), (2.0, 0.0));
        let (g, gi) = eval_forcing(&src, k, &[0.25, 0.5, 0.5]);
        assert!(g.abs() < 1e-15 && gi == 0.0);
        src.sharpness = Sharpness(0.1);
        let (g, _) = eval_forcing(&src, 4.0 * PI, &[0.5, 0.5, 0.5]);
        assert_relative_eq!(g, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn derived_medium_quantities() {
        let m = MediumSpec::new(2.0, -0.04);
        assert_relative_eq!(m.k0(), 4.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(m.wavelength(), 0.5);
        let kc = m.k_squared_complex();
        let back = Complex64::new(1.0, 0.0) / kc;
        assert_relative_eq!(back.re, 1.0 / (m.k0() * m.k0()), max_relative = 1e-14);
        assert_relative_eq!(back.im, m.inv_ki_squared(), max_relative = 1e-14);
        assert!(m.k_complex().im > 0.0);
    }

    #[test]
    fn residual_of_zero_field_and_forcing() {
        let m = MediumSpec::new(1.0, -0.04);
        let e = eval_of([0.0; 2], [0.0; 2], [vec![0.0; 3], vec![0.0; 3]]);
        assert_eq!(pde_residual(&e, &m, (0.0, 0.0)), (0.0, 0.0));
    }

    #[test]
    fn undamped_eigenmode_residual_vanishes() {
        let m = MediumSpec::new(1.0, 0.0);
        let k0 = m.k0();
        let p0 = 0.37;
        let e = eval_of(
            [p0, 0.0],
            [-3.0 * k0 * k0 * p0, 0.0],
            [vec![0.0; 3], vec![0.0; 3]],
        );
        let (rr, ri) = pde_residual(&e, &m, (2.0 * p0, 0.0));
        assert!(rr.abs() < 1e-14 && ri == 0.0);
    }

    #[test]
    fn bc_residual_projection() {
        let e = eval_of([0.0; 2], [0.0; 2], [vec![1.0, 0.0, 0.0], vec![0.0; 3]]);
        assert_eq!(bc_residual(&e, &[0.0, 0.0, 1.0]).unwrap().0, 0.0);
        let e = eval_of(
            [0.0; 2],
            [0.0; 2],
            [vec![0.3, -2.0, 5.0], vec![1.0, 2.0, 3.0]],
        );
        assert_eq!(bc_residual(&e, &[1.0, 0.0, 0.0]).unwrap(), (0.3, 1.0));
        assert!(bc_residual(&e, &[2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_network_loss_reduces_to_forcing() {
        let problem = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness::INFINITE);
        let samples = sample(&problem, 4.0, 7).unwrap();
        let spec = NetworkSpec::uniform(3, 2, 8, Activation::SIN, 0).unwrap();
        let params = ParameterVector::zeros(&spec);
        let w = LossWeights::room_3d(problem.medium.k0());
        let l = total_loss(&params, &spec, &problem, &samples, w).unwrap();
        let eta = problem.medium.eta;
        let n = samples.interior.nrows() as f64;
        let (mut er, mut ei) = (0.0, 0.0);
        for r in samples.interior.rows() {
            let (g, _) = problem.forcing(r.as_slice().unwrap());
            er += g * g;
            ei += (eta * g) * (eta * g);
        }
        assert_relative_eq!(l.pde_r, er / n, max_relative = 1e-14);
        assert_relative_eq!(l.pde_i, ei / n, max_relative = 1e-14);
        assert_eq!(l.bc_r, 0.0);
        assert_eq!(l.bc_i, 0.0);
    }

    #[test]
    fn weight_masking_selects_term() {
        let problem = HelmholtzProblem::unit_box(2, 2.0, -0.04, Sharpness(0.5));
        let samples = sample(&problem, 6.0, 1).unwrap();
        let spec = NetworkSpec::uniform(2, 2, 8, Activation::SIN, 4).unwrap();
        let params = init_glorot(&spec);
        let w = LossWeights::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let l = total_loss(&params, &spec, &problem, &samples, w).unwrap();
        assert_eq!(l.total, l.pde_r);
        let full = LossWeights::square_2d_complex();
        let l = total_loss(&params, &spec, &problem, &samples, full).unwrap();
        let l2 = total_loss(&params, &spec, &problem, &samples, full.scaled(2.0)).unwrap();
        assert_relative_eq!(l2.total, 2.0 * l.total, max_relative = 1e-15);
    }

    #[test]
    fn per_face_sets_match_single_set_for_equal_counts() {
        let single = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness(1.0));
        let per_face = single.clone().with_grouping(BcGrouping::PerFaceSets);
        let samples = sample(&single, 6.0, 3).unwrap();
        let spec = NetworkSpec::uniform(3, 2, 8, Activation::SIN, 2).unwrap();
        let params = init_glorot(&spec);
        let w = LossWeights::room_3d(single.medium.k0());
        let a = total_loss(&params, &spec, &single, &samples, w).unwrap();
        let b = total_loss(&params, &spec, &per_face, &samples, w).unwrap();
        let faces = b.per_set.as_ref().unwrap();
        assert_eq!(faces.len(), 6);
        let mean_r = faces.iter().map(|f| f.bc_r).sum::<f64>() / 6.0;
        assert!((a.bc_r - mean_r).abs() < 1e-12 * (1.0 + a.bc_r));
        assert!((a.bc_r - b.bc_r).abs() < 1e-12 * (1.0 + a.bc_r));
    }

    #[test]
    fn empty_samples_are_rejected() {
        let problem = HelmholtzProblem::unit_box(2, 1.0, 0.0, Sharpness::INFINITE);
        let mut samples = sample(&problem, 4.0, 1).unwrap();
        samples.interior = Array2::zeros((0, 2));
        let spec = NetworkSpec::uniform(2, 1, 4, Activation::SIN, 0).unwrap();
        let params = init_glorot(&spec);
        let w = LossWeights::square_2d_real();
        assert!(total_loss(&params, &spec, &problem, &samples, w).is_err());
    }

    #[test]
    fn real_problem_with_real_network_has_no_imaginary_residual() {
        let problem = HelmholtzProblem::unit_box(2, 1.0, 0.0, Sharpness(0.4));
        let samples = sample(&problem, 6.0, 5).unwrap();
        let spec = NetworkSpec::uniform(2, 2, 8, Activation::SIN, 6).unwrap();
        let mut params = init_glorot(&spec);
        // zero the output row producing p_i
        let out = params.layout[2];
        for j in 0..out.fan_in {
            params.values[out.weight_offset + out.fan_in + j] = 0.0;
        }
        let w = LossWeights::square_2d_complex();
        let l = total_loss(&params, &spec, &problem, &samples, w).unwrap();
        assert_eq!(l.pde_i, 0.0);
        assert_eq!(l.bc_i, 0.0);
        assert!(l.pde_r > 0.0);
    }
}

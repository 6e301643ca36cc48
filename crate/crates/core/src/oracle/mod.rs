//! Reference solutions for the box problem.
//!
//! * [`analytic`]: closed form for the cosine-product source with `s -> inf`.
//! * [`modal`]: expansion in the cosine eigenfunctions of the Neumann Laplacian.
//! * [`galerkin`]: Legendre-Galerkin spectral solver with a Neumann basis,
//!   spectrally accurate for the Gaussian-windowed sources.
//! * [`green`]: free-field Green's function and its convolution with the source.

pub mod analytic;
pub mod galerkin;
pub mod green;
pub mod modal;

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::model::EvalWithDerivatives;

pub use analytic::{analytic_infty, AnalyticSolution};
pub use galerkin::{galerkin_solve, GalerkinSolution};
pub use green::{gf_convolve, greens_function};
pub use modal::{modal_solve, ModalSolution};

/// Complex pressure with its gradient and Laplacian at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub value: Complex64,
    pub gradient: Vec<Complex64>,
    pub laplacian: Complex64,
}

impl FieldSample {
    /// Splits into the real/imaginary layout consumed by the physics residuals.
    pub fn to_eval(&self) -> EvalWithDerivatives {
        EvalWithDerivatives {
            value: [self.value.re, self.value.im],
            gradient: [
                self.gradient.iter().map(|g| g.re).collect(),
                self.gradient.iter().map(|g| g.im).collect(),
            ],
            laplacian: [self.laplacian.re, self.laplacian.im],
        }
    }
}

/// A pressure field that can be sampled pointwise.
pub trait ReferenceField {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Complex64;

    fn sample(&self, x: &[f64]) -> FieldSample;

    fn on_points(&self, points: ArrayView2<'_, f64>) -> FieldOnPoints {
        let vals: Vec<Complex64> = points
            .rows()
            .into_iter()
            .map(|r| self.value(&r.to_vec()))
            .collect();
        FieldOnPoints::from_complex(points.to_owned(), &vals)
    }
}

/// Pressure values at a list of points.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOnPoints {
    pub points: Array2<f64>,
    pub p_r: Vec<f64>,
    pub p_i: Vec<f64>,
}

impl FieldOnPoints {
    pub fn from_complex(points: Array2<f64>, values: &[Complex64]) -> Self {
        assert_eq!(points.nrows(), values.len());
        FieldOnPoints {
            points,
            p_r: values.iter().map(|v| v.re).collect(),
            p_i: values.iter().map(|v| v.im).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_r.is_empty()
    }

    pub fn complex(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.p_r
            .iter()
            .zip(&self.p_i)
            .map(|(&r, &i)| Complex64::new(r, i))
    }

    pub fn is_finite(&self) -> bool {
        self.p_r.iter().chain(&self.p_i).all(|v| v.is_finite())
    }

    /// Rows restricted to `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> FieldOnPoints {
        let d = self.points.ncols();
        let mut pts = Array2::zeros((idx.len(), d));
        for (r, &i) in idx.iter().enumerate() {
            pts.row_mut(r).assign(&self.points.row(i));
        }
        FieldOnPoints {
            points: pts,
            p_r: idx.iter().map(|&i| self.p_r[i]).collect(),
            p_i: idx.iter().map(|&i| self.p_i[i]).collect(),
        }
    }

    /// CSV with header `x,y[,z],p_r,p_i`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let names = ["x", "y", "z"];
        let d = self.points.ncols();
        writeln!(out, "{},p_r,p_i", names[..d].join(","))?;
        for (i, row) in self.points.rows().into_iter().enumerate() {
            for v in row {
                write!(out, "{v:e},")?;
            }
            writeln!(out, "{:e},{:e}", self.p_r[i], self.p_i[i])?;
        }
        Ok(())
    }
}

/// Points of a tensor-product grid; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    pub axes: Vec<Vec<f64>>,
}

impl TensorGrid {
    /// `n` equispaced nodes per axis including both faces.
    pub fn uniform(domain: &crate::physics::BoxDomain, n: usize) -> Self {
        let n = n.max(2);
        TensorGrid {
            axes: (0..domain.dim())
                .map(|i| {
                    let (lo, hi) = (domain.lower[i], domain.upper[i]);
                    (0..n)
                        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                        .collect()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Array2<f64> {
        let d = self.axes.len();
        let mut pts = Array2::zeros((self.len(), d));
        let mut idx = vec![0usize; d];
        for mut row in pts.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.axes[j][idx[j]];
            }
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < self.axes[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        pts
    }
}

/// Values and first/second derivatives of one axis' basis functions at a point.
#[derive(Clone, Debug, Default)]
pub(crate) struct AxisTable {
    pub v: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl AxisTable {
    /// The single constant function used to pad 2D problems to three axes.
    pub fn constant() -> Self {
        AxisTable {
            v: vec![1.0],
            d1: vec![0.0],
            d2: vec![0.0],
        }
    }
}

/// Evaluates `sum_abc coef[a,b,c] phi_a(x) phi_b(y) phi_c(z)` with its
/// gradient and Laplacian. `coef` is row-major with shape `dims`.
pub(crate) fn contract_point(
    coef: &[Complex64],
    dims: [usize; 3],
    t: &[AxisTable; 3],
    dim: usize,
) -> FieldSample {
    let [n0, n1, n2] = dims;
    let zero = Complex64::new(0.0, 0.0);
    let (mut value, mut g0, mut g1, mut g2, mut lap) = (zero, zero, zero, zero, zero);
    for a in 0..n0 {
        let (mut v, mut h1, mut h2, mut l) = (zero, zero, zero, zero);
        for b in 0..n1 {
            let row = &coef[(a * n1 + b) * n2..(a * n1 + b + 1) * n2];
            let (mut sa, mut sb, mut sc) = (zero, zero, zero);
            for (c, &p) in row.iter().enumerate() {
                sa += p * t[2].v[c];
                sb += p * t[2].d1[c];
                sc += p * t[2].d2[c];
            }
            v += sa * t[1].v[b];
            h1 += sa * t[1].d1[b];
            h2 += sb * t[1].v[b];
            l += sa * t[1].d2[b] + sc * t[1].v[b];
        }
        value += v * t[0].v[a];
        g0 += v * t[0].d1[a];
        g1 += h1 * t[0].v[a];
        g2 += h2 * t[0].v[a];
        lap += v * t[0].d2[a] + l * t[0].v[a];
    }
    FieldSample {
        value,
        gradient: [g0, g1, g2][..dim].to_vec(),
        laplacian: lap,
    }
}

/// Value-only evaluation on a tensor grid. `tables[j]` is `n_modes_j x n_points_j`.
pub(crate) fn contract_grid(
    coef: &[Complex64],
    dims: [usize; 3],
    tables: [&Array2<f64>; 3],
) -> Vec<Complex64> {
    use ndarray::{Array3, Ix3};

    fn step(a: Array3<f64>, table: &Array2<f64>) -> Array3<f64> {
        let (x, y, m) = a.dim();
        let flat = a
            .into_shape_with_order((x * y, m))
            .expect("standard layout");
        let out = flat.dot(table);
        let n = table.ncols();
        out.into_shape_with_order((x, y, n))
            .expect("standard layout")
            .permuted_axes([2, 0, 1])
            .as_standard_layout()
            .into_owned()
    }

    let parts: Vec<Array3<f64>> = [|c: &Complex64| c.re, |c: &Complex64| c.im]
        .iter()
        .map(|f| {
            let a = Array3::from_shape_vec(dims, coef.iter().map(f).collect())
                .expect("dims match coefficients")
                .into_dimensionality::<Ix3>()
                .expect("three axes");
            // contract z, then y, then x; each step rotates the result axes
            let a = step(a, tables[2]);
            let a = step(a, tables[1]);
            step(a, tables[0])
        })
        .collect();
    parts[0]
        .iter()
        .zip(parts[1].iter())
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect()
}

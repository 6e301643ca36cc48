use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;

use super::{
    contract_grid, contract_point, AxisTable, FieldOnPoints, FieldSample, ReferenceField,
    TensorGrid,
};
use crate::error::{input, Error, Result};
use crate::physics::HelmholtzProblem;

/// Cut-off for the Legendre coefficients of each source factor, relative to the largest.
const COEF_TOL: f64 = 1e-16;
const MAX_DEGREE: usize = 192;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (t * pn - pm) / (t * t - 1.0);
            let step = pn / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `L_k(t)`, `L_k'(t)`, `L_k''(t)` for `k <= n`.
fn legendre(n: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut d1 = vec![0.0; n + 1];
    let mut d2 = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = t;
        d1[1] = 1.0;
    }
    for k in 1..n {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        d1[k + 1] = d1[k - 1] + (2.0 * kf + 1.0) * p[k];
        d2[k + 1] = d2[k - 1] + (2.0 * kf + 1.0) * d1[k];
    }
    (p, d1, d2)
}

/// Neumann basis on one axis: `phi_k = L_k + b_k L_{k+2}` with `phi_k'(+-1) = 0`.
#[derive(Clone, Debug)]
struct Basis {
    lo: f64,
    len: f64,
    b: Vec<f64>,
}

impl Basis {
    fn new(lo: f64, len: f64, n: usize) -> Self {
        let b = (0..n)
            .map(|k| {
                let k = k as f64;
                -k * (k + 1.0) / ((k + 2.0) * (k + 3.0))
            })
            .collect();
        Basis { lo, len, b }
    }

    fn size(&self) -> usize {
        self.b.len()
    }

    /// Basis values and physical derivatives at `t` in reference coordinates.
    fn eval_ref(&self, t: f64) -> AxisTable {
        let n = self.size();
        let (p, d1, d2) = legendre(n + 1, t);
        let s = 2.0 / self.len;
        let mut out = AxisTable::default();
        for k in 0..n {
            let b = self.b[k];
            out.v.push(p[k] + b * p[k + 2]);
            out.d1.push(s * (d1[k] + b * d1[k + 2]));
            out.d2.push(s * s * (d2[k] + b * d2[k + 2]));
        }
        out
    }

    fn to_ref(&self, x: f64) -> f64 {
        (2.0 * (x - self.lo) / self.len - 1.0).clamp(-1.0, 1.0)
    }

    fn eval(&self, x: f64) -> AxisTable {
        self.eval_ref(self.to_ref(x))
    }
}

/// Legendre-Galerkin solution with a Neumann polynomial basis per axis.
///
/// Spectrally accurate for smooth sources, including Gaussian envelopes with
/// nonzero slope at the walls where cosine expansions converge only algebraically.
#[derive(Clone, Debug)]
pub struct GalerkinSolution {
    pub degrees: Vec<usize>,
    pub problem: HelmholtzProblem,
    bases: Vec<Basis>,
    coefficients: Vec<Complex64>,
}

/// Basis size along `axis` from the decay of the source factor's Legendre series.
fn choose_degree(problem: &HelmholtzProblem, axis: usize) -> usize {
    let lo = problem.domain.lower[axis];
    let len = problem.domain.extent(axis);
    let k = problem.cosine_wavenumber();
    let (t, w) = gauss_legendre(2 * MAX_DEGREE + 64);
    let f: Vec<f64> = t
        .iter()
        .map(|&ti| {
            problem
                .source
                .axis_factor(k, axis, lo + 0.5 * len * (ti + 1.0))
        })
        .collect();
    let mut coef = vec![0.0; MAX_DEGREE + 1];
    for (qi, &ti) in t.iter().enumerate() {
        let (p, _, _) = legendre(MAX_DEGREE, ti);
        for (n, c) in coef.iter_mut().enumerate() {
            *c += w[qi] * f[qi] * p[n];
        }
    }
    for (n, c) in coef.iter_mut().enumerate() {
        *c *= (2 * n + 1) as f64 / 2.0;
    }
    let max = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let last = coef
        .iter()
        .rposition(|c| c.abs() > COEF_TOL * max)
        .unwrap_or(0);
    (last + 16).min(MAX_DEGREE)
}

/// Mass and stiffness matrices of the basis in physical coordinates.
fn matrices(basis: &Basis) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = basis.size();
    let (t, w) = gauss_legendre(n + 4);
    let mut m = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let jac = basis.len / 2.0;
    for (qi, &ti) in t.iter().enumerate() {
        let e = basis.eval_ref(ti);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += w[qi] * jac * e.v[i] * e.v[j];
                s[(i, j)] += w[qi] * jac * e.d1[i] * e.d1[j];
            }
        }
    }
    (m, s)
}

/// Generalized eigenpairs of `S e = lambda M e` normalised to `E^T M E = I`.
fn generalized_eigen(m: DMatrix<f64>, s: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = m.cholesky().ok_or(Error::Singular)?;
    let linv = chol.l().try_inverse().ok_or(Error::Singular)?;
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let e = linv.transpose() * eig.eigenvectors;
    Ok((eig.eigenvalues.iter().copied().collect(), e))
}

/// `int f phi_k` over the axis for the separable source factor.
fn load_vector(problem: &HelmholtzProblem, axis: usize, basis: &Basis) -> Vec<f64> {
    let n = basis.size();
    let (t, w) = gauss_legendre(2 * n + 64);
    let k = problem.cosine_wavenumber();
    let jac = basis.len / 2.0;
    let mut out = vec![0.0; n];
    for (qi, &ti) in t.iter().enumerate() {
        let f = problem
            .source
            .axis_factor(k, axis, basis.lo + jac * (ti + 1.0));
        let e = basis.eval_ref(ti);
        for (o, v) in out.iter_mut().zip(&e.v) {
            *o += w[qi] * jac * f * v;
        }
    }
    out
}

/// Solves the box problem by Galerkin projection with `degrees[j]` basis
/// functions along axis `j` (`None` picks them from the source decay).
pub fn galerkin_solve(
    problem: &HelmholtzProblem,
    degrees: Option<&[usize]>,
) -> Result<GalerkinSolution> {
    problem.validate()?;
    let dim = problem.dim();
    let degrees: Vec<usize> = match degrees {
        Some(d) if d.len() != dim => {
            return Err(Error::Dimension {
                expected: dim,
                got: d.len(),
            })
        }
        Some(d) if d.contains(&0) => return input("basis sizes must be positive"),
        Some(d) => d.to_vec(),
        None => (0..dim).map(|j| choose_degree(problem, j)).collect(),
    };
    let bases: Vec<Basis> = (0..dim)
        .map(|j| {
            Basis::new(
                problem.domain.lower[j],
                problem.domain.extent(j),
                degrees[j],
            )
        })
        .collect();

    let mut lambdas: Vec<Vec<f64>> = Vec::new();
    let mut vecs: Vec<DMatrix<f64>> = Vec::new();
    let mut loads: Vec<Vec<f64>> = Vec::new();
    for (j, basis) in bases.iter().enumerate() {
        let (m, s) = matrices(basis);
        let (lam, e) = generalized_eigen(m, s)?;
        let f = load_vector(problem, j, basis);
        let ft = e.transpose() * nalgebra::DVector::from_vec(f);
        lambdas.push(lam);
        loads.push(ft.iter().copied().collect());
        vecs.push(e);
    }
    for _ in dim..3 {
        lambdas.push(vec![0.0]);
        loads.push(vec![1.0]);
        vecs.push(DMatrix::from_element(1, 1, 1.0));
    }
    let dims = [lambdas[0].len(), lambdas[1].len(), lambdas[2].len()];

    let k0sq = problem.medium.k0().powi(2);
    let kc2 = problem.medium.k_squared_complex();
    let mut v = Vec::with_capacity(dims.iter().product());
    for a in 0..dims[0] {
        for b in 0..dims[1] {
            for c in 0..dims[2] {
                let lam = lambdas[0][a] + lambdas[1][b] + lambdas[2][c];
                let den = lam - kc2;
                if den.norm() <= 1e-12 * k0sq {
                    return Err(Error::Resonance {
                        mode: [a, b, c][..dim].to_vec(),
                        k0_squared: k0sq,
                    });
                }
                v.push(k0sq * 2.0 * loads[0][a] * loads[1][b] * loads[2][c] / den);
            }
        }
    }
    // back to basis coefficients: U = (E0 x E1 x E2) V
    let tables: Vec<Array2<f64>> = vecs
        .iter()
        .map(|e| Array2::from_shape_fn((e.ncols(), e.nrows()), |(i, j)| e[(j, i)]))
        .collect();
    let coefficients = contract_grid(&v, dims, [&tables[0], &tables[1], &tables[2]]);
    Ok(GalerkinSolution {
        degrees,
        problem: problem.clone(),
        bases,
        coefficients,
    })
}

impl GalerkinSolution {
    fn dims(&self) -> [usize; 3] {
        [
            self.degrees[0],
            self.degrees[1],
            self.degrees.get(2).copied().unwrap_or(1),
        ]
    }

    fn table(&self, axis: usize, x: &[f64]) -> AxisTable {
        match self.bases.get(axis) {
            Some(b) => b.eval(x[axis]),
            None => AxisTable::constant(),
        }
    }

    /// Field values on a tensor grid, ordered as [`TensorGrid::points`].
    pub fn on_grid(&self, grid: &TensorGrid) -> Result<FieldOnPoints> {
        let dim = self.problem.dim();
        if grid.axes.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: grid.axes.len(),
            });
        }
        let tables: Vec<Array2<f64>> = (0..3)
            .map(|j| match self.bases.get(j) {
                None => Array2::ones((1, 1)),
                Some(b) => {
                    let cols: Vec<AxisTable> = grid.axes[j].iter().map(|&x| b.eval(x)).collect();
                    Array2::from_shape_fn((b.size(), cols.len()), |(k, n)| cols[n].v[k])
                }
            })
            .collect();
        let vals = contract_grid(
            &self.coefficients,
            self.dims(),
            [&tables[0], &tables[1], &tables[2]],
        );
        Ok(FieldOnPoints::from_complex(grid.points(), &vals))
    }
}

impl ReferenceField for GalerkinSolution {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        self.sample(x).value
    }

    fn sample(&self, x: &[f64]) -> FieldSample {
        let t = [self.table(0, x), self.table(1, x), self.table(2, x)];
        contract_point(&self.coefficients, self.dims(), &t, self.problem.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{analytic_infty, modal_solve};
    use crate::physics::{bc_residual, pde_residual, Sharpness};
    use rand::{Rng, SeedableRng};

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((i - 2.0 / 23.0).abs() < 1e-14);
    }

    #[test]
    fn basis_has_zero_slope_at_the_ends() {
        let b = Basis::new(0.0, 2.0, 20);
        for t in [-1.0, 1.0] {
            let e = b.eval_ref(t);
            assert!(e.d1.iter().all(|d| d.abs() < 1e-10), "{:?}", e.d1);
        }
    }

    #[test]
    fn matches_closed_form() {
        let p = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness::INFINITE);
        let g = galerkin_solve(&p, None).unwrap();
        let a = analytic_infty(&p).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.77, 0.5, 0.01]] {
            assert!((g.value(&x) - a.value(&x)).norm() < 1e-10);
        }
    }

    #[test]
    fn residuals_vanish_for_gaussian_sources() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (dim, s) in [(3, 1.0), (3, 0.1), (2, 1.0)] {
            let p = HelmholtzProblem::unit_box(dim, 2.0, -0.04, Sharpness(s));
            let g = galerkin_solve(&p, None).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                let (rr, ri) = pde_residual(&g.sample(&x).to_eval(), &p.medium, p.forcing(&x));
                worst = worst.max(rr.abs()).max(ri.abs());
            }
            assert!(worst < 1e-9, "dim {dim} s {s}: {worst} at {:?}", g.degrees);
            for face in p.domain.faces() {
                let mut x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                x[face.axis] = if face.upper { 1.0 } else { 0.0 };
                let (a, b) = bc_residual(&g.sample(&x).to_eval(), &face.normal(dim)).unwrap();
                assert!(a.abs() < 1e-9 && b.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn agrees_with_modal_expansion() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        let g = galerkin_solve(&p, None).unwrap();
        let m = modal_solve(&p, None).unwrap();
        let grid = TensorGrid::uniform(&p.domain, 9);
        let (a, b) = (g.on_grid(&grid).unwrap(), m.on_grid(&grid).unwrap());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..a.len() {
            num += (a.p_r[i] - b.p_r[i]).powi(2) + (a.p_i[i] - b.p_i[i]).powi(2);
            den += a.p_r[i].powi(2) + a.p_i[i].powi(2);
        }
        assert!((num / den).sqrt() < 1e-6, "{}", (num / den).sqrt());
    }
}

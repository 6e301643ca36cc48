use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    contract_grid, contract_point, AxisTable, FieldOnPoints, FieldSample, ReferenceField,
    TensorGrid,
};
use crate::error::{input, Error, Result};
use crate::physics::HelmholtzProblem;

/// Relative tolerance on the weighted one-dimensional coefficient tail used
/// to pick mode counts.
const TAIL_TOL: f64 = 1e-7;

/// Cosine-mode expansion of the box solution.
///
/// `coefficients` is row-major over `(m_0, m_1, m_2)`; 2D problems carry a
/// trailing axis with the single constant mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalSolution {
    pub max_modes: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    pub problem: HelmholtzProblem,
}

fn padded(modes: &[usize]) -> [usize; 3] {
    [modes[0], modes[1], modes.get(2).copied().unwrap_or(1)]
}

/// Midpoint-rule count per axis: at least 8 points per smallest length scale.
fn quadrature_points(problem: &HelmholtzProblem, axis: usize, m: usize) -> usize {
    let len = problem.domain.extent(axis);
    let k = problem.cosine_wavenumber().abs();
    let mut scale = if k > 0.0 { 2.0 * PI / k } else { f64::INFINITY };
    if !problem.source.sharpness.is_infinite() {
        scale = scale.min(PI * problem.source.sharpness.0);
    }
    let by_scale = if scale.is_finite() {
        (8.0 * len / scale).ceil() as usize
    } else {
        0
    };
    by_scale.max(16 * m).max(4096)
}

/// Cosine coefficients of one separable source factor, normalised so that
/// `f(x) = sum_m c_m cos(m pi (x - lo) / L)`.
fn project_axis(problem: &HelmholtzProblem, axis: usize, m: usize) -> Vec<f64> {
    let lo = problem.domain.lower[axis];
    let len = problem.domain.extent(axis);
    let q = quadrature_points(problem, axis, m);
    let h = len / q as f64;
    let k = problem.cosine_wavenumber();
    let samples: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (t, problem.source.axis_factor(k, axis, lo + t))
        })
        .collect();
    (0..m)
        .map(|mi| {
            let w = mi as f64 * PI / len;
            let s: f64 = samples.iter().map(|&(t, f)| f * (w * t).cos()).sum();
            let norm = if mi == 0 { len } else { len / 2.0 };
            s * h / norm
        })
        .collect()
}

/// Picks per-axis mode counts from the decay of the one-dimensional source
/// coefficients, weighted by the inverse operator `1 / (1 + lambda / k0^2)`.
pub fn default_modes(problem: &HelmholtzProblem) -> Vec<usize> {
    let cap = if problem.dim() == 3 { 160 } else { 512 };
    let k0sq = problem.medium.k0().powi(2);
    (0..problem.dim())
        .map(|axis| {
            let len = problem.domain.extent(axis);
            let c = project_axis(problem, axis, cap);
            let w2: Vec<f64> = c
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let lam = (m as f64 * PI / len).powi(2);
                    (v / (1.0 + lam / k0sq)).powi(2)
                })
                .collect();
            let total: f64 = w2.iter().sum();
            if total == 0.0 {
                return 8;
            }
            let mut tail = total;
            let mut chosen = cap;
            for (m, &v) in w2.iter().enumerate() {
                if tail <= TAIL_TOL * TAIL_TOL * total {
                    chosen = m;
                    break;
                }
                tail -= v;
            }
            if chosen == cap {
                log::warn!("axis {axis}: mode tail not below tolerance at cap {cap}");
                cap
            } else {
                (chosen + 2).max(8).min(cap)
            }
        })
        .collect()
}

/// Solves the box problem in the Neumann eigenbasis with `modes[j]` cosines
/// along axis `j` (`None` picks them from the source decay).
pub fn modal_solve(problem: &HelmholtzProblem, modes: Option<&[usize]>) -> Result<ModalSolution> {
    problem.validate()?;
    let dim = problem.dim();
    let modes: Vec<usize> = match modes {
        Some(m) if m.len() != dim => {
            return Err(Error::Dimension {
                expected: dim,
                got: m.len(),
            })
        }
        Some(m) if m.contains(&0) => return input("mode counts must be positive"),
        Some(m) => m.to_vec(),
        None => default_modes(problem),
    };
    let dims = padded(&modes);
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            if j < dim {
                project_axis(problem, j, dims[j])
            } else {
                vec![1.0]
            }
        })
        .collect();
    let lambdas: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            (0..dims[j])
                .map(|m| {
                    if j < dim {
                        (m as f64 * PI / problem.domain.extent(j)).powi(2)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let k0sq = problem.medium.k0().powi(2);
    let kc2 = problem.medium.k_squared_complex();
    let undamped = problem.medium.eta == 0.0;
    let mut coefficients = Vec::with_capacity(dims.iter().product());
    for a in 0..dims[0] {
        for b in 0..dims[1] {
            let gab = 2.0 * axes[0][a] * axes[1][b];
            let lab = lambdas[0][a] + lambdas[1][b];
            for c in 0..dims[2] {
                let lam = lab + lambdas[2][c];
                if undamped && (lam - k0sq).abs() <= 1e-10 * k0sq {
                    return Err(Error::Resonance {
                        mode: [a, b, c][..dim].to_vec(),
                        k0_squared: k0sq,
                    });
                }
                let g = gab * axes[2][c];
                coefficients.push(k0sq * g / (lam - kc2));
            }
        }
    }
    Ok(ModalSolution {
        max_modes: modes,
        coefficients,
        problem: problem.clone(),
    })
}

impl ModalSolution {
    fn dims(&self) -> [usize; 3] {
        padded(&self.max_modes)
    }

    fn table(&self, axis: usize, x: f64) -> AxisTable {
        let dims = self.dims();
        if axis >= self.problem.dim() {
            return AxisTable::constant();
        }
        let lo = self.problem.domain.lower[axis];
        let len = self.problem.domain.extent(axis);
        let mut t = AxisTable::default();
        for m in 0..dims[axis] {
            let w = m as f64 * PI / len;
            let (s, c) = (w * (x - lo)).sin_cos();
            t.v.push(c);
            t.d1.push(-w * s);
            t.d2.push(-w * w * c);
        }
        t
    }

    /// Fraction of `sum |p_m|^2` carried by modes with some index at its maximum.
    pub fn last_shell_energy_fraction(&self) -> f64 {
        let dims = self.dims();
        let dim = self.problem.dim();
        let mut total = 0.0;
        let mut shell = 0.0;
        for (i, p) in self.coefficients.iter().enumerate() {
            let idx = [
                i / (dims[1] * dims[2]),
                (i / dims[2]) % dims[1],
                i % dims[2],
            ];
            let e = p.norm_sqr();
            total += e;
            if (0..dim).any(|j| dims[j] > 1 && idx[j] == dims[j] - 1) {
                shell += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            shell / total
        }
    }

    /// Mode multi-indices whose coefficient exceeds `rel` times the largest.
    pub fn active_modes(&self, rel: f64) -> Vec<Vec<usize>> {
        let dims = self.dims();
        let max = self
            .coefficients
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max);
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, p)| max > 0.0 && p.norm() > rel * max)
            .map(|(i, _)| {
                [
                    i / (dims[1] * dims[2]),
                    (i / dims[2]) % dims[1],
                    i % dims[2],
                ][..self.problem.dim()]
                    .to_vec()
            })
            .collect()
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
        let dims = self.dims();
        let tables: Vec<Array2<f64>> = (0..3)
            .map(|j| {
                if j >= dim {
                    return Array2::ones((1, 1));
                }
                let lo = self.problem.domain.lower[j];
                let len = self.problem.domain.extent(j);
                Array2::from_shape_fn((dims[j], grid.axes[j].len()), |(m, n)| {
                    (m as f64 * PI / len * (grid.axes[j][n] - lo)).cos()
                })
            })
            .collect();
        let vals = contract_grid(
            &self.coefficients,
            dims,
            [&tables[0], &tables[1], &tables[2]],
        );
        Ok(FieldOnPoints::from_complex(grid.points(), &vals))
    }

    /// JSON checkpoint: problem, mode table and coefficients.
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load<R: Read>(src: R) -> Result<Self> {
        let s: ModalSolution =
            serde_json::from_reader(src).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let expected: usize = padded(&s.max_modes).iter().product();
        if s.max_modes.len() != s.problem.dim() || s.coefficients.len() != expected {
            return Err(Error::Checkpoint(format!(
                "mode table {:?} does not match {} coefficients",
                s.max_modes,
                s.coefficients.len()
            )));
        }
        Ok(s)
    }
}

impl ReferenceField for ModalSolution {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        self.sample(x).value
    }

    fn sample(&self, x: &[f64]) -> FieldSample {
        let t = [
            self.table(0, x[0]),
            self.table(1, x[1]),
            self.table(2, x.get(2).copied().unwrap_or(0.0)),
        ];
        contract_point(&self.coefficients, self.dims(), &t, self.problem.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::analytic_infty;
    use crate::physics::Sharpness;

    fn rel_change(a: &FieldOnPoints, b: &FieldOnPoints) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..a.len() {
            num += (a.p_r[i] - b.p_r[i]).powi(2) + (a.p_i[i] - b.p_i[i]).powi(2);
            den += b.p_r[i].powi(2) + b.p_i[i].powi(2);
        }
        (num / den).sqrt()
    }

    #[test]
    fn single_active_mode_for_cosine_source() {
        let p = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness::INFINITE);
        let sol = modal_solve(&p, None).unwrap();
        assert_eq!(sol.active_modes(1e-9), vec![vec![2, 2, 2]]);
        let exact = analytic_infty(&p).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.77, 0.5, 0.01], [1.0, 0.0, 0.62]] {
            assert!((sol.value(&x) - exact.value(&x)).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(0.5));
        let a = modal_solve(&p, Some(&[6, 6, 6])).unwrap();
        let z = ModalSolution {
            coefficients: vec![Complex64::new(0.0, 0.0); a.coefficients.len()],
            ..a
        };
        let s = z.sample(&[0.3, 0.3, 0.3]);
        assert_eq!(s.value, Complex64::new(0.0, 0.0));
        assert_eq!(s.laplacian, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn resonance_is_reported() {
        let p = HelmholtzProblem::unit_box(3, 1.0, 0.0, Sharpness(1.0));
        match modal_solve(&p, Some(&[4, 4, 4])) {
            Err(Error::Resonance { mode, .. }) => {
                let lam: usize = mode.iter().map(|m| m * m).sum();
                assert_eq!(lam, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_matches_pointwise() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        let sol = modal_solve(&p, Some(&[10, 9, 8])).unwrap();
        let grid = TensorGrid::uniform(&p.domain, 5);
        let f = sol.on_grid(&grid).unwrap();
        for (i, r) in f.points.rows().into_iter().enumerate() {
            let v = sol.value(&r.to_vec());
            assert!((v.re - f.p_r[i]).abs() < 1e-12 && (v.im - f.p_i[i]).abs() < 1e-12);
        }
        let p2 = HelmholtzProblem::unit_box(2, 2.0, -0.04, Sharpness(1.0));
        let sol = modal_solve(&p2, Some(&[12, 7])).unwrap();
        let f = sol.on_grid(&TensorGrid::uniform(&p2.domain, 6)).unwrap();
        for (i, r) in f.points.rows().into_iter().enumerate() {
            assert!((sol.value(&r.to_vec()).re - f.p_r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn self_convergence_under_doubling() {
        for s in [Sharpness::INFINITE, Sharpness(1.0), Sharpness(0.1)] {
            let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, s);
            let a = modal_solve(&p, None).unwrap();
            let doubled: Vec<usize> = a.max_modes.iter().map(|m| 2 * m).collect();
            let b = modal_solve(&p, Some(&doubled)).unwrap();
            let grid = TensorGrid::uniform(&p.domain, 9);
            let change = rel_change(&a.on_grid(&grid).unwrap(), &b.on_grid(&grid).unwrap());
            assert!(change < 1e-6, "{s}: {change} at {:?}", a.max_modes);
            assert!(a.last_shell_energy_fraction() < 1e-8);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = HelmholtzProblem::unit_box(2, 2.0, -0.04, Sharpness(1.0));
        let sol = modal_solve(&p, Some(&[5, 4])).unwrap();
        let mut buf = Vec::new();
        sol.save(&mut buf).unwrap();
        assert_eq!(ModalSolution::load(buf.as_slice()).unwrap(), sol);
        let mut bad = sol.clone();
        bad.coefficients.pop();
        let mut buf = Vec::new();
        bad.save(&mut buf).unwrap();
        assert!(ModalSolution::load(buf.as_slice()).is_err());
    }
}

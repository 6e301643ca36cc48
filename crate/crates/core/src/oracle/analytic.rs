use std::f64::consts::PI;

use num_complex::Complex64;

use super::{FieldSample, ReferenceField};
use crate::error::{Error, Result};
use crate::physics::HelmholtzProblem;

/// `p = A prod_j cos(k0 x_j)` for the cosine-product source without envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSolution {
    pub amplitude: Complex64,
    pub k0: f64,
    pub dim: usize,
}

/// Complex amplitude of the closed-form solution in `dim` dimensions.
///
/// Substituting `p = A p0` with `lap p0 = -dim k0^2 p0` and `g = 2 p0` gives
/// `A = 2 (1 + i eta) / (dim (1 + i eta) - 1)`; for `dim = 3` this is
/// `((4 + 6 eta^2) - 2 i eta) / (4 + 9 eta^2)`.
pub fn amplitude(dim: usize, eta: f64) -> Complex64 {
    let one_i_eta = Complex64::new(1.0, eta);
    2.0 * one_i_eta / (dim as f64 * one_i_eta - 1.0)
}

fn is_integer(v: f64) -> bool {
    (v - v.round()).abs() < 1e-9 * (1.0 + v.abs())
}

/// Closed-form solution for `s = inf`. Requires every face to sit on an
/// extremum of `cos(k0 x)`, i.e. `k0 x / pi` integral at each face coordinate.
pub fn analytic_infty(problem: &HelmholtzProblem) -> Result<AnalyticSolution> {
    if !problem.source.sharpness.is_infinite() {
        return Err(Error::Precondition(format!(
            "closed-form solution needs an infinite source sharpness, got {}",
            problem.source.sharpness
        )));
    }
    let k0 = problem.medium.k0();
    let k = problem.cosine_wavenumber();
    if (k - k0).abs() > 1e-12 * k0 {
        return Err(Error::Precondition(format!(
            "cosine wavenumber {k} differs from k0 = {k0}"
        )));
    }
    for axis in 0..problem.dim() {
        for (side, x) in [
            ("lower", problem.domain.lower[axis]),
            ("upper", problem.domain.upper[axis]),
        ] {
            if !is_integer(k0 * x / PI) {
                return Err(Error::Precondition(format!(
                    "axis {axis}: k0 * {side} / pi = {} is not an integer, the cosine \
                     source does not satisfy the Neumann condition there",
                    k0 * x / PI
                )));
            }
        }
    }
    Ok(AnalyticSolution {
        amplitude: amplitude(problem.dim(), problem.medium.eta),
        k0,
        dim: problem.dim(),
    })
}

impl ReferenceField for AnalyticSolution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        self.amplitude * x.iter().map(|&v| (self.k0 * v).cos()).product::<f64>()
    }

    fn sample(&self, x: &[f64]) -> FieldSample {
        let k = self.k0;
        let (s, c): (Vec<f64>, Vec<f64>) = x.iter().map(|&v| (k * v).sin_cos()).unzip();
        let p0: f64 = c.iter().product();
        let gradient = (0..x.len())
            .map(|j| {
                let others: f64 = c
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, v)| v)
                    .product();
                self.amplitude * (-k * s[j] * others)
            })
            .collect();
        FieldSample {
            value: self.amplitude * p0,
            gradient,
            laplacian: self.amplitude * (-(x.len() as f64) * k * k * p0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{bc_residual, pde_residual, BoxDomain, Sharpness};
    use approx::assert_relative_eq;

    #[test]
    fn undamped_limit_is_the_bare_mode() {
        assert_eq!(amplitude(3, 0.0), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn damped_amplitude_matches_rational_form() {
        let eta = -0.04f64;
        let a = amplitude(3, eta);
        let den = 4.0 + 9.0 * eta * eta;
        assert_relative_eq!(a.re, (4.0 + 6.0 * eta * eta) / den, max_relative = 1e-15);
        assert_relative_eq!(a.im, -2.0 * eta / den, max_relative = 1e-15);
        assert!((a.re - 0.998804).abs() < 5e-7);
        assert!((a.im - 0.019928).abs() < 5e-7);
        // small-eta approximation 1 - 3 eta^2 / 4
        assert!((a.re - (1.0 - 0.75 * eta * eta)).abs() < 5e-5);
    }

    #[test]
    fn residuals_vanish() {
        for (dim, nu) in [(3, 1.0), (3, 2.0), (2, 2.0)] {
            let p = HelmholtzProblem::unit_box(dim, nu, -0.04, Sharpness::INFINITE);
            let sol = analytic_infty(&p).unwrap();
            for x in [[0.13, 0.71, 0.42], [0.5, 0.5, 0.5], [0.99, 0.01, 0.3]] {
                let x = &x[..dim];
                let e = sol.sample(x).to_eval();
                let (rr, ri) = pde_residual(&e, &p.medium, p.forcing(x));
                assert!(rr.abs() < 1e-12 && ri.abs() < 1e-12, "{rr} {ri}");
            }
            for face in p.domain.faces() {
                let mut x = vec![0.37; dim];
                x[face.axis] = if face.upper { 1.0 } else { 0.0 };
                let e = sol.sample(&x).to_eval();
                let (a, b) = bc_residual(&e, &face.normal(dim)).unwrap();
                assert!(a.abs() < 1e-10 && b.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn preconditions_name_the_axis() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        assert!(matches!(analytic_infty(&p), Err(Error::Precondition(_))));
        let mut p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness::INFINITE);
        p.domain = BoxDomain::new(vec![0.0; 3], vec![1.3, 1.0, 0.7]).unwrap();
        p.source.location = p.domain.center();
        match analytic_infty(&p) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("axis 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

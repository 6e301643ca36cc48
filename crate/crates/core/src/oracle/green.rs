use std::f64::consts::PI;

use ndarray::ArrayView2;
use num_complex::Complex64;

use super::FieldOnPoints;
use crate::error::{input, Error, Result};
use crate::physics::HelmholtzProblem;

/// Free-field Green's function `exp(i k r) / (4 pi r)` in 3D.
pub fn greens_function(k: Complex64, x: &[f64], x0: &[f64]) -> Result<Complex64> {
    if x.len() != 3 || x0.len() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: x.len().min(x0.len()),
        });
    }
    let r = x
        .iter()
        .zip(x0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if r == 0.0 {
        return Err(Error::Singular);
    }
    Ok(kernel(k, r))
}

#[inline]
fn kernel(k: Complex64, r: f64) -> Complex64 {
    let (s, c) = (k.re * r).sin_cos();
    Complex64::new(c, s) * ((-k.im * r).exp() / (4.0 * PI * r))
}

/// `p(x) = k0^2 sum_c G(x, x_c) g(x_c) dV` over a uniform cell-centre grid,
/// skipping the cell that contains the query point.
///
/// The `k0^2` factor matches the right-hand side `-k0^2 g` of the box problem,
/// so the result is directly comparable with the modal field.
pub fn gf_convolve(
    problem: &HelmholtzProblem,
    grid_n: &[usize],
    query: ArrayView2<'_, f64>,
) -> Result<FieldOnPoints> {
    problem.validate()?;
    if problem.dim() != 3 {
        return input("the Green's-function convolution is only available in 3D");
    }
    if grid_n.len() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: grid_n.len(),
        });
    }
    if grid_n.iter().any(|&n| n < 8) {
        return input(format!(
            "grid_n must be at least 8 per axis, got {grid_n:?}"
        ));
    }
    if query.ncols() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: query.ncols(),
        });
    }
    let dom = &problem.domain;
    let h: Vec<f64> = (0..3).map(|j| dom.extent(j) / grid_n[j] as f64).collect();
    let dv = h[0] * h[1] * h[2];
    let k = problem.medium.k_complex();
    let k0sq = problem.medium.k0().powi(2);

    let mut cells = Vec::with_capacity(grid_n.iter().product());
    for a in 0..grid_n[0] {
        for b in 0..grid_n[1] {
            for c in 0..grid_n[2] {
                let x = [
                    dom.lower[0] + (a as f64 + 0.5) * h[0],
                    dom.lower[1] + (b as f64 + 0.5) * h[1],
                    dom.lower[2] + (c as f64 + 0.5) * h[2],
                ];
                let g = problem.forcing(&x).0;
                cells.push((x, g, [a, b, c]));
            }
        }
    }
    let cell_of = |x: f64, j: usize| -> usize {
        let i = ((x - dom.lower[j]) / h[j]).floor();
        (i.max(0.0) as usize).min(grid_n[j] - 1)
    };

    let values: Vec<Complex64> = query
        .rows()
        .into_iter()
        .map(|q| {
            let own = [cell_of(q[0], 0), cell_of(q[1], 1), cell_of(q[2], 2)];
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, g, idx) in &cells {
                if *idx == own || *g == 0.0 {
                    continue;
                }
                let r =
                    ((q[0] - x[0]).powi(2) + (q[1] - x[1]).powi(2) + (q[2] - x[2]).powi(2)).sqrt();
                acc += kernel(k, r) * *g;
            }
            acc * (k0sq * dv)
        })
        .collect();
    Ok(FieldOnPoints::from_complex(query.to_owned(), &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::Sharpness;
    use ndarray::array;

    #[test]
    fn unit_distance_has_unit_phase_modulus() {
        let g = greens_function(Complex64::new(3.0, 0.0), &[0.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert!((g.norm() - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn laplace_limit_is_real() {
        let g = greens_function(Complex64::new(0.0, 0.0), &[0.0; 3], &[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(g, Complex64::new(1.0 / (8.0 * PI), 0.0));
    }

    #[test]
    fn damping_decays() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        let k = p.medium.k_complex();
        assert!(k.re > 0.0 && k.im > 0.0);
        let g = greens_function(k, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        assert!(g.norm() < 1.0 / (4.0 * PI));
    }

    #[test]
    fn coincident_points_and_2d_rejected() {
        assert!(matches!(
            greens_function(Complex64::new(1.0, 0.0), &[0.5; 3], &[0.5; 3]),
            Err(Error::Singular)
        ));
        assert!(greens_function(Complex64::new(1.0, 0.0), &[0.5; 2], &[0.1; 2]).is_err());
        let p = HelmholtzProblem::unit_box(2, 2.0, -0.04, Sharpness(1.0));
        assert!(gf_convolve(&p, &[8, 8], array![[0.1, 0.2]].view()).is_err());
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        assert!(gf_convolve(&p, &[8, 8, 7], array![[0.1, 0.2, 0.3]].view()).is_err());
    }

    #[test]
    fn mirror_symmetry_about_the_centre() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
        let q = array![[0.21, 0.33, 0.47], [0.79, 0.67, 0.53], [0.21, 0.67, 0.47]];
        let f = gf_convolve(&p, &[10, 10, 10], q.view()).unwrap();
        for i in 1..3 {
            assert!((f.p_r[0] - f.p_r[i]).abs() < 1e-12 && (f.p_i[0] - f.p_i[i]).abs() < 1e-12);
        }
    }
}

//! Seeded collocation points sized by points per wavelength.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::physics::{Face, HelmholtzProblem};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub per_axis: Vec<usize>,
    pub n_interior: usize,
    pub n_boundary: usize,
}

impl SampleCounts {
    /// Points on `face`: product of the counts along the tangential axes.
    pub fn on_face(&self, face: Face) -> usize {
        self.per_axis
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != face.axis)
            .map(|(_, &n)| n)
            .product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFace {
    pub face: Face,
    pub points: Array2<f64>,
    pub normal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub interior: Array2<f64>,
    pub boundary: Vec<BoundaryFace>,
    pub seed: u64,
    pub ppw: f64,
    pub counts: SampleCounts,
}

/// `n_i = max(2, round(ppw * L_i / lambda))` per axis.
pub fn count_points(ppw: f64, problem: &HelmholtzProblem) -> Result<SampleCounts> {
    if !(ppw > 0.0) || !ppw.is_finite() {
        return input(format!("points per wavelength must be positive, got {ppw}"));
    }
    let lambda = problem.medium.wavelength();
    let per_axis: Vec<usize> = (0..problem.dim())
        .map(|i| ((ppw * problem.domain.extent(i) / lambda).round() as usize).max(2))
        .collect();
    let n_interior = per_axis.iter().product();
    let mut counts = SampleCounts {
        per_axis,
        n_interior,
        n_boundary: 0,
    };
    counts.n_boundary = problem
        .domain
        .faces()
        .into_iter()
        .map(|f| counts.on_face(f))
        .sum();
    Ok(counts)
}

/// Uniform in the open interval `(lo, hi)`.
fn open_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let u: f64 = rng.gen();
        let v = lo + u * (hi - lo);
        if v > lo && v < hi {
            return v;
        }
    }
}

/// Draws interior points, then each face in [`crate::physics::BoxDomain::faces`] order.
pub fn sample(problem: &HelmholtzProblem, ppw: f64, seed: u64) -> Result<SampleSet> {
    problem.validate()?;
    let counts = count_points(ppw, problem)?;
    let dom = &problem.domain;
    let d = dom.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut interior = Array2::<f64>::zeros((counts.n_interior, d));
    for mut row in interior.rows_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = open_uniform(&mut rng, dom.lower[i], dom.upper[i]);
        }
    }

    let boundary = dom
        .faces()
        .into_iter()
        .map(|face| {
            let n = counts.on_face(face);
            let mut pts = Array2::<f64>::zeros((n, d));
            let fixed = if face.upper {
                dom.upper[face.axis]
            } else {
                dom.lower[face.axis]
            };
            for mut row in pts.rows_mut() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = if i == face.axis {
                        fixed
                    } else {
                        open_uniform(&mut rng, dom.lower[i], dom.upper[i])
                    };
                }
            }
            BoundaryFace {
                face,
                points: pts,
                normal: face.normal(d),
            }
        })
        .collect();

    Ok(SampleSet {
        interior,
        boundary,
        seed,
        ppw,
        counts,
    })
}

/// Plain-text point list: `kind face x y [z] nx ny [nz]`, one point per line.
pub fn write_points<W: Write>(samples: &SampleSet, mut out: W) -> std::io::Result<()> {
    let d = samples.interior.ncols();
    writeln!(
        out,
        "# seed={} ppw={} n_interior={} n_boundary={}",
        samples.seed, samples.ppw, samples.counts.n_interior, samples.counts.n_boundary
    )?;
    let zeros = vec![0.0; d];
    for r in samples.interior.rows() {
        write!(out, "interior -")?;
        for v in r.iter().chain(&zeros) {
            write!(out, " {v:e}")?;
        }
        writeln!(out)?;
    }
    for b in &samples.boundary {
        for r in b.points.rows() {
            write!(out, "boundary {}", b.face)?;
            for v in r.iter().chain(&b.normal) {
                write!(out, " {v:e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{BoxDomain, Sharpness};
    use proptest::prelude::*;

    #[test]
    fn counts_unit_cube() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness::INFINITE);
        let c = count_points(10.0, &p).unwrap();
        assert_eq!(c.per_axis, vec![20, 20, 20]);
        assert_eq!((c.n_interior, c.n_boundary), (8000, 2400));
        let p = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness::INFINITE);
        let c = count_points(6.0, &p).unwrap();
        assert_eq!((c.per_axis[0], c.n_interior, c.n_boundary), (6, 216, 216));
    }

    #[test]
    fn counts_rectangular_room() {
        let mut p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(0.1));
        p.domain = BoxDomain::new(vec![0.0; 3], vec![1.3, 1.0, 0.7]).unwrap();
        p.source.location = p.domain.center();
        let c = count_points(6.0, &p).unwrap();
        assert_eq!(c.per_axis, vec![16, 12, 8]);
        assert_eq!(c.n_boundary, 2 * (12 * 8 + 16 * 8 + 16 * 12));
    }

    #[test]
    fn counts_square_boundary_is_four_n() {
        let p = HelmholtzProblem::unit_box(2, 2.0, -0.04, Sharpness::INFINITE);
        let c = count_points(10.0, &p).unwrap();
        assert_eq!((c.n_interior, c.n_boundary), (400, 80));
    }

    #[test]
    fn counts_clamped_to_two() {
        let p = HelmholtzProblem::unit_box(2, 1.0, 0.0, Sharpness::INFINITE);
        assert_eq!(count_points(0.1, &p).unwrap().per_axis, vec![2, 2]);
        assert!(count_points(0.0, &p).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_contained() {
        let p = HelmholtzProblem::unit_box(3, 1.0, -0.04, Sharpness(1.0));
        let a = sample(&p, 6.0, 42).unwrap();
        assert_eq!(a, sample(&p, 6.0, 42).unwrap());
        assert_ne!(a.interior, sample(&p, 6.0, 43).unwrap().interior);
        for r in a.interior.rows() {
            assert!(r.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        for b in &a.boundary {
            assert_eq!(b.points.nrows(), a.counts.on_face(b.face));
            let fixed = if b.face.upper { 1.0 } else { 0.0 };
            assert!(b.points.column(b.face.axis).iter().all(|&v| v == fixed));
            assert_eq!(b.normal.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
            assert_eq!(b.normal[b.face.axis], b.face.sign());
        }
    }

    #[test]
    fn interior_mean_near_center() {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness::INFINITE);
        let s = sample(&p, 10.0, 11).unwrap();
        let n = s.interior.nrows() as f64;
        // uniform on (0,1): sigma = 1/sqrt(12)
        let bound = 5.0 * (1.0 / 12f64).sqrt() / n.sqrt();
        for axis in 0..3 {
            let mean = s.interior.column(axis).sum() / n;
            assert!((mean - 0.5).abs() < bound, "axis {axis}: {mean}");
        }
    }

    #[test]
    fn point_list_export() {
        let p = HelmholtzProblem::unit_box(2, 1.0, 0.0, Sharpness::INFINITE);
        let s = sample(&p, 4.0, 1).unwrap();
        let mut buf = Vec::new();
        write_points(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().count(),
            1 + s.counts.n_interior + s.counts.n_boundary
        );
    }

    proptest! {
        #[test]
        fn counts_monotone_in_ppw_and_nu(ppw in 0.5f64..20.0, dp in 0.0f64..5.0, nu in 0.5f64..4.0, dn in 0.0f64..2.0) {
            let p = HelmholtzProblem::unit_box(3, nu, 0.0, Sharpness::INFINITE);
            let q = HelmholtzProblem::unit_box(3, nu + dn, 0.0, Sharpness::INFINITE);
            let a = count_points(ppw, &p).unwrap();
            let b = count_points(ppw + dp, &p).unwrap();
            let c = count_points(ppw, &q).unwrap();
            prop_assert!(b.n_interior >= a.n_interior && b.n_boundary >= a.n_boundary);
            prop_assert!(c.n_interior >= a.n_interior && c.n_boundary >= a.n_boundary);
        }
    }
}

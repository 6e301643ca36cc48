//! Error metrics, loss landscapes and Hessian spectra.

mod hessian;
mod landscape;

use serde::{Deserialize, Serialize};

pub use hessian::{hessian_top_eigenvalue, power_iteration, EigenEstimate};
pub use landscape::{landscape_grid, landscape_with_directions, LandscapeGrid, Normalization};

use crate::error::{input, Error, Result};
use crate::oracle::{FieldOnPoints, TensorGrid};
use crate::physics::BoxDomain;

/// Default points per axis of the error evaluation grid.
pub const DEFAULT_GRID_N: usize = 41;

/// Uniform tensor grid including the walls.
pub fn evaluation_grid(domain: &BoxDomain, n: usize) -> TensorGrid {
    TensorGrid::uniform(domain, n)
}

fn check_aligned(a: &FieldOnPoints, b: &FieldOnPoints) -> Result<()> {
    if a.len() != b.len() || a.p_r.len() != a.p_i.len() || b.p_r.len() != b.p_i.len() {
        return Err(Error::Dimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.points.dim() != b.points.dim() {
        return input("fields are given on different point sets");
    }
    let tol = 1e-12;
    if a.points
        .iter()
        .zip(b.points.iter())
        .any(|(x, y)| (x - y).abs() > tol * (1.0 + y.abs()))
    {
        return input("fields are given on different point sets");
    }
    Ok(())
}

/// `100 * sqrt(sum |p_ref - p_pred|^2 / sum |p_ref|^2)` in percent.
pub fn relative_l2(pred: &FieldOnPoints, reference: &FieldOnPoints) -> Result<f64> {
    check_aligned(pred, reference)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..reference.len() {
        let dr = reference.p_r[i] - pred.p_r[i];
        let di = reference.p_i[i] - pred.p_i[i];
        num += dr * dr + di * di;
        den += reference.p_r[i].powi(2) + reference.p_i[i].powi(2);
    }
    if den == 0.0 {
        return input("reference field is identically zero");
    }
    Ok(100.0 * (num / den).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e_rel_ref: f64,
    pub e_rel_gf: f64,
    pub n_points: usize,
    pub meaningful: bool,
}

/// Errors against the room reference and the free-field field; the
/// prediction is meaningful when it is closer to the room solution.
pub fn meaningful_check(
    pred: &FieldOnPoints,
    reference: &FieldOnPoints,
    gf: &FieldOnPoints,
) -> Result<ErrorReport> {
    let e_rel_ref = relative_l2(pred, reference)?;
    let e_rel_gf = relative_l2(pred, gf)?;
    Ok(ErrorReport {
        e_rel_ref,
        e_rel_gf,
        n_points: reference.len(),
        meaningful: e_rel_ref < e_rel_gf,
    })
}

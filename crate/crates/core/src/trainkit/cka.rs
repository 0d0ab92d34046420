//! Linear centered kernel alignment between two feature matrices.

use crate::error::{dim, Error, Result};
use crate::Matrix;

fn center_columns(f: &Matrix) -> Matrix {
    let mut c = f.clone();
    let m = f.nrows() as f64;
    for mut col in c.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    c
}

/// `‖F2ᵀ F1‖² / (‖F1ᵀ F1‖ ‖F2ᵀ F2‖)` on column-centered features
/// (`m × p` and `m × q`, rows are examples).
pub fn cka_linear(f1: &Matrix, f2: &Matrix) -> Result<f64> {
    const OP: &str = "cka_linear";
    if f1.nrows() != f2.nrows() {
        return Err(dim(OP, format!("{} vs {} examples", f1.nrows(), f2.nrows())));
    }
    if f1.nrows() < 2 || f1.ncols() == 0 || f2.ncols() == 0 {
        return Err(dim(OP, "need at least two examples and one feature"));
    }
    let a = center_columns(f1);
    let b = center_columns(f2);
    let cross = (b.transpose() * &a).norm_squared();
    let na = (a.transpose() * &a).norm();
    let nb = (b.transpose() * &b).norm();
    let denom = na * nb;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Domain {
            op: OP,
            msg: "features have zero variance".into(),
        });
    }
    Ok(cross / denom)
}

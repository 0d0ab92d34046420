use serde::{Deserialize, Serialize};

use crate::error::{dim, Result};
use crate::spectral::svd::block_decomposition;
use crate::Matrix;

/// Outcome of checking `‖W − Σ_j M_j‖_F ≤ n · max_j ε_j`, where `M_j`
/// approximates the `j`-th rank-`r` SVD block of `W` with error `ε_j`.
/// Norms here are plain (not squared) Frobenius norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBoundCheck {
    pub per_block_errors: Vec<f64>,
    pub bound: f64,
    pub total_error: f64,
    pub holds: bool,
}

/// Absolute slack allowed on top of the bound.
pub const BLOCK_BOUND_SLACK: f64 = 1e-9;

/// `n · max_j ε_j`.
pub fn block_sum_bound(per_block_errors: &[f64]) -> f64 {
    per_block_errors.len() as f64 * per_block_errors.iter().copied().fold(0.0, f64::max)
}

/// Measure `ε_j = ‖U_j Σ_j V_jᵀ − M_j‖_F` against the block decomposition of
/// `target` at rank `r`, then compare the total error with `n · max ε_j`.
pub fn block_sum_check(target: &Matrix, r: usize, block_approx: &[Matrix]) -> Result<BlockBoundCheck> {
    let blocks = block_decomposition(target, r)?;
    if blocks.len() != block_approx.len() {
        return Err(dim(
            "block_sum_check",
            format!("{} blocks but {} approximations", blocks.len(), block_approx.len()),
        ));
    }
    if block_approx.iter().any(|m| m.shape() != target.shape()) {
        return Err(dim("block_sum_check", "approximation shape differs from target"));
    }
    let per_block_errors: Vec<f64> = blocks.iter().zip(block_approx).map(|(b, m)| (b - m).norm()).collect();
    let sum = block_approx.iter().fold(Matrix::zeros(target.nrows(), target.ncols()), |acc, m| acc + m);
    let total_error = (target - sum).norm();
    let bound = block_sum_bound(&per_block_errors);
    Ok(BlockBoundCheck {
        holds: total_error <= bound + BLOCK_BOUND_SLACK,
        per_block_errors,
        bound,
        total_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random(rows: usize, cols: usize, s: &mut Stream) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| s.next_normal())
    }

    #[test]
    fn exact_blocks_give_zero_bound() {
        let mut s = Stream::new(1);
        let w = random(6, 4, &mut s);
        let blocks = block_decomposition(&w, 2).unwrap();
        let c = block_sum_check(&w, 2, &blocks).unwrap();
        assert!(c.bound < 1e-12);
        assert!(c.total_error < 1e-12);
        assert!(c.holds);
    }

    #[test]
    fn single_block_bound_is_its_error() {
        let mut s = Stream::new(2);
        let w = random(5, 3, &mut s);
        let approx = vec![&w + random(5, 3, &mut s) * 0.1];
        let c = block_sum_check(&w, 3, &approx).unwrap();
        assert_eq!(c.per_block_errors.len(), 1);
        assert_eq!(c.bound, c.per_block_errors[0]);
        assert!((c.total_error - c.bound).abs() < 1e-12);
    }

    #[test]
    fn perturbed_blocks_respect_triangle_inequality() {
        let mut s = Stream::new(3);
        for _ in 0..20 {
            let w = random(8, 6, &mut s);
            let approx: Vec<Matrix> = block_decomposition(&w, 2)
                .unwrap()
                .into_iter()
                .map(|b| b + random(8, 6, &mut s) * s.next_f64())
                .collect();
            let c = block_sum_check(&w, 2, &approx).unwrap();
            assert!(c.holds, "{c:?}");
            assert!(c.total_error <= c.per_block_errors.iter().sum::<f64>() + 1e-12);
        }
    }

    #[test]
    fn count_mismatch() {
        let w = Matrix::identity(4, 4);
        assert!(block_sum_check(&w, 2, &[w.clone()]).is_err());
    }
}

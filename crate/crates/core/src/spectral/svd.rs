use serde::{Deserialize, Serialize};

use crate::adapters::spec::ceil_div;
use crate::error::{Error, Result};
use crate::Matrix;

/// Thin SVD `W = U diag(σ) Vᵀ` with `k = min(D, d)`.
///
/// Singular values are sorted descending; each left singular vector is
/// signed so that its largest-magnitude entry is positive (first index wins
/// ties), and the matching right vector is flipped with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank_k(&self) -> usize {
        self.sigma.len()
    }

    /// Sum of the rank-one terms with indices in `range`.
    pub fn partial(&self, range: std::ops::Range<usize>) -> Matrix {
        let mut out = Matrix::zeros(self.u.nrows(), self.v.nrows());
        for i in range {
            out.ger(self.sigma[i], &self.u.column(i), &self.v.column(i), 1.0);
        }
        out
    }

    /// Best rank-`r` approximation.
    pub fn truncated(&self, r: usize) -> Matrix {
        self.partial(0..r.min(self.sigma.len()))
    }

    pub fn reconstruct(&self) -> Matrix {
        self.partial(0..self.sigma.len())
    }
}

pub fn svd(w: &Matrix) -> Result<SvdResult> {
    const OP: &str = "svd";
    if w.is_empty() {
        return Err(Error::Dimension {
            op: OP,
            msg: "empty matrix".into(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            op: OP,
            msg: "non-finite entry".into(),
        });
    }
    let raw = w.clone().try_svd(true, true, f64::EPSILON, 10_000).ok_or(Error::Numerical {
        op: OP,
        msg: "SVD did not converge".into(),
    })?;
    let (u, v_t) = match (raw.u, raw.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::Numerical {
                op: OP,
                msg: "singular vectors missing".into(),
            })
        }
    };
    let k = raw.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw.singular_values[b].total_cmp(&raw.singular_values[a]).then(a.cmp(&b)));

    let mut out_u = Matrix::zeros(w.nrows(), k);
    let mut out_v = Matrix::zeros(w.ncols(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).into_owned();
        let mut vcol = v_t.row(src).transpose();
        let pivot = ucol
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if ucol[pivot] < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        out_u.set_column(dst, &ucol);
        out_v.set_column(dst, &vcol);
        sigma.push(raw.singular_values[src].max(0.0));
    }
    Ok(SvdResult {
        u: out_u,
        sigma,
        v: out_v,
    })
}

/// Count of singular values above `rel_tol · σ_1`. The zero matrix has rank 0.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    let s = svd(m)?;
    Ok(rank_from_sigma(&s.sigma, rel_tol))
}

pub fn rank_from_sigma(sigma: &[f64], rel_tol: f64) -> usize {
    let top = sigma.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sigma.iter().filter(|s| **s > rel_tol * top).count()
}

/// Default relative threshold for [`numerical_rank`].
pub const RANK_TOL: f64 = 1e-8;

/// Split `W` into `⌈min(D, d) / r⌉` consecutive rank-`r` SVD blocks
/// `U_j Σ_j V_jᵀ`. The last block holds the remainder when `r` does not
/// divide `min(D, d)`.
pub fn block_decomposition(w: &Matrix, r: usize) -> Result<Vec<Matrix>> {
    if r == 0 {
        return Err(Error::Dimension {
            op: "block_decomposition",
            msg: "r must be at least 1".into(),
        });
    }
    let s = svd(w)?;
    let k = s.rank_k();
    Ok((0..ceil_div(k, r))
        .map(|j| s.partial(j * r..((j + 1) * r).min(k)))
        .collect())
}

/// `Σ_{i > r} σ_i²`: the smallest squared Frobenius error of any rank-`r`
/// approximation. `sigma` is sorted internally, so any order is accepted.
pub fn eckart_young_bound(sigma: &[f64], r: usize) -> f64 {
    let mut s = sigma.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s.iter().skip(r).fold(0.0, |acc, x| acc + x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = Stream::new(seed);
        Matrix::from_fn(rows, cols, |_, _| s.next_normal())
    }

    fn gram_dev(m: &Matrix) -> f64 {
        let k = m.ncols();
        (m.transpose() * m - Matrix::identity(k, k)).amax()
    }

    #[test]
    fn diagonal() {
        let w = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let s = svd(&w).unwrap();
        assert_eq!(s.sigma.len(), 3);
        for (a, b) in s.sigma.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        // Sign convention: the pivot entry of each u is positive.
        for i in 0..3 {
            assert!(s.u.column(i).iter().any(|x| (*x - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn zero_matrix() {
        let s = svd(&Matrix::zeros(4, 3)).unwrap();
        assert!(s.sigma.iter().all(|x| *x == 0.0));
        assert_eq!(numerical_rank(&Matrix::zeros(4, 3), RANK_TOL).unwrap(), 0);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        for (rows, cols) in [(8, 6), (6, 8), (5, 5)] {
            let w = random(rows, cols, rows as u64 * 31 + cols as u64);
            let s = svd(&w).unwrap();
            assert!(s.sigma.windows(2).all(|p| p[0] >= p[1]));
            assert!((s.reconstruct() - &w).norm() <= 1e-8 * w.norm());
            assert!(gram_dev(&s.u) < 1e-8);
            assert!(gram_dev(&s.v) < 1e-8);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut w = Matrix::zeros(2, 2);
        w[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&w), Err(Error::Numerical { .. })));
    }

    #[test]
    fn blocks_on_diagonal() {
        let w = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let blocks = block_decomposition(&w, 1).unwrap();
        assert_eq!(blocks.len(), 3);
        for (j, b) in blocks.iter().enumerate() {
            let mut e = Matrix::zeros(3, 3);
            e[(j, j)] = 3.0 - j as f64;
            assert!((b - e).amax() < 1e-14);
        }
        let single = block_decomposition(&w, 3).unwrap();
        assert_eq!(single.len(), 1);
        assert!((&single[0] - &w).amax() < 1e-14);
    }

    #[test]
    fn block_partial_sums_are_truncated_svds() {
        let w = random(8, 6, 17);
        let s = svd(&w).unwrap();
        let blocks = block_decomposition(&w, 2).unwrap();
        assert_eq!(blocks.len(), 3);
        let mut acc = Matrix::zeros(8, 6);
        for (j, b) in blocks.iter().enumerate() {
            assert!(numerical_rank(b, RANK_TOL).unwrap() <= 2);
            acc += b;
            assert!((&acc - s.truncated(2 * (j + 1))).norm() <= 1e-8 * w.norm());
        }
        assert!((acc - &w).norm() <= 1e-8 * w.norm());
    }

    #[test]
    fn uneven_blocks() {
        let w = random(7, 5, 3);
        let blocks = block_decomposition(&w, 2).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(numerical_rank(&blocks[2], RANK_TOL).unwrap(), 1);
        assert!(block_decomposition(&w, 0).is_err());
    }

    #[test]
    fn eckart_young_values() {
        assert_eq!(eckart_young_bound(&[3.0, 2.0, 1.0], 1), 5.0);
        assert_eq!(eckart_young_bound(&[3.0, 2.0, 1.0], 3), 0.0);
        assert_eq!(eckart_young_bound(&[1.0; 16], 4), 12.0);
        assert_eq!(eckart_young_bound(&[1.0, 3.0, 2.0], 1), 5.0);
    }

    #[test]
    fn truncation_error_equals_bound() {
        let w = random(9, 7, 5);
        let s = svd(&w).unwrap();
        for r in 0..=7 {
            let err = (&w - s.truncated(r)).norm_squared();
            assert!((err - eckart_young_bound(&s.sigma, r)).abs() < 1e-9 * w.norm_squared());
        }
    }

    #[test]
    fn rank_of_product() {
        let b = random(8, 2, 1);
        let a = random(2, 6, 2);
        assert_eq!(numerical_rank(&(b * a), RANK_TOL).unwrap(), 2);
    }
}

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::rng::Stream;
use crate::Matrix;

/// Regression data `Y ≈ X W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Rows `idx` of both matrices.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    /// A fixed random subset holding `frac` of the rows (at least one).
    pub fn fixed_fraction(&self, frac: f64, seed: u64) -> Dataset {
        let n = self.len();
        let k = ((n as f64 * frac).ceil() as usize).clamp(1, n.max(1));
        let mut s = Stream::new(seed).derive_str("trainkit/subset");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + s.next_below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
        self.subset(&idx)
    }
}

/// Synthetic fine-tuning task: a frozen `W0` and a teacher `W* = W0 + ΔW*`
/// whose update has a prescribed spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherStudent {
    pub w0: Matrix,
    pub w_star: Matrix,
    pub data: Dataset,
}

impl TeacherStudent {
    pub fn delta_star(&self) -> Matrix {
        &self.w_star - &self.w0
    }
}

/// Random matrix with orthonormal columns (Gram–Schmidt via QR of a Gaussian draw).
pub(crate) fn random_orthonormal(rows: usize, cols: usize, s: &mut Stream) -> Matrix {
    let g = Matrix::from_fn(rows, cols, |_, _| s.next_normal());
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix signs so the factor is a deterministic function of the draw.
    let mut q = q.columns(0, cols).into_owned();
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Build `X` (`n_samples × D`, standard normal), `W0` (entries `N(0, 1/D)`),
/// `ΔW* = U diag(spectrum) Vᵀ` with Haar-like `U`, `V`, and `Y = X W* + noise · N(0, 1)`.
pub fn make_teacher_student(
    seed: u64,
    big_d: usize,
    d: usize,
    spectrum: &[f64],
    n_samples: usize,
    noise: f64,
) -> Result<TeacherStudent> {
    const OP: &str = "make_teacher_student";
    let k = big_d.min(d);
    if big_d == 0 || d == 0 || n_samples == 0 {
        return Err(dim(OP, "dimensions and sample count must be positive"));
    }
    if spectrum.len() != k {
        return Err(dim(OP, format!("spectrum has {} values, min(D, d) = {k}", spectrum.len())));
    }
    if spectrum.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Domain {
            op: OP,
            msg: "singular values must be finite and non-negative".into(),
        });
    }
    let root = Stream::new(seed);
    let mut s_u = root.derive_str("task/U");
    let mut s_v = root.derive_str("task/V");
    let mut s_w0 = root.derive_str("task/W0");
    let mut s_x = root.derive_str("task/X");
    let mut s_n = root.derive_str("task/noise");

    let u = random_orthonormal(big_d, k, &mut s_u);
    let v = random_orthonormal(d, k, &mut s_v);
    let delta = &u * Matrix::from_diagonal(&DVector::from_column_slice(spectrum)) * v.transpose();
    let w0 = Matrix::from_fn(big_d, d, |_, _| s_w0.next_normal() / (big_d as f64).sqrt());
    let w_star = &w0 + delta;
    let x = Matrix::from_fn(n_samples, big_d, |_, _| s_x.next_normal());
    let mut y = &x * &w_star;
    if noise > 0.0 {
        y += Matrix::from_fn(n_samples, d, |_, _| s_n.next_normal() * noise);
    }
    Ok(TeacherStudent {
        w0,
        w_star,
        data: Dataset { x, y },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{numerical_rank, svd, RANK_TOL};

    #[test]
    fn zero_spectrum_keeps_w0() {
        let t = make_teacher_student(1, 6, 4, &[0.0; 4], 10, 0.0).unwrap();
        assert_eq!(t.w_star, t.w0);
        assert_eq!(t.data.y, &t.data.x * &t.w0);
    }

    #[test]
    fn rank_one_spectrum() {
        let t = make_teacher_student(2, 6, 4, &[1.0, 0.0, 0.0, 0.0], 10, 0.0).unwrap();
        assert_eq!(numerical_rank(&t.delta_star(), RANK_TOL).unwrap(), 1);
    }

    #[test]
    fn flat_spectrum_recovered() {
        let t = make_teacher_student(3, 9, 7, &[1.0; 7], 5, 0.0).unwrap();
        let s = svd(&t.delta_star()).unwrap();
        assert!(s.sigma.iter().all(|x| (x - 1.0).abs() < 1e-8), "{:?}", s.sigma);
    }

    #[test]
    fn wrong_spectrum_length() {
        assert!(make_teacher_student(3, 9, 7, &[1.0; 6], 5, 0.0).is_err());
        assert!(make_teacher_student(3, 9, 7, &[-1.0; 7], 5, 0.0).is_err());
    }

    #[test]
    fn subset_is_fixed_and_sized() {
        let t = make_teacher_student(4, 5, 5, &[1.0; 5], 40, 0.1).unwrap();
        let a = t.data.fixed_fraction(0.05, 9);
        let b = t.data.fixed_fraction(0.05, 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }
}

//! The RandLoRA update `ΔW = α Σ_j B_j Λ_j A Γ_j`.
//!
//! `B_j` (`D × r`) and the shared `A` (`r × d`) are read-only views into a
//! [`BasisSet`]; only the diagonals of `Λ_j` (`lambda_stack`, `n × r`) and
//! `Γ_j` (`gamma_stack`, `n × d`) are trained. A basis set drawn with one
//! `A_j` per term gives the unshared form `Σ_j B_j Λ_j A_j Γ_j`.

use nalgebra::{DMatrixView, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, Result};
use crate::randbasis::{BasisSet, LayerSlice};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandLoraAdapter {
    pub slice: LayerSlice,
    pub lambda_stack: Matrix,
    pub gamma_stack: Matrix,
    pub alpha: f64,
}

/// Gradients of a scalar loss with respect to the adapter and its input.
#[derive(Clone, Debug)]
pub struct RandLoraGrads {
    pub d_lambda: Matrix,
    pub d_gamma: Matrix,
    pub d_x: Matrix,
}

/// `M · diag(v)`: scales column `c` of `m` by `v[c]`.
pub(crate) fn scale_cols(m: DMatrixView<'_, f64>, v: impl Iterator<Item = f64>) -> Matrix {
    let mut out = m.into_owned();
    for (mut col, s) in out.column_iter_mut().zip(v) {
        col *= s;
    }
    out
}

/// Diagonal gradients of one term given `H = B_jᵀ M` (`r × d`), where `M`
/// is the loss gradient with respect to `ΔW / α`.
///
/// `dλ[k] = Σ_q H[k,q] A[k,q] γ[q]`, `dγ[q] = Σ_k λ[k] A[k,q] H[k,q]`.
pub(crate) fn term_diag_grads(
    h: &Matrix,
    a: DMatrixView<'_, f64>,
    lambda: &[f64],
    gamma: &[f64],
    scale: f64,
    d_lambda: &mut [f64],
    d_gamma: &mut [f64],
) {
    let (r, d) = h.shape();
    d_lambda.iter_mut().for_each(|v| *v = 0.0);
    d_gamma.iter_mut().for_each(|v| *v = 0.0);
    for q in 0..d {
        let mut acc = 0.0;
        for k in 0..r {
            let ha = h[(k, q)] * a[(k, q)];
            d_lambda[k] += ha * gamma[q];
            acc += lambda[k] * ha;
        }
        d_gamma[q] = acc * scale;
    }
    d_lambda.iter_mut().for_each(|v| *v *= scale);
}

impl RandLoraAdapter {
    /// Fresh adapter with `Λ = 0`, `Γ = 1`, so `ΔW = 0`.
    pub fn new(slice: LayerSlice, alpha: f64) -> Self {
        let (n, r, d) = (slice.n_used, slice.r_used, slice.d);
        Self {
            lambda_stack: Matrix::zeros(n, r),
            gamma_stack: Matrix::from_element(n, d, 1.0),
            slice,
            alpha,
        }
    }

    pub fn n_terms(&self) -> usize {
        self.slice.n_used
    }

    pub fn param_count(&self) -> usize {
        self.lambda_stack.len() + self.gamma_stack.len()
    }

    /// Trainable parameters flattened as `[λ row-major, γ row-major]`.
    pub fn params(&self) -> Vec<f64> {
        self.lambda_stack
            .transpose()
            .iter()
            .chain(self.gamma_stack.transpose().iter())
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let (n, r, d) = (self.slice.n_used, self.slice.r_used, self.slice.d);
        if p.len() != n * (r + d) {
            return Err(dim("RandLoraAdapter::set_params", format!("expected {} values, got {}", n * (r + d), p.len())));
        }
        self.lambda_stack = Matrix::from_row_slice(n, r, &p[..n * r]);
        self.gamma_stack = Matrix::from_row_slice(n, d, &p[n * r..]);
        Ok(())
    }

    fn check(&self, bases: &BasisSet, op: &'static str) -> Result<()> {
        let s = &self.slice;
        if self.lambda_stack.shape() != (s.n_used, s.r_used) || self.gamma_stack.shape() != (s.n_used, s.d) {
            return Err(dim(op, "diagonal stacks do not match the layer slice"));
        }
        if s.big_d > bases.big_d_max() || s.d > bases.d_max() || s.n_used > bases.n_bases() || s.r_used > bases.rank() {
            return Err(dim(op, "layer slice exceeds the basis set"));
        }
        Ok(())
    }

    fn lambda(&self, j: usize) -> Vec<f64> {
        self.lambda_stack.row(j).iter().copied().collect()
    }

    fn gamma(&self, j: usize) -> Vec<f64> {
        self.gamma_stack.row(j).iter().copied().collect()
    }

    /// `B_j Λ_j` and `A Γ_j`.
    fn factors(&self, bases: &BasisSet, j: usize) -> (Matrix, Matrix) {
        let left = scale_cols(self.slice.b(bases, j), self.lambda_stack.row(j).iter().copied());
        let right = scale_cols(self.slice.a_term(bases, j), self.gamma_stack.row(j).iter().copied());
        (left, right)
    }

    /// `α Σ_j B_j Λ_j A Γ_j`, shape `D × d`.
    pub fn delta_weight(&self, bases: &BasisSet) -> Result<Matrix> {
        self.check(bases, "delta_weight")?;
        let mut acc = Matrix::zeros(self.slice.big_d, self.slice.d);
        for j in 0..self.n_terms() {
            let (left, right) = self.factors(bases, j);
            acc.gemm(self.alpha, &left, &right, 1.0);
        }
        Ok(acc)
    }

    /// `W0 + α ΔW`.
    pub fn merge(&self, w0: &Matrix, bases: &BasisSet) -> Result<Matrix> {
        if w0.shape() != (self.slice.big_d, self.slice.d) {
            return Err(dim("merge", format!("W0 is {:?}, layer is {}x{}", w0.shape(), self.slice.big_d, self.slice.d)));
        }
        Ok(w0 + self.delta_weight(bases)?)
    }

    /// `Y = X W0 + α Σ_j ((X B_j) Λ_j)(A Γ_j)` without forming `ΔW`.
    pub fn forward(&self, bases: &BasisSet, w0: &Matrix, x: &Matrix) -> Result<Matrix> {
        self.check(bases, "forward")?;
        let (big_d, d) = (self.slice.big_d, self.slice.d);
        if w0.shape() != (big_d, d) || x.ncols() != big_d {
            return Err(dim("forward", format!("X {:?}, W0 {:?}, layer {big_d}x{d}", x.shape(), w0.shape())));
        }
        let mut y = x * w0;
        for j in 0..self.n_terms() {
            let xb = x * self.slice.b(bases, j);
            let xbl = scale_cols(xb.as_view(), self.lambda_stack.row(j).iter().copied());
            let right = scale_cols(self.slice.a_term(bases, j), self.gamma_stack.row(j).iter().copied());
            y.gemm(self.alpha, &xbl, &right, 1.0);
        }
        Ok(y)
    }

    /// Gradients given `G = ∂L/∂Y` for `Y = forward(X)`.
    ///
    /// Only `X B_j` (`batch × r`) is formed per term; neither `ΔW` nor
    /// `Xᵀ G` is materialized.
    pub fn grad_params(&self, bases: &BasisSet, w0: &Matrix, x: &Matrix, g: &Matrix) -> Result<RandLoraGrads> {
        self.check(bases, "grad_params")?;
        let (big_d, d) = (self.slice.big_d, self.slice.d);
        let (n, r) = (self.slice.n_used, self.slice.r_used);
        if w0.shape() != (big_d, d) || x.ncols() != big_d || g.shape() != (x.nrows(), d) {
            return Err(dim(
                "grad_params",
                format!("X {:?}, G {:?}, W0 {:?}, layer {big_d}x{d}", x.shape(), g.shape(), w0.shape()),
            ));
        }
        let mut d_lambda = Matrix::zeros(n, r);
        let mut d_gamma = Matrix::zeros(n, d);
        let mut d_x = g * w0.transpose();
        let mut dl = vec![0.0; r];
        let mut dg = vec![0.0; d];
        for j in 0..n {
            let b = self.slice.b(bases, j);
            let a = self.slice.a_term(bases, j);
            let xb = x * b;
            let h = xb.transpose() * g;
            let (lambda, gamma) = (self.lambda(j), self.gamma(j));
            term_diag_grads(&h, a, &lambda, &gamma, self.alpha, &mut dl, &mut dg);
            d_lambda.set_row(j, &RowDVector::from_row_slice(&dl));
            d_gamma.set_row(j, &RowDVector::from_row_slice(&dg));
            // dX += α G Γ_j Aᵀ Λ_j B_jᵀ
            let g_gamma = scale_cols(g.as_view(), gamma.iter().copied());
            let t = scale_cols((g_gamma * a.transpose()).as_view(), lambda.iter().copied());
            d_x.gemm(self.alpha, &t, &b.transpose(), 1.0);
        }
        Ok(RandLoraGrads { d_lambda, d_gamma, d_x })
    }
}

pub fn delta_weight(adapter: &RandLoraAdapter, bases: &BasisSet) -> Result<Matrix> {
    adapter.delta_weight(bases)
}

pub fn forward(adapter: &RandLoraAdapter, bases: &BasisSet, w0: &Matrix, x: &Matrix) -> Result<Matrix> {
    adapter.forward(bases, w0, x)
}

pub fn grad_params(
    adapter: &RandLoraAdapter,
    bases: &BasisSet,
    w0: &Matrix,
    x: &Matrix,
    g: &Matrix,
) -> Result<RandLoraGrads> {
    adapter.grad_params(bases, w0, x, g)
}

pub fn merge(w0: &Matrix, adapter: &RandLoraAdapter, bases: &BasisSet) -> Result<Matrix> {
    adapter.merge(w0, bases)
}

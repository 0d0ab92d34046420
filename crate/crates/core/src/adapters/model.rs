//! Every adapter family bound to one `D × d` layer, over a flat parameter
//! vector. This is the form used by the fitting and training loops.
//!
//! Parameter layouts:
//! - RandLoRA, half-rank, averaged, VeRA-like: `[λ (n × r), γ (n × d)]`, row-major.
//! - LoRA: `[B (D × r), A (r × d)]`, row-major.
//! - NoLA-like: `[a (n), b (n)]`.

use crate::adapters::randlora::{scale_cols, term_diag_grads};
use crate::adapters::spec::{AdapterKind, AdapterSpec};
use crate::error::{dim, Error, Result};
use crate::randbasis::{AMode, BasisSet};
use crate::rng::Stream;
use crate::Matrix;

#[derive(Clone, Debug)]
enum Form {
    /// `Σ_j B_j Λ_j A_j Γ_j` (RandLoRA, half-rank, VeRA-like). `as_` holds
    /// one shared `A` or one per term.
    DiagSum { bs: Vec<Matrix>, as_: Vec<Matrix>, b_cat: Matrix },
    /// `(Σ_j B_j Λ_j)(Σ_j A_j Γ_j)`.
    DiagAvg { bs: Vec<Matrix>, as_: Vec<Matrix> },
    /// `(Σ_i a_i B_i)(Σ_i b_i A_i)`.
    ScalarSum { bs: Vec<Matrix>, as_: Vec<Matrix> },
    Lora,
}

/// An adapter spec bound to a layer shape and (for random-basis forms) to
/// leading blocks of a basis set.
#[derive(Clone, Debug)]
pub struct AdapterModel {
    spec: AdapterSpec,
    big_d: usize,
    d: usize,
    n: usize,
    r: usize,
    alpha: f64,
    form: Form,
}

impl AdapterModel {
    /// Bind `spec` to a `big_d × d` layer. `bases` may be `None` only for LoRA.
    pub fn bind(spec: &AdapterSpec, bases: Option<&BasisSet>, big_d: usize, d: usize) -> Result<Self> {
        const OP: &str = "AdapterModel::bind";
        spec.validate()?;
        if big_d == 0 || d == 0 {
            return Err(dim(OP, "layer dimensions must be positive"));
        }
        let n = spec.terms(big_d, d);
        let alpha = spec.alpha(big_d, d);
        let (r, form) = match &spec.kind {
            AdapterKind::Lora { r } => (*r, Form::Lora),
            kind => {
                let r = spec.basis_rank().expect("random-basis form");
                let bases = bases.ok_or_else(|| Error::Config(format!("{} needs a basis set", spec.label())))?;
                let slice = bases
                    .slice_for_layer(&spec.label(), big_d, d)?
                    .with_terms(n, bases)?
                    .with_rank(r, bases)?;
                let bs: Vec<Matrix> = (0..n).map(|j| slice.b(bases, j).into_owned()).collect();
                let per_term = |bases: &BasisSet| -> Result<Vec<Matrix>> {
                    if bases.a_stack().len() < n {
                        return Err(Error::Config(format!(
                            "{} needs a basis set with per-term A (found {} A matrices, need {n})",
                            spec.label(),
                            bases.a_stack().len()
                        )));
                    }
                    Ok((0..n).map(|j| slice.a_term(bases, j).into_owned()).collect())
                };
                let form = match kind {
                    AdapterKind::RandLoraAvg { .. } => Form::DiagAvg { as_: per_term(bases)?, bs },
                    AdapterKind::NolaLike { .. } => Form::ScalarSum { as_: per_term(bases)?, bs },
                    _ => {
                        let mut b_cat = Matrix::zeros(big_d, n * r);
                        for (j, b) in bs.iter().enumerate() {
                            b_cat.view_mut((0, j * r), (big_d, r)).copy_from(b);
                        }
                        // A basis set drawn with per-term A gives the unshared form.
                        let as_ = if bases.config().a_mode == AMode::PerTerm {
                            per_term(bases)?
                        } else {
                            vec![slice.a(bases).into_owned()]
                        };
                        Form::DiagSum { as_, bs, b_cat }
                    }
                };
                (r, form)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            big_d,
            d,
            n,
            r,
            alpha,
            form,
        })
    }

    pub fn spec(&self) -> &AdapterSpec {
        &self.spec
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.big_d, self.d)
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn terms(&self) -> usize {
        self.n
    }

    pub fn param_count(&self) -> usize {
        let (n, r, d, big_d) = (self.n, self.r, self.d, self.big_d);
        match self.form {
            Form::DiagSum { .. } | Form::DiagAvg { .. } => n * (r + d),
            Form::ScalarSum { .. } => 2 * n,
            Form::Lora => r * (big_d + d),
        }
    }

    /// Initial parameters with `ΔW = 0`: zero left scalings and unit right
    /// scalings; for LoRA, `B = 0` and `A ~ N(0, 1/d)` drawn from `seed`.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let (n, r, d) = (self.n, self.r, self.d);
        match self.form {
            Form::DiagSum { .. } | Form::DiagAvg { .. } => {
                let mut p = vec![0.0; n * r];
                p.resize(n * (r + d), 1.0);
                p
            }
            Form::ScalarSum { .. } => {
                let mut p = vec![0.0; n];
                p.resize(2 * n, 1.0);
                p
            }
            Form::Lora => {
                let mut s = Stream::new(seed).derive_str("adapters/lora-init");
                let scale = 1.0 / (d as f64).sqrt();
                let mut p = vec![0.0; self.big_d * r];
                p.extend((0..r * d).map(|_| s.next_normal() * scale));
                p
            }
        }
    }

    fn check(&self, p: &[f64], op: &'static str) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(dim(op, format!("{}: expected {} parameters, got {}", self.spec.label(), self.param_count(), p.len())));
        }
        Ok(())
    }

    /// Left factor `(D × k)` and right factor `(k × d)` with `ΔW = α L R`.
    fn factors(&self, p: &[f64]) -> (Matrix, Matrix) {
        let (n, r, d, big_d) = (self.n, self.r, self.d, self.big_d);
        match &self.form {
            Form::DiagSum { bs, as_, .. } => {
                let mut left = Matrix::zeros(big_d, n * r);
                let mut right = Matrix::zeros(n * r, d);
                for (j, b) in bs.iter().enumerate() {
                    let lam = &p[j * r..(j + 1) * r];
                    let gam = &p[n * r + j * d..n * r + (j + 1) * d];
                    left.view_mut((0, j * r), (big_d, r)).copy_from(&scale_cols(b.as_view(), lam.iter().copied()));
                    let a = &as_[j.min(as_.len() - 1)];
                    right.view_mut((j * r, 0), (r, d)).copy_from(&scale_cols(a.as_view(), gam.iter().copied()));
                }
                (left, right)
            }
            Form::DiagAvg { bs, as_ } => {
                let mut left = Matrix::zeros(big_d, r);
                let mut right = Matrix::zeros(r, d);
                for j in 0..n {
                    let lam = &p[j * r..(j + 1) * r];
                    let gam = &p[n * r + j * d..n * r + (j + 1) * d];
                    left += scale_cols(bs[j].as_view(), lam.iter().copied());
                    right += scale_cols(as_[j].as_view(), gam.iter().copied());
                }
                (left, right)
            }
            Form::ScalarSum { bs, as_ } => {
                let mut left = Matrix::zeros(big_d, r);
                let mut right = Matrix::zeros(r, d);
                for j in 0..n {
                    left += &bs[j] * p[j];
                    right += &as_[j] * p[n + j];
                }
                (left, right)
            }
            Form::Lora => (
                Matrix::from_row_slice(big_d, r, &p[..big_d * r]),
                Matrix::from_row_slice(r, d, &p[big_d * r..]),
            ),
        }
    }

    /// Merged update `α ΔW(p)`, shape `D × d`.
    pub fn delta(&self, p: &[f64]) -> Result<Matrix> {
        self.check(p, "delta_weight_variant")?;
        let (left, right) = self.factors(p);
        Ok(left * right * self.alpha)
    }

    /// Pull back `M = ∂L/∂(αΔW)` to `∂L/∂p`.
    pub fn backprop(&self, p: &[f64], m: &Matrix) -> Result<Vec<f64>> {
        self.check(p, "AdapterModel::backprop")?;
        if m.shape() != (self.big_d, self.d) {
            return Err(dim("AdapterModel::backprop", format!("gradient is {:?}, layer is {}x{}", m.shape(), self.big_d, self.d)));
        }
        let (n, r, d, big_d) = (self.n, self.r, self.d, self.big_d);
        let alpha = self.alpha;
        let mut grad = vec![0.0; p.len()];
        match &self.form {
            Form::DiagSum { as_, b_cat, .. } => {
                let h_all = b_cat.transpose() * m;
                let (gl, gg) = grad.split_at_mut(n * r);
                for j in 0..n {
                    let h = h_all.rows(j * r, r).into_owned();
                    term_diag_grads(
                        &h,
                        as_[j.min(as_.len() - 1)].as_view(),
                        &p[j * r..(j + 1) * r],
                        &p[n * r + j * d..n * r + (j + 1) * d],
                        alpha,
                        &mut gl[j * r..(j + 1) * r],
                        &mut gg[j * d..(j + 1) * d],
                    );
                }
            }
            Form::DiagAvg { bs, as_ } => {
                let (left, right) = self.factors(p);
                let d_left = m * right.transpose() * alpha;
                let d_right = left.transpose() * m * alpha;
                for j in 0..n {
                    for k in 0..r {
                        grad[j * r + k] = d_left.column(k).dot(&bs[j].column(k));
                    }
                    for q in 0..d {
                        grad[n * r + j * d + q] = d_right.column(q).dot(&as_[j].column(q));
                    }
                }
            }
            Form::ScalarSum { bs, as_ } => {
                let (left, right) = self.factors(p);
                let d_left = m * right.transpose() * alpha;
                let d_right = left.transpose() * m * alpha;
                for j in 0..n {
                    grad[j] = d_left.dot(&bs[j]);
                    grad[n + j] = d_right.dot(&as_[j]);
                }
            }
            Form::Lora => {
                let (left, right) = self.factors(p);
                let d_left = m * right.transpose() * alpha;
                let d_right = left.transpose() * m * alpha;
                for i in 0..big_d {
                    for k in 0..r {
                        grad[i * r + k] = d_left[(i, k)];
                    }
                }
                let off = big_d * r;
                for k in 0..r {
                    for q in 0..d {
                        grad[off + k * d + q] = d_right[(k, q)];
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// Merged update for any adapter family.
pub fn delta_weight_variant(
    spec: &AdapterSpec,
    bases: Option<&BasisSet>,
    big_d: usize,
    d: usize,
    params: &[f64],
) -> Result<Matrix> {
    AdapterModel::bind(spec, bases, big_d, d)?.delta(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::RandLoraAdapter;
    use crate::randbasis::{BasisConfig, Distribution};

    fn bases(seed: u64, n: usize, r: usize, big_d: usize, d: usize) -> BasisSet {
        BasisSet::generate(BasisConfig::new(seed, Distribution::Normal, n, r, big_d, d).per_term_a()).unwrap()
    }

    fn random_params(len: usize, seed: u64) -> Vec<f64> {
        let mut s = Stream::new(seed);
        (0..len).map(|_| s.next_normal()).collect()
    }

    /// Numerical rank straight from nalgebra, independent of the spectral module.
    fn rank_of(m: &Matrix) -> usize {
        let sv = m.clone().svd(false, false).singular_values;
        let top = sv.max();
        sv.iter().filter(|v| **v > 1e-8 * top).count()
    }

    #[test]
    fn diag_sum_matches_randlora_adapter() {
        let set = bases(1, 3, 2, 8, 6);
        let spec = AdapterSpec::randlora(2);
        let model = AdapterModel::bind(&spec, Some(&set), 8, 6).unwrap();
        let p = random_params(model.param_count(), 2);
        let slice = set.slice_for_layer("x", 8, 6).unwrap();
        let mut ad = RandLoraAdapter::new(slice, model.alpha());
        ad.set_params(&p).unwrap();
        let a = model.delta(&p).unwrap();
        let b = ad.delta_weight(&set).unwrap();
        assert!((a - &b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn init_is_zero_update() {
        let set = bases(3, 8, 4, 16, 16);
        for spec in [
            AdapterSpec::randlora(4),
            AdapterSpec::lora(3),
            AdapterSpec::vera(4),
            AdapterSpec::nola(5),
            AdapterSpec::randlora_avg(4, None),
            AdapterSpec::randlora_half(2, None),
        ] {
            let m = AdapterModel::bind(&spec, Some(&set), 16, 16).unwrap();
            let p = m.init_params(0);
            assert_eq!(p.len(), spec.param_count(16, 16), "{}", spec.label());
            assert!(m.delta(&p).unwrap().iter().all(|v| *v == 0.0), "{}", spec.label());
        }
    }

    #[test]
    fn averaged_form_rank_at_most_r() {
        let set = bases(4, 3, 2, 8, 6);
        let spec = AdapterSpec::randlora_avg(2, Some(3));
        let m = AdapterModel::bind(&spec, Some(&set), 8, 6).unwrap();
        let dw = m.delta(&random_params(m.param_count(), 5)).unwrap();
        assert!(rank_of(&dw) <= 2);
        assert!(rank_of(&dw) >= 1);
    }

    #[test]
    fn half_rank_form_rank() {
        let set = bases(5, 8, 4, 16, 16);
        let spec = AdapterSpec::randlora_half(2, None);
        let m = AdapterModel::bind(&spec, Some(&set), 16, 16).unwrap();
        let dw = m.delta(&random_params(m.param_count(), 6)).unwrap();
        assert_eq!(rank_of(&dw), 8);
    }

    #[test]
    fn nola_zero_weights_zero_update() {
        let set = bases(6, 4, 1, 8, 6);
        let m = AdapterModel::bind(&AdapterSpec::nola(4), Some(&set), 8, 6).unwrap();
        let mut p = random_params(8, 1);
        p[..4].iter_mut().for_each(|v| *v = 0.0);
        assert!(m.delta(&p).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vera_unit_vectors_give_ba() {
        let set = bases(7, 1, 6, 8, 6);
        let spec = AdapterSpec::vera(6).with_scaling(crate::adapters::Scaling::fixed(1.0));
        let m = AdapterModel::bind(&spec, Some(&set), 8, 6).unwrap();
        let dw = m.delta(&vec![1.0; 12]).unwrap();
        assert_eq!(dw, set.b(0) * set.a_shared());
    }

    #[test]
    fn shared_a_rejected_for_termwise_forms() {
        let set = BasisSet::generate(BasisConfig::new(1, Distribution::Normal, 4, 1, 8, 8)).unwrap();
        assert!(AdapterModel::bind(&AdapterSpec::nola(4), Some(&set), 8, 8).is_err());
        assert!(AdapterModel::bind(&AdapterSpec::randlora(1), None, 8, 8).is_err());
        assert!(AdapterModel::bind(&AdapterSpec::lora(1), None, 8, 8).is_ok());
    }

    #[test]
    fn wrong_param_length() {
        let m = AdapterModel::bind(&AdapterSpec::lora(2), None, 4, 4).unwrap();
        assert!(m.delta(&[0.0; 3]).is_err());
    }

    /// Central differences of `L(p) = <C, ΔW(p)>` against `backprop(C)` for every family.
    #[test]
    fn backprop_matches_finite_differences() {
        let set = bases(8, 4, 3, 7, 5);
        let mut s = Stream::new(77);
        let c = Matrix::from_fn(7, 5, |_, _| s.next_normal());
        for spec in [
            AdapterSpec::randlora(2),
            AdapterSpec::lora(2),
            AdapterSpec::vera(3),
            AdapterSpec::nola(4),
            AdapterSpec::randlora_avg(2, Some(3)),
            AdapterSpec::randlora_half(1, None),
        ] {
            let m = AdapterModel::bind(&spec, Some(&set), 7, 5).unwrap();
            let p = random_params(m.param_count(), 9);
            let g = m.backprop(&p, &c).unwrap();
            let h = 1e-5;
            for i in 0..p.len() {
                let mut up = p.clone();
                up[i] += h;
                let mut dn = p.clone();
                dn[i] -= h;
                let fd = (m.delta(&up).unwrap().dot(&c) - m.delta(&dn).unwrap().dot(&c)) / (2.0 * h);
                let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
                assert!(err < 1e-6, "{} param {i}: fd {fd} vs {}", spec.label(), g[i]);
            }
        }
    }
}

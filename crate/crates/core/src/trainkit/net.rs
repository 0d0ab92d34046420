//! A two-layer ReLU regressor `Y = relu(X W1) W2` whose first layer carries
//! an adapter. Its hidden activations are the features compared with CKA.

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterModel, AdapterSpec};
use crate::error::{dim, Error, Result};
use crate::randbasis::BasisSet;
use crate::rng::Stream;
use crate::trainkit::optim::{Optimizer, OptimizerConfig};
use crate::trainkit::task::{random_orthonormal, Dataset};
use crate::trainkit::train::{TrainPoint, TrainRun};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    /// `D × h`, the adapted layer.
    pub w1: Matrix,
    /// `h × d`, frozen.
    pub w2: Matrix,
}

impl TwoLayerNet {
    /// He-style init: `W1 ~ N(0, 2/D)`, `W2 ~ N(0, 1/h)`.
    pub fn random(seed: u64, big_d: usize, hidden: usize, d: usize) -> Self {
        let root = Stream::new(seed);
        let mut s1 = root.derive_str("net/W1");
        let mut s2 = root.derive_str("net/W2");
        let c1 = (2.0 / big_d as f64).sqrt();
        let c2 = (1.0 / hidden as f64).sqrt();
        Self {
            w1: Matrix::from_fn(big_d, hidden, |_, _| s1.next_normal() * c1),
            w2: Matrix::from_fn(hidden, d, |_, _| s2.next_normal() * c2),
        }
    }

    pub fn hidden(&self, x: &Matrix, delta1: Option<&Matrix>) -> Matrix {
        let pre = match delta1 {
            Some(dw) => x * (&self.w1 + dw),
            None => x * &self.w1,
        };
        pre.map(|v| v.max(0.0))
    }

    pub fn forward(&self, x: &Matrix, delta1: Option<&Matrix>) -> Matrix {
        self.hidden(x, delta1) * &self.w2
    }

    pub fn loss(&self, data: &Dataset, delta1: Option<&Matrix>) -> f64 {
        (self.forward(&data.x, delta1) - &data.y).norm_squared() / data.y.len() as f64
    }

    /// Loss and `∂loss/∂W1` evaluated at `W1 + delta1`.
    pub fn loss_and_grad_w1(&self, data: &Dataset, delta1: &Matrix) -> (f64, Matrix) {
        let pre = &data.x * (&self.w1 + delta1);
        let h = pre.map(|v| v.max(0.0));
        let resid = &h * &self.w2 - &data.y;
        let denom = resid.len() as f64;
        let loss = resid.norm_squared() / denom;
        let mut gh = (resid * (2.0 / denom)) * self.w2.transpose();
        gh.zip_apply(&pre, |g, p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
        (loss, data.x.transpose() * gh)
    }
}

/// Student/teacher pair sharing `W2`; the teacher's first layer is
/// `W1 + U diag(spectrum) Vᵀ`. Targets are the teacher's outputs.
pub fn make_two_layer_task(
    seed: u64,
    big_d: usize,
    hidden: usize,
    d: usize,
    spectrum: &[f64],
    n_samples: usize,
) -> Result<(TwoLayerNet, TwoLayerNet, Dataset)> {
    const OP: &str = "make_two_layer_task";
    if spectrum.len() != big_d.min(hidden) {
        return Err(dim(OP, format!("spectrum has {} values, min(D, h) = {}", spectrum.len(), big_d.min(hidden))));
    }
    if n_samples == 0 {
        return Err(dim(OP, "no samples"));
    }
    let student = TwoLayerNet::random(seed, big_d, hidden, d);
    let root = Stream::new(seed);
    let k = spectrum.len();
    let u = random_orthonormal(big_d, k, &mut root.derive_str("net/U"));
    let v = random_orthonormal(hidden, k, &mut root.derive_str("net/V"));
    let delta = &u * Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(spectrum)) * v.transpose();
    let teacher = TwoLayerNet {
        w1: &student.w1 + delta,
        w2: student.w2.clone(),
    };
    let mut sx = root.derive_str("net/X");
    let x = Matrix::from_fn(n_samples, big_d, |_, _| sx.next_normal());
    let y = teacher.forward(&x, None);
    Ok((student, teacher, Dataset { x, y }))
}

/// Train an adapter on the first layer of `net`.
pub fn train_two_layer(
    net: &TwoLayerNet,
    spec: &AdapterSpec,
    bases: Option<&BasisSet>,
    data: &Dataset,
    opt: &OptimizerConfig,
    log_every: usize,
) -> Result<TrainRun> {
    let (big_d, hidden) = net.w1.shape();
    if data.x.ncols() != big_d || data.y.ncols() != net.w2.ncols() || data.x.nrows() != data.y.nrows() {
        return Err(dim("train_two_layer", "data shape does not match network"));
    }
    let model = AdapterModel::bind(spec, bases, big_d, hidden)?;
    let mut params = model.init_params(opt.seed);
    let mut optimizer = Optimizer::new(opt, params.len())?;
    let mut history = Vec::new();
    for step in 0..=opt.max_iters {
        let delta = model.delta(&params)?;
        let (loss, g1) = net.loss_and_grad_w1(data, &delta);
        if !loss.is_finite() {
            return Err(Error::TrainDivergence { step });
        }
        if step == 0 || step == opt.max_iters || (log_every > 0 && step % log_every == 0) {
            history.push(TrainPoint {
                step,
                train_loss: loss,
                eval_metric: None,
            });
        }
        if step == opt.max_iters {
            break;
        }
        let grad = model.backprop(&params, &g1)?;
        optimizer.step(&mut params, &grad);
    }
    Ok(TrainRun {
        spec: Some(spec.clone()),
        param_count: params.len(),
        history,
        final_params: params,
        optimizer: opt.clone(),
    })
}

/// Dense fine-tuning of the whole first layer. `final_params` holds the
/// row-major update of `W1`.
pub fn train_two_layer_dense(net: &TwoLayerNet, data: &Dataset, opt: &OptimizerConfig, log_every: usize) -> Result<TrainRun> {
    let (big_d, hidden) = net.w1.shape();
    if data.x.ncols() != big_d || data.y.ncols() != net.w2.ncols() || data.x.nrows() != data.y.nrows() {
        return Err(dim("train_two_layer_dense", "data shape does not match network"));
    }
    let mut delta = Matrix::zeros(big_d, hidden);
    let mut optimizer = Optimizer::new(opt, delta.len())?;
    let mut history = Vec::new();
    for step in 0..=opt.max_iters {
        let (loss, g1) = net.loss_and_grad_w1(data, &delta);
        if !loss.is_finite() {
            return Err(Error::TrainDivergence { step });
        }
        if step == 0 || step == opt.max_iters || (log_every > 0 && step % log_every == 0) {
            history.push(TrainPoint {
                step,
                train_loss: loss,
                eval_metric: None,
            });
        }
        if step == opt.max_iters {
            break;
        }
        optimizer.step(delta.as_mut_slice(), g1.as_slice());
    }
    Ok(TrainRun {
        spec: None,
        param_count: delta.len(),
        history,
        final_params: delta.transpose().iter().copied().collect(),
        optimizer: opt.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_matches_finite_differences() {
        let (net, _, data) = make_two_layer_task(1, 5, 4, 3, &[1.0; 4], 9).unwrap();
        let delta = Matrix::from_fn(5, 4, |i, j| 0.1 * (i as f64 - j as f64));
        let (_, g) = net.loss_and_grad_w1(&data, &delta);
        let h = 1e-6;
        for i in 0..5 {
            for j in 0..4 {
                let mut up = delta.clone();
                up[(i, j)] += h;
                let mut dn = delta.clone();
                dn[(i, j)] -= h;
                let fd = (net.loss(&data, Some(&up)) - net.loss(&data, Some(&dn))) / (2.0 * h);
                assert!((fd - g[(i, j)]).abs() < 1e-5 * fd.abs().max(1.0), "{fd} {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn adapter_training_reduces_loss() {
        let (net, _, data) = make_two_layer_task(2, 8, 8, 4, &[1.0; 8], 64).unwrap();
        let opt = OptimizerConfig::default().with_max_iters(300);
        let run = train_two_layer(&net, &AdapterSpec::lora(2), None, &data, &opt, 50).unwrap();
        assert_eq!(run.initial_loss(), net.loss(&data, None));
        assert!(run.final_loss() < 0.5 * run.initial_loss(), "{} {}", run.initial_loss(), run.final_loss());
        let dense = train_two_layer_dense(&net, &data, &opt, 0).unwrap();
        assert_eq!(dense.initial_loss(), run.initial_loss());
        assert!(dense.final_loss() < run.final_loss());
    }
}

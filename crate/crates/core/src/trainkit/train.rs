//! Full-batch MSE training of an adapter on top of a frozen weight.

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterModel, AdapterSpec};
use crate::error::{dim, Error, Result};
use crate::randbasis::BasisSet;
use crate::trainkit::optim::{Optimizer, OptimizerConfig};
use crate::trainkit::task::Dataset;
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPoint {
    pub step: usize,
    pub train_loss: f64,
    /// Squared Frobenius distance of the adapted weight to the reference
    /// weight, when one is given.
    pub eval_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    /// `None` for dense full fine-tuning.
    pub spec: Option<AdapterSpec>,
    pub param_count: usize,
    pub history: Vec<TrainPoint>,
    pub final_params: Vec<f64>,
    pub optimizer: OptimizerConfig,
}

impl TrainRun {
    pub fn initial_loss(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |p| p.train_loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |p| p.train_loss)
    }
}

/// `mean((X W − Y)²)` and its gradient `∂/∂W = Xᵀ G`, `G = 2 (XW − Y) / (N d)`.
pub fn mse_and_grad(data: &Dataset, w: &Matrix) -> (f64, Matrix) {
    let resid = &data.x * w - &data.y;
    let denom = resid.len() as f64;
    let loss = resid.norm_squared() / denom;
    let grad = data.x.transpose() * (resid * (2.0 / denom));
    (loss, grad)
}

pub fn mse(data: &Dataset, w: &Matrix) -> f64 {
    (&data.x * w - &data.y).norm_squared() / (data.y.len() as f64)
}

fn check_shapes(w0: &Matrix, data: &Dataset) -> Result<()> {
    let (big_d, d) = w0.shape();
    if data.x.ncols() != big_d || data.y.ncols() != d || data.x.nrows() != data.y.nrows() || data.x.nrows() == 0 {
        return Err(dim(
            "train",
            format!("W0 {:?}, X {:?}, Y {:?}", w0.shape(), data.x.shape(), data.y.shape()),
        ));
    }
    Ok(())
}

fn log_step(step: usize, log_every: usize, last: usize) -> bool {
    step == 0 || step == last || (log_every > 0 && step % log_every == 0)
}

/// Train `spec` on `data` starting from the zero update. Runs exactly
/// `opt.max_iters` steps; `reference` (typically the teacher weight) feeds
/// `eval_metric`.
pub fn train(
    w0: &Matrix,
    spec: &AdapterSpec,
    bases: Option<&BasisSet>,
    data: &Dataset,
    reference: Option<&Matrix>,
    opt: &OptimizerConfig,
    log_every: usize,
) -> Result<TrainRun> {
    check_shapes(w0, data)?;
    let (big_d, d) = w0.shape();
    let model = AdapterModel::bind(spec, bases, big_d, d)?;
    let mut params = model.init_params(opt.seed);
    let mut optimizer = Optimizer::new(opt, params.len())?;
    let mut history = Vec::new();
    for step in 0..=opt.max_iters {
        let w = w0 + model.delta(&params)?;
        let (loss, grad_w) = mse_and_grad(data, &w);
        if !loss.is_finite() {
            return Err(Error::TrainDivergence { step });
        }
        if log_step(step, log_every, opt.max_iters) {
            history.push(TrainPoint {
                step,
                train_loss: loss,
                eval_metric: reference.map(|r| (&w - r).norm_squared()),
            });
        }
        if step == opt.max_iters {
            break;
        }
        let grad = model.backprop(&params, &grad_w)?;
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

/// Dense full fine-tuning of every entry of `W`, starting at `W0`.
/// `final_params` holds the row-major update `W − W0`.
pub fn train_dense(
    w0: &Matrix,
    data: &Dataset,
    reference: Option<&Matrix>,
    opt: &OptimizerConfig,
    log_every: usize,
) -> Result<TrainRun> {
    check_shapes(w0, data)?;
    let mut w = w0.clone();
    let mut optimizer = Optimizer::new(opt, w.len())?;
    let mut history = Vec::new();
    for step in 0..=opt.max_iters {
        let (loss, grad_w) = mse_and_grad(data, &w);
        if !loss.is_finite() {
            return Err(Error::TrainDivergence { step });
        }
        if log_step(step, log_every, opt.max_iters) {
            history.push(TrainPoint {
                step,
                train_loss: loss,
                eval_metric: reference.map(|r| (&w - r).norm_squared()),
            });
        }
        if step == opt.max_iters {
            break;
        }
        // nalgebra storage is column-major; the optimizer is layout-agnostic.
        optimizer.step(w.as_mut_slice(), grad_w.as_slice());
    }
    let delta = &w - w0;
    Ok(TrainRun {
        spec: None,
        param_count: w.len(),
        history,
        final_params: delta.transpose().iter().copied().collect(),
        optimizer: opt.clone(),
    })
}

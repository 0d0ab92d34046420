use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    AdamLike,
}

/// Full-batch optimizer settings shared by fitting and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Early stop when the best error improved by less than `rel_tol`
    /// (relative) over the last `patience` iterations. `patience = 0` disables it.
    pub patience: usize,
    pub rel_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdamLike,
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 5000,
            seed: 0,
            patience: 200,
            rel_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(step_size: f64, max_iters: usize) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            step_size,
            max_iters,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_step_size(mut self, step_size: f64) -> Self {
        self.step_size = step_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(cfg: &OptimizerConfig, n_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        })
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        let lr = self.cfg.step_size;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdamLike => {
                self.t = self.t.saturating_add(1);
                let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.eps);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Tracks the best value seen and decides when progress has stalled.
#[derive(Clone, Debug)]
pub(crate) struct Plateau {
    patience: usize,
    rel_tol: f64,
    history: std::collections::VecDeque<f64>,
}

impl Plateau {
    pub(crate) fn new(cfg: &OptimizerConfig) -> Self {
        Self {
            patience: cfg.patience,
            rel_tol: cfg.rel_tol,
            history: Default::default(),
        }
    }

    /// Push the best-so-far value; returns `true` once improvement over the
    /// window is below tolerance.
    pub(crate) fn stalled(&mut self, best: f64) -> bool {
        if self.patience == 0 {
            return false;
        }
        self.history.push_back(best);
        if self.history.len() <= self.patience {
            return false;
        }
        let old = self.history.pop_front().unwrap_or(best);
        old - best <= self.rel_tol * old.abs()
    }
}

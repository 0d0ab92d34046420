//! Fit an adapter directly to a target update by minimizing
//! `‖target − αΔW(p)‖_F²` with a full-batch optimizer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterModel, AdapterSpec};
use crate::error::{Error, Result};
use crate::randbasis::BasisSet;
use crate::spectral::svd::{eckart_young_bound, svd};
use crate::trainkit::optim::{Optimizer, OptimizerConfig, Plateau};
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub spec: AdapterSpec,
    pub target_id: String,
    /// Best squared Frobenius error reached.
    pub final_sq_error: f64,
    pub param_count: usize,
    pub iterations: usize,
    /// `(iteration, squared error)` samples of the raw error curve.
    pub trace: Vec<(usize, f64)>,
    /// Eckart–Young floor at the spec's effective rank.
    pub bound_ey: f64,
}

/// Iterations over which a 10× error increase counts as divergence.
const DIVERGENCE_WINDOW: usize = 100;
const DIVERGENCE_FACTOR: f64 = 10.0;
/// Number of trace samples kept over the iteration budget.
const TRACE_POINTS: usize = 100;

pub fn fit_adapter(
    target: &Matrix,
    target_id: &str,
    spec: &AdapterSpec,
    bases: Option<&BasisSet>,
    opt: &OptimizerConfig,
) -> Result<FitReport> {
    fit_adapter_params(target, target_id, spec, bases, opt).map(|(r, _)| r)
}

/// As [`fit_adapter`], also returning the best parameters.
pub fn fit_adapter_params(
    target: &Matrix,
    target_id: &str,
    spec: &AdapterSpec,
    bases: Option<&BasisSet>,
    opt: &OptimizerConfig,
) -> Result<(FitReport, Vec<f64>)> {
    let (big_d, d) = target.shape();
    let model = AdapterModel::bind(spec, bases, big_d, d)?;
    let sigma = svd(target)?.sigma;
    let bound_ey = eckart_young_bound(&sigma, spec.effective_rank(big_d, d));

    let mut params = model.init_params(opt.seed);
    let mut optimizer = Optimizer::new(opt, params.len())?;
    let mut plateau = Plateau::new(opt);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(DIVERGENCE_WINDOW + 1);
    let every = (opt.max_iters / TRACE_POINTS).max(1);

    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut initial = f64::NAN;

    for it in 0..=opt.max_iters {
        let resid = model.delta(&params)? - target;
        let err = resid.norm_squared();
        if !err.is_finite() {
            return Err(Error::FitDivergence {
                iteration: it,
                error: err,
                previous: best,
            });
        }
        if it == 0 {
            initial = err;
        }
        window.push_back(err);
        if window.len() > DIVERGENCE_WINDOW {
            let old = window.pop_front().unwrap_or(err);
            // Oscillation far below the starting error is not divergence.
            if err > DIVERGENCE_FACTOR * old && err > initial {
                return Err(Error::FitDivergence {
                    iteration: it,
                    error: err,
                    previous: old,
                });
            }
        }
        if it % every == 0 {
            trace.push((it, err));
        }
        if err < best {
            best = err;
            best_params.clone_from(&params);
        }
        iterations = it;
        if it == opt.max_iters || best == 0.0 || plateau.stalled(best) {
            if trace.last().map(|t| t.0) != Some(it) {
                trace.push((it, err));
            }
            break;
        }
        let grad = model.backprop(&params, &(resid * 2.0))?;
        optimizer.step(&mut params, &grad);
    }

    let report = FitReport {
        spec: spec.clone(),
        target_id: target_id.to_owned(),
        final_sq_error: best,
        param_count: model.param_count(),
        iterations,
        trace,
        bound_ey,
    };
    Ok((report, best_params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randbasis::{generate_basis_set, BasisConfig, Distribution};
    use crate::rng::Stream;

    #[test]
    fn realizable_single_term_target() {
        let bases = generate_basis_set(1, Distribution::Normal, 1, 2, 6, 6).unwrap();
        let target = bases.b(0) * bases.a_shared();
        let spec = AdapterSpec::randlora_n(2, 1);
        let rep = fit_adapter(&target, "b1a", &spec, Some(&bases), &OptimizerConfig::default()).unwrap();
        assert!(rep.final_sq_error < 1e-6, "{}", rep.final_sq_error);
        assert_eq!(rep.param_count, 2 + 6);
    }

    #[test]
    fn lora_rank_one_on_identity_respects_bound() {
        let target = Matrix::identity(4, 4);
        let rep = fit_adapter(&target, "I4", &AdapterSpec::lora(1), None, &OptimizerConfig::default()).unwrap();
        assert!((rep.bound_ey - 3.0).abs() < 1e-12);
        assert!(rep.final_sq_error >= 3.0 - 1e-3, "{}", rep.final_sq_error);
        assert!(rep.final_sq_error < 3.0 + 1e-3, "{}", rep.final_sq_error);
    }

    #[test]
    fn randlora_beats_rank_one_bound_on_identity() {
        let target = Matrix::identity(4, 4);
        let bases = generate_basis_set(2, Distribution::Normal, 4, 1, 4, 4).unwrap();
        let rep = fit_adapter(&target, "I4", &AdapterSpec::randlora(1), Some(&bases), &OptimizerConfig::default()).unwrap();
        assert!(rep.final_sq_error < 3.0, "{}", rep.final_sq_error);
        assert_eq!(rep.bound_ey, 0.0);
    }

    #[test]
    fn realizable_targets_for_each_family() {
        let bases = BasisSet::generate(BasisConfig::new(3, Distribution::Normal, 4, 2, 8, 6).per_term_a()).unwrap();
        let mut s = Stream::new(5);
        for spec in [
            AdapterSpec::randlora(2),
            AdapterSpec::lora(2),
            AdapterSpec::randlora_avg(2, Some(3)),
            AdapterSpec::nola(4),
        ] {
            let model = AdapterModel::bind(&spec, Some(&bases), 8, 6).unwrap();
            let p: Vec<f64> = (0..model.param_count()).map(|_| 0.5 + s.next_f64()).collect();
            let target = model.delta(&p).unwrap();
            let rep = fit_adapter(&target, "own", &spec, Some(&bases), &OptimizerConfig::default()).unwrap();
            assert!(
                rep.final_sq_error < 1e-6 * target.norm_squared().max(1.0),
                "{}: {}",
                spec.label(),
                rep.final_sq_error
            );
        }
    }

    #[test]
    fn trace_is_sampled_and_ends_at_last_iteration() {
        let target = Matrix::identity(3, 3);
        let opt = OptimizerConfig::default().with_max_iters(250);
        let rep = fit_adapter(&target, "I3", &AdapterSpec::lora(1), None, &opt).unwrap();
        assert_eq!(rep.trace.first().unwrap().0, 0);
        assert_eq!(rep.trace.last().unwrap().0, rep.iterations);
        assert!(rep.trace.iter().all(|(_, e)| *e >= 0.0));
        let best = rep.trace.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        assert!(rep.final_sq_error <= best);
    }

    #[test]
    fn runaway_step_is_reported_as_divergence() {
        let target = Matrix::identity(4, 4) * 10.0;
        let opt = OptimizerConfig::sgd(10.0, 500);
        let err = fit_adapter(&target, "I4", &AdapterSpec::lora(2), None, &opt).unwrap_err();
        assert!(matches!(err, Error::FitDivergence { .. }), "{err}");
    }
}

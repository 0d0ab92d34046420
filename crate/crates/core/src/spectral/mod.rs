//! SVD-based analysis: block decompositions, approximation bounds,
//! numerical rank and adapter fitting.

mod fit;
mod svd;
mod block_bound;

pub use fit::{fit_adapter, fit_adapter_params, FitReport};
pub use svd::{
    block_decomposition, eckart_young_bound, numerical_rank, rank_from_sigma, svd, SvdResult, RANK_TOL,
};
pub use block_bound::{block_sum_bound, block_sum_check, BlockBoundCheck, BLOCK_BOUND_SLACK};

//! Adapter parameterizations: RandLoRA and the baselines it is compared with.

mod model;
mod randlora;
pub(crate) mod spec;

pub use model::{delta_weight_variant, AdapterModel};
pub use randlora::{delta_weight, forward, grad_params, merge, RandLoraAdapter, RandLoraGrads};
pub use spec::{param_count, AdapterKind, AdapterSpec, Scaling};

//! Desk-scale optimization harness.

pub mod cka;
pub mod landscape;
pub mod net;
pub mod optim;
pub mod task;
pub mod train;

pub use cka::cka_linear;
pub use landscape::{barycentric, landscape_grid, landscape_grid_on, ClampRef, LandscapeGrid};
pub use net::{make_two_layer_task, train_two_layer, train_two_layer_dense, TwoLayerNet};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use task::{make_teacher_student, Dataset, TeacherStudent};
pub use train::{mse, train, train_dense, TrainPoint, TrainRun};

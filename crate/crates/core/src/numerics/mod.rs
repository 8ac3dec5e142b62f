//! Dense linear algebra, stable softmax and layer normalisation, AdamW and
//! a central-difference gradient checker.

mod gradcheck;
mod matrix;
mod ops;
mod optim;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::Matrix;
pub use ops::{dot, layer_norm, layer_norm_backward, log_sigmoid, sigmoid, softmax_stable, softplus, LN_EPS};
pub use optim::{add_l2_penalty, AdamW, AdamWConfig, ParamSet, RegMode};

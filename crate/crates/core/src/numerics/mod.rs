//! Parameter storage, losses, gradients and optimization.

mod gradcheck;
mod loss;
mod optim;
mod params;
pub mod special;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use loss::{
    bce_loss, bce_with_logit, bpr_loss, bpr_loss_grad, nb_log_likelihood, nb_log_likelihood_grad,
    sigmoid, softplus, CountPrediction,
};
pub use optim::{optimizer_step, AdamConfig, OptimizerState};
pub use params::{Param, ParamId, ParamStore, CHECKPOINT_MAGIC};

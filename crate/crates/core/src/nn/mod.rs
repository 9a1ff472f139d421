//! Dense feed-forward networks trained with mini-batch SGD and momentum.

mod activation;
mod backprop;
pub mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;
pub mod persist;
mod schedule;
mod train;

pub use activation::{softmax_rows, Activation, DerivativeFn};
pub use backprop::{backward, backward_with, Gradients, LayerGrad};
pub use gradcheck::{gradient_check, gradient_check_with};
pub use layer::{init_layer, DenseLayer};
pub use loss::{cross_entropy_loss, mse_loss, OutputGrad, Target};
pub use network::{ForwardTrace, Network};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use persist::{load_model, save_model};
pub use schedule::{lr_at, LrSchedule, MIN_LINEAR_LR};
pub use train::{supervised_step, train, EarlyStopping, TrainConfig, TrainReport};

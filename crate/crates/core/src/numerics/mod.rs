//! Dense tensors, a gradient tape, LSTM cells and the Adagrad optimizer.

pub mod gradcheck;
mod lstm;
pub mod optim;
mod scalar;
mod tape;
mod tensor;

pub use lstm::{lstm_step, LstmParams};
pub use optim::{ParamGrads, ParamId, ParamStore, ADAGRAD_EPSILON};
pub use scalar::Scalar;
pub use tape::{softmax, Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

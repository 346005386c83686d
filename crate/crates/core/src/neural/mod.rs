//! Explicit-gradient building blocks: each operation has a forward function
//! and a matching backward that accumulates into a [`Gradients`] buffer.

pub mod adam;
pub mod embedding_file;
pub mod gradcheck;
pub mod layers;
pub mod lstm;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use layers::{cross_entropy, dense_softmax, dropout, embed, softmax, DropoutMask, Mode};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmParams};
pub use params::{uniform, Gradients, ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;

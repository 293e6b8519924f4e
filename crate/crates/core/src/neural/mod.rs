//! Small dense numerical kernel: tensors, layers, activations, losses, a
//! bidirectional LSTM, Adam and checkpoints. Everything is `f64`.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod lstm;
pub mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use lstm::{BiLstm, LstmCache};
pub use ops::{bce, ce_softmax, dense, dense_backward, dropout, mse, relu, sigmoid, softmax, DenseGrads};
pub use tensor::{matmul, ParamSet, Tensor};
pub(crate) use tensor::gemm;

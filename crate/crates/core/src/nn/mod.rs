//! Dense kernels and the Subword-LSTM / Char-LSTM networks.

mod gradcheck;
mod layers;
mod model;
mod params;
mod tensor;

pub use gradcheck::{
    grad_check, grad_check_tensors, random_batch, random_params, relative_error,
    GradCheckReport, TensorCheck, MAX_CHECK_PARAMS,
};
pub use layers::{
    conv1d, conv1d_backward, conv1d_relu, embed, lstm_step, maxpool, maxpool_backward, relu,
    sigmoid, softmax_xent, softmax_xent_grad, StepTrace,
};
pub use model::{
    backward, forward, forward_example, infer, loss_and_grads, ConvTrace, ExampleTrace,
    ForwardTrace,
};
pub use params::{ArchitectureKind, ConvParams, LstmParams, ModelConfig, ModelParams, GATE_NAMES};
pub use tensor::Tensor;

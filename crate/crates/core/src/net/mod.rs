//! CNN -> BiLSTM -> self-attention -> dense softmax classifier for embedded
//! alarm windows, with hand-written backpropagation and an Adam optimizer.

mod adam;
mod attention;
mod config;
mod conv;
mod gradcheck;
mod head;
mod io;
mod lstm;
mod model;

pub use adam::{adam_step, AdamState};
pub use attention::{attention_forward, AttentionParams};
pub use config::NetConfig;
pub use conv::{conv1d_forward, ConvLayerParams};
pub use gradcheck::{check_batch, check_gradients, gradcheck, gradcheck_dense, rel_error, GradReport, TensorCheck};
pub use head::{head_forward, DenseParams, Dropout};
pub use io::{read_model, write_model, FORMAT_VERSION, MAGIC};
pub use lstm::{bilstm_forward, LstmCellParams};
pub use model::{
    init_params, loss, loss_and_backward, predict, predict_batch, BatchResult, ModelParams, TensorRef, TENSOR_NAMES,
};

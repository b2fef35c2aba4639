//! The segmentation network: per-step convolutional encoder, per-pixel
//! bidirectional LSTM, attention-weighted temporal pooling shared with the
//! skip connections, convolutional decoder and pixel-wise cross entropy.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod init;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{AggregationMode, ModelConfig};
pub use forward::{
    aggregate, aggregate_skips, attention_weights, batch_loss, batch_loss_grad, batch_loss_recording, batch_loss_replaying, bilstm_forward, build_forward,
    build_forward_with, cross_entropy_loss, decoder_forward, encoder_forward, lstm_cell, patch_loss_grad,
    statt_forward, statt_forward_with, EncoderOutput, ForwardTrace, ForwardVars, LstmWeights, IGNORE_LABEL,
};
pub use init::{init_params, param_count, param_layout, Init, ParamSpec};

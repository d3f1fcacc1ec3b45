//! Contrastive learning core: patch encoders, InfoNCE loss with exact
//! gradients, the grouped training loop, and pair checkpoints.

pub mod checkpoint;
pub mod encoder;
pub mod loss;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use encoder::{Encoder, EncoderArch, ForwardTrace, Gradients};
pub use loss::{info_nce_loss, InfoNceResult, NegativePairing};
pub use train::{
    batch_loss_and_grads, loss_gradient_check, train, StepRecord, TrainConfig, TrainReport,
};

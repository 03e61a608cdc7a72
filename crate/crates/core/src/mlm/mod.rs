//! Transformer encoder pretrained by masked k-mer prediction.
//!
//! The token embedding table can be initialised from structural embeddings
//! and is trained together with the rest of the network; the output
//! projection is tied to it. After pretraining the embedding table is the
//! contextual k-mer mapping.

mod checkpoint;
mod config;
mod mask;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{MaskingConfig, PretrainConfig, TransformerConfig};
pub use mask::{apply_mask, MaskedWindow};
pub use model::{mlm_loss, mlm_loss_grad, ForwardOutput, LayerParams, Params, TransformerModel};
pub use train::{
    make_windows, masked_accuracy, masked_loss, pretrain, warmup_lr, Adam, PretrainOutput,
    PretrainStats,
};

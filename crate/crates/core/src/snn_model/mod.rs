//! The Siamese DOA network.
//!
//! A sparse augmentation layer masks random elements of each input. The masked
//! snapshot then feeds two encoder branches. The signal branch is dense layers on
//! `[Re y; Im y]`, with the first activation normalized by the active element count.
//! The frequency branch is convolutions over the grid-steered spectrum
//! `A^H y / N_active`. Both branch outputs are fused into an embedding and a sigmoid
//! head scores every grid angle. Training pairs snapshots and combines a
//! contrastive term on the embeddings with binary cross-entropy on both branches.

mod augment;
mod config;
mod encoder;
mod losses;
mod train;

pub use augment::{active_count, frequency_embedding, sa_layer, MaskedSignal, ACTIVE_THRESHOLD};
pub use config::{EncoderConfig, Variant};
pub use encoder::{EncoderBatch, SnnModel, Trace};
pub use losses::{bce_loss, contrastive_loss, contrastive_pair, LossParts, BCE_EPS};
pub use train::{
    build_epoch_pairs, EpochLog, PairIndex, PairLossProbe, TrainConfig, Trainer,
};

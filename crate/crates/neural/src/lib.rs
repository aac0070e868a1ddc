//! A small encoder-decoder transformer that predicts transition sequences,
//! with one cross-attention head restricted to the parser stack and one to
//! the buffer. Everything runs in `f64` on the CPU with a hand-written
//! reverse-mode tape.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod mat;
pub mod model;
pub mod predict;
pub mod tape;
pub mod train;

pub use attention::{masked_attention, AttentionError};
pub use mat::Mat;
pub use model::{Example, Model, ModelConfig, ModelError, Schedule, Vocab};
pub use predict::Prediction;
pub use train::{train, EpochStats, TrainError, TrainOptions};

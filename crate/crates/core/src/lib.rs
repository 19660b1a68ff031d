//! Caption decoding with dual (spatial + channel) attention over pyramid
//! feature maps: feature ingestion, multi-scale pooling, a two-LSTM decoder,
//! cross-entropy and self-critical training, beam-search inference, and
//! n-gram caption metrics.

pub mod autograd;
pub mod attention;
pub mod complexity;
pub mod config;
pub mod decoder;
pub mod error;
pub mod io;
pub mod metrics;
pub mod objectives;
pub mod pyramid;

pub use attention::AttentionMode;
pub use autograd::{Tape, Tensor, Var};
pub use config::ModelConfig;
pub use error::{Error, Result};

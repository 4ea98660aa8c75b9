//! Copy-augmented encoder-decoder models for task-oriented dialogue.
//!
//! The crate covers the full ladder from a plain LSTM encoder-decoder up to
//! attention-based entity copying with entity-type input features, plus the
//! training loop, the four response metrics and a session engine for
//! interactive chat.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod serve;
pub mod tensor;
pub mod train;

pub use corpus::{Dialogue, EncodedSample, EntityLexicon, KnowledgeBase, Turn, Vocabulary};
pub use error::{Error, Result};
pub use eval::{Evaluation, MetricsReport};
pub use model::{Checkpoint, DecodeResult, ModelDims, ModelParams, Variant};
pub use serve::{ChatEngine, ModelInfo, Reply, SessionStore, TraceFrame};
pub use train::{TrainConfig, TrainOutcome, TrainReport};

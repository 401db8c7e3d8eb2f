//! Neural argument-component boundary detection.
//!
//! Tokens are tagged B/I/O by one of four models sharing a bidirectional
//! LSTM encoder: a softmax tagger, a Bi-LSTM-CRF, an attention-based
//! sentence classifier, and a joint model whose CRF emissions are
//! conditioned on the classifier's output.

pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod models;
pub mod param;
pub mod rng;
pub mod rnn;
pub mod synthetic;
pub mod tag;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use models::{Model, ModelConfig, ModelKind, Prediction};
pub use rng::Prng;
pub use tag::Tag;
pub use tensor::Tensor;

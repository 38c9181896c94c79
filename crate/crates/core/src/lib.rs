//! Product embeddings from titles: a multi-task bidirectional LSTM encoder
//! with per-task heads, word-vector pretraining, autoencoder projections to
//! group-agnostic and cross-region spaces, and an evaluation harness over
//! synthetic catalogs.

pub mod analytics;
pub mod catalog;
pub mod crosslingual;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod io;
pub mod multitask;
pub mod numerics;
pub mod projector;

pub use error::{Error, Result};

//! Offline handwriting line recognition: line normalization, a hierarchy of
//! multi-dimensional recurrent layers (leaky or LSTM cells) trained with CTC,
//! and dictionary-constrained decoding for Arabic script.
//!
//! The pipeline is `preprocess` -> `network` -> `decoder`, with `ctc` and
//! `trainer` for learning and `dataset` for synthetic corpora.

pub mod alphabet;
pub mod cells;
pub mod checkpoint;
pub mod ctc;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod glyphs;
pub mod gradcheck;
pub mod image;
pub mod lexicon;
pub mod metrics;
pub mod network;
pub mod preprocess;
pub mod probs;
pub mod trainer;

pub use alphabet::Alphabet;
pub use cells::CellVariant;
pub use error::{Error, Result};
pub use image::GrayImage;
pub use lexicon::{Lexicon, PrefixTree};
pub use network::{NetConfig, NetParams};
pub use preprocess::NormConfig;
pub use probs::ProbMatrix;

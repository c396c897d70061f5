//! Affect-controlled GRU encoder-decoder dialog generation.
//!
//! The core is generic over the floating point type; [`Model`] and friends
//! fix it to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affect;
pub mod annotation;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod scalar;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = model::Seq2Seq<f64>;
pub type Distribution = affect::EmotionDistribution<f64>;
pub type Vad = affect::VadVector<f64>;
pub type Lexicon = affect::VadLexicon<f64>;
pub type ModelF32 = model::Seq2Seq<f32>;

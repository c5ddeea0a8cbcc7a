//! Page-based long-document abstractive summarization.
//!
//! A document is split into non-overlapping pages, each summary sentence is
//! aligned to its most similar page, and a small page-fused encoder-decoder is
//! trained with page-local cross-entropy plus a KL term that distills a
//! teacher page-importance distribution into a confidence head.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what training
//! and gradient checking use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod corpus;
pub mod distill;
pub mod embed;
mod error;
pub mod metrics;
mod scalar;
pub mod synth;
pub mod toymodel;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EmbeddingVector = embed::EmbeddingVector<f64>;
pub type ScoreMatrix = align::ScoreMatrix<f64>;
pub type Alignment = align::Alignment<f64>;
pub type TeacherDistribution = distill::TeacherDistribution<f64>;
pub type StudentDistribution = distill::StudentDistribution<f64>;
pub type LossBreakdown = distill::LossBreakdown<f64>;
pub type RougeScore = metrics::RougeScore<f64>;
pub type CorpusReport = metrics::CorpusReport<f64>;
pub type ModelParams = toymodel::ModelParams<f64>;
pub type ToyModel = toymodel::ToyModel<f64>;

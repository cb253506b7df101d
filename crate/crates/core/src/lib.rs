//! Relational sentence embeddings.
//!
//! A sentence encoder and a table of relation embeddings are trained jointly
//! so that `encode(head) + relation ≈ encode(tail)` under cosine similarity,
//! using temperature-scaled contrastive losses with in-batch and hard
//! negatives. Trained models score sentence pairs per relation, rank
//! candidate tails for link prediction, and are evaluated with Spearman
//! correlation, MRR and Hits@k.

// NaN must fail the range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod contrastive;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod relation_model;
pub mod training;

pub use error::{Result, RseError};
pub use model::RseModel;

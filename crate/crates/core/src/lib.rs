//! Probing harness for typological information in fixed sentence
//! representations.
//!
//! The pipeline runs in stages that each live in their own module:
//!
//! ```text
//! catalog    WALS snapshot + language pairs  -> TaskSpec per feature
//! corpus     sentence dumps + links          -> sampled, filtered Corpus per language
//! taskbuild  TaskSpec + corpora              -> split ProbingTask (train / val / test)
//! embedstore pooled per-layer vectors        -> seekable binary files
//! probe      embeddings + task               -> trained probe / mixing probe
//! metrics    predictions                     -> macro-F1, per-language accuracy, K(s)
//! analysis   reports + embeddings            -> tables, heatmaps, PCA / t-SNE projections
//! ```
//!
//! `synth` generates embedding sets with planted signal so every stage after
//! `taskbuild` can be exercised without a real encoder.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod catalog;
pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod features;
pub mod metrics;
pub mod probe;
pub mod seed;
pub mod synth;
pub mod taskbuild;

pub use error::{Error, Result};

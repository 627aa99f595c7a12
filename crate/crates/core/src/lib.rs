//! Semi-supervised relation extraction over multiple reference graphs.
//!
//! Labeled and unlabeled relation mentions are linked through entity, verb and
//! semantics reference graphs. A recurrent sentence encoder and a multi-graph
//! attention network are trained alternately, and unlabeled samples on which
//! both agree with high confidence are promoted into the labeled set.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod encoder;
pub mod evaluation;
pub mod features;
pub mod mgat;
pub mod nn;
pub mod refgraph;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};

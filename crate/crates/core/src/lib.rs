//! Counterfactual explanations for black-box graph classifiers.
//!
//! A residual graph generator (GCN encoder, inner-product decoder, tanh
//! residual added to the input adjacency) is trained adversarially against a
//! GCN discriminator. At inference time its edge probabilities drive a
//! partial-order sampler that flips edges until the oracle changes its mind.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod render;
pub mod sampler;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Dataset, FoldAssignment, Graph, LabeledGraph};
pub use oracle::OracleHandle;

//! Optimizer comparison benchmark for a fixed hourglass MLP trained on
//! tabular heart-disease data.
//!
//! The crate is organised by concern:
//!
//! - [`network`]: the MLP, its loss and analytic gradients;
//! - [`optim`]: ten first-order optimizers behind one step interface;
//! - [`data`]: CSV ingestion and the preprocessing pipeline;
//! - [`metrics`]: classification and training-dynamics metrics;
//! - [`harness`]: shared-initialization benchmark runs, learning-rate grid
//!   search and stratified cross-validation;
//! - [`kv`]: the dotted key-value text format used by configs and reports.

pub mod data;
pub mod harness;
pub mod kv;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod optim;

pub use matrix::Matrix;

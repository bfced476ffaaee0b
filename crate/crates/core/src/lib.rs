//! Self-supervised node embeddings from attention-learned graph views and a
//! neighbor contrastive loss.
//!
//! Each of K views re-weights the original edges with its own single-head
//! graph attention and encodes nodes with its own projection. Training
//! pulls every node towards itself in the other view and towards its graph
//! neighbors in both views, while pushing non-neighbors apart. The
//! concatenated view embeddings are then scored by a logistic-regression
//! probe trained on very few labels.
//!
//! Module map:
//! - [`graph`], [`pack`], [`sbm`]: graph structure, on-disk format, synthetic graphs
//! - [`diff`]: kernels with analytic backward passes and [`diff::gradcheck`]
//! - [`model`]: adaptive adjacency and per-view encoders
//! - [`loss`]: the contrastive loss family
//! - [`train`]: Adam training loop
//! - [`eval`]: label-scarce splits and the logistic-regression probe
//! - [`embeddings`]: embedding file format

pub mod diff;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod model;
pub mod pack;
pub mod sbm;
pub mod seed;
pub mod train;

pub use error::{NclaError, Result};

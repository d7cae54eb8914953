//! Tree augmented naive Bayes classifiers over binary features organised in
//! a pre-defined hierarchy (DAG).
//!
//! * [`chowliu`]: conventional TAN, which ignores the hierarchy.
//! * [`hie_mst`]: tree learning that respects hierarchy directions and the
//!   single-parent constraint through dependency propagation.
//! * [`hie_mst_lite`]: lazy per-instance variant that also removes
//!   hierarchically redundant features.
//!
//! [`eval`] runs stratified cross-validation over all three and compares them
//! with GMean, tied average ranks and a Friedman/Holm post-hoc test.

pub mod bayes;
pub mod chowliu;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod hie_mst;
pub mod hie_mst_lite;
pub mod hierarchy;
pub mod infostats;
pub mod tree;

pub use bayes::{fit, FittedClassifier, Prediction};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use eval::Method;
pub use exec::Exec;
pub use hierarchy::FeatureDag;
pub use infostats::ScoredEdge;
pub use tree::DependencyTree;

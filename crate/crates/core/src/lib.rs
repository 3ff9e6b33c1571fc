//! Nested distance between scenario trees, exact and entropically
//! regularized.
//!
//! * [`tree`]: scenario-tree model, validation, JSON format and a seeded
//!   random generator.
//! * [`ot`]: exact discrete optimal transport and Sinkhorn scaling.
//! * [`nested`]: the backward recursion giving `ND_r` and `END_r`.
//! * [`bench`]: timing and accuracy comparison of the two on random pairs.
//! * [`plan`]: regularized plan export with thresholded edge lists.
//!
//! ```
//! use nested_distance::{nested_distance, tree::early_vs_late_information};
//!
//! let (x, y) = early_vs_late_information(1.0, 0.1);
//! let nd = nested_distance(&x, &y, 1.0).unwrap();
//! assert!((nd.value - 1.1).abs() < 1e-12);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod nested;
pub mod ot;
pub mod plan;
pub mod tree;

pub use error::{Error, Result};
pub use nested::{
    entropic_nested_distance, nested_distance, nested_distance_with, path_cost_matrix,
    wasserstein_paths, GroundMetric, NdResult, Solver, StageCostTable,
};
pub use ot::{CostMatrix, DiscreteDistribution, RegOtConfig, SinkhornConfig, TransportPlan};
pub use tree::{generate, parse_tree, serialize_tree, GenSpec, Node, ScenarioTree};

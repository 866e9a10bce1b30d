//! Anchor-based fair clustering.
//!
//! The pipeline picks `m` anchors with group-proportional quotas
//! ([`fdas`]), clusters the anchors with any fair clustering operator
//! ([`clustering`]), builds an anchor graph whose (cluster, group) block
//! masses carry the anchor-level group composition over to every sample
//! ([`graph`]) and finally propagates anchor labels through the graph
//! ([`propagation`]). [`pipeline`] wires the stages together and
//! [`metrics`] scores the result.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

pub mod bench;
pub mod clustering;
pub mod data;
pub mod error;
pub mod fdas;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod propagation;
pub mod scalar;

pub use clustering::{
    run_operator, AnchorLabeling, FairClusteringOperator, FairletKCenter, LloydKMeans,
};
pub use error::{Error, Result};
pub use fdas::{compute_quotas, select_anchors, AnchorMode, QuotaVector};
pub use graph::{ConstraintTable, GraphMode, SolverConfig};
pub use metrics::MetricsBundle;
pub use model::{AnchorGraph, AnchorSet, ClusterResult, Dataset, GroupStats};
pub use pipeline::{run_pipeline, RunConfig, RunRecord};
pub use propagation::propagate;
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type AnchorSet64 = AnchorSet<f64>;
pub type AnchorGraph64 = AnchorGraph<f64>;
pub type AnchorLabeling64 = AnchorLabeling<f64>;
pub type ConstraintTable64 = ConstraintTable<f64>;
pub type ClusterResult64 = ClusterResult<f64>;

pub type Dataset32 = Dataset<f32>;
pub type AnchorSet32 = AnchorSet<f32>;
pub type AnchorGraph32 = AnchorGraph<f32>;
pub type AnchorLabeling32 = AnchorLabeling<f32>;
pub type ConstraintTable32 = ConstraintTable<f32>;
pub type ClusterResult32 = ClusterResult<f32>;

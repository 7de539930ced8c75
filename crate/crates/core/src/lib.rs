//! Attention-based semantic explanations for graph-attention pointcloud
//! registration.
//!
//! The pipeline builds a semantic graph over two consecutive lidar scans,
//! assigns attention weights to cross-scan registration candidates, recovers
//! the relative pose by weighted SVD, and then measures how semantically
//! targeted masks shift both the attention distribution (Jensen–Shannon
//! distance) and the pose error (average absolute discrepancy).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attention_engine;
pub mod graph_builder;
pub mod perturbation;
pub mod pipeline;
pub mod registration;
pub mod schema_io;
pub mod spatial;

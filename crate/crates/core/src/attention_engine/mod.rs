//! Attention weights over registration-candidate edges.
//!
//! Two producers share one output type: a multi-head graph-attention forward
//! pass driven by external weights, and a deterministic descriptor-similarity
//! surrogate used when trained weights are unavailable.

mod gat;
mod surrogate;
mod weights;

use std::path::PathBuf;

use thiserror::Error;

use crate::graph_builder::{EdgeId, NodeFeatures, SemanticGraph};

pub use gat::{forward_attention, DEFAULT_LEAKY_SLOPE};
pub use surrogate::{descriptor, surrogate_attention};
pub use weights::{
    load_model_weights, save_model_weights, ArchitectureSpec, HeadWeights, LayerWeights, ModelWeights, WEIGHTS_MAGIC,
    WEIGHTS_VERSION,
};

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("weight file: {0}")]
    Format(String),
    #[error("layer {layer}: {reason}")]
    Shape { layer: usize, reason: String },
    #[error("layer {layer}: non-finite weight")]
    NonFinite { layer: usize },
    #[error("feature dimension {found} does not match model input dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{features} feature rows for {nodes} graph nodes")]
    RowMismatch { features: usize, nodes: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerTag {
    Last,
}

/// Per-candidate-edge attention `α_ij`, aligned with a graph's
/// `candidate_edges` through `edge_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionAssignment {
    pub edge_ids: Vec<EdgeId>,
    pub weights: Vec<f64>,
    pub head_count: usize,
    pub layer: LayerTag,
}

impl AttentionAssignment {
    pub fn new(edge_ids: Vec<EdgeId>, weights: Vec<f64>, head_count: usize) -> Result<Self, AttentionError> {
        if edge_ids.len() != weights.len() {
            return Err(AttentionError::InvalidAssignment(format!(
                "{} edge ids for {} weights",
                edge_ids.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(AttentionError::InvalidAssignment(format!(
                "weight {w} is not finite and non-negative"
            )));
        }
        Ok(Self {
            edge_ids,
            weights,
            head_count,
            layer: LayerTag::Last,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True if `edge_ids` equals the graph's candidate-edge ids in order.
    pub fn is_aligned_with(&self, graph: &SemanticGraph) -> bool {
        self.edge_ids.len() == graph.candidate_edges.len()
            && self
                .edge_ids
                .iter()
                .zip(&graph.candidate_edges)
                .all(|(id, e)| *id == e.id)
    }
}

/// Which producer assigns attention.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionModel {
    Gat(ModelWeights),
    Surrogate { temperature: f64 },
}

impl AttentionModel {
    pub fn assign(
        &self,
        graph: &SemanticGraph,
        features: &NodeFeatures,
    ) -> Result<AttentionAssignment, AttentionError> {
        match self {
            AttentionModel::Gat(weights) => forward_attention(graph, features, weights),
            AttentionModel::Surrogate { temperature } => surrogate_attention(graph, features, *temperature),
        }
    }
}

/// Numerically stable softmax; a singleton maps to exactly 1.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

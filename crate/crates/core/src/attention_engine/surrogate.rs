use super::{softmax_in_place, AttentionAssignment, AttentionError};
use crate::graph_builder::{NodeFeatures, SemanticGraph};

/// `(normal, curvature, corner flag)` of one node.
pub fn descriptor(features: &NodeFeatures, node: usize) -> [f64; 5] {
    let row = features.matrix.row(node);
    [
        row[NodeFeatures::NORMAL],
        row[NodeFeatures::NORMAL + 1],
        row[NodeFeatures::NORMAL + 2],
        row[NodeFeatures::CURVATURE],
        row[features.flag_column()],
    ]
}

/// Deterministic stand-in for trained attention:
/// `e_ij = −‖d_i − d_j‖² / temperature`, softmax per source.
pub fn surrogate_attention(
    graph: &SemanticGraph,
    features: &NodeFeatures,
    temperature: f64,
) -> Result<AttentionAssignment, AttentionError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(AttentionError::InvalidTemperature(temperature));
    }
    if features.len() != graph.nodes.len() {
        return Err(AttentionError::RowMismatch {
            features: features.len(),
            nodes: graph.nodes.len(),
        });
    }
    let mut alpha = vec![0.0; graph.candidate_edges.len()];
    let mut logits = Vec::new();
    for (&source, positions) in &graph.candidates_by_source() {
        let ds = descriptor(features, source);
        logits.clear();
        logits.extend(positions.iter().map(|&pos| {
            let dt = descriptor(features, graph.candidate_edges[pos].target);
            let d2: f64 = ds.iter().zip(&dt).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2 / temperature
        }));
        softmax_in_place(&mut logits);
        for (&pos, a) in positions.iter().zip(&logits) {
            alpha[pos] = *a;
        }
    }
    AttentionAssignment::new(graph.edge_ids(), alpha, 1)
}

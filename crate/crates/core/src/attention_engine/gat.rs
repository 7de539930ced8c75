use nalgebra::{DMatrix, DVector};

use super::{softmax_in_place, AttentionAssignment, AttentionError, LayerWeights, ModelWeights};
use crate::graph_builder::{NodeFeatures, SemanticGraph};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[inline]
fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Projected features `Z = H Wᵀ` and the two attention halves `Z a_src`,
/// `Z a_dst`.
struct HeadProjection {
    z: DMatrix<f64>,
    src_score: DVector<f64>,
    dst_score: DVector<f64>,
}

fn project(h: &DMatrix<f64>, w: &DMatrix<f64>, a: &DVector<f64>) -> HeadProjection {
    let out = w.nrows();
    let z = h * w.transpose();
    let src_score = &z * a.rows(0, out);
    let dst_score = &z * a.rows(out, out);
    HeadProjection {
        z,
        src_score,
        dst_score,
    }
}

/// Hidden layer over intra edges plus self-loops; heads are concatenated and
/// passed through ELU.
fn hidden_layer(h: &DMatrix<f64>, layer: &LayerWeights, adjacency: &[Vec<usize>]) -> DMatrix<f64> {
    let n = h.nrows();
    let out = layer.out_dim();
    let mut next = DMatrix::zeros(n, layer.concat_dim());
    for (head_index, head) in layer.heads.iter().enumerate() {
        let proj = project(h, &head.w, &head.a);
        let mut logits = Vec::new();
        for i in 0..n {
            let neighborhood: Vec<usize> = std::iter::once(i).chain(adjacency[i].iter().copied()).collect();
            logits.clear();
            logits.extend(
                neighborhood
                    .iter()
                    .map(|&j| leaky_relu(proj.src_score[i] + proj.dst_score[j], layer.leaky_slope)),
            );
            softmax_in_place(&mut logits);
            for c in 0..out {
                let agg: f64 = neighborhood
                    .iter()
                    .zip(&logits)
                    .map(|(&j, alpha)| alpha * proj.z[(j, c)])
                    .sum();
                next[(i, head_index * out + c)] = elu(agg);
            }
        }
    }
    next
}

/// Multi-head graph-attention forward pass returning last-layer attention
/// over the candidate edges.
///
/// Hidden layers attend over intra-cloud edges plus self-loops and
/// concatenate their heads; the last layer attends from each cloud-`t` node
/// over its registration candidates, `e_ij = LeakyReLU(aᵀ[W h_i ‖ W h_j])`,
/// softmax-normalised per source and averaged across heads.
pub fn forward_attention(
    graph: &SemanticGraph,
    features: &NodeFeatures,
    weights: &ModelWeights,
) -> Result<AttentionAssignment, AttentionError> {
    if features.dim() != weights.input_dim() {
        return Err(AttentionError::DimensionMismatch {
            expected: weights.input_dim(),
            found: features.dim(),
        });
    }
    if features.len() != graph.nodes.len() {
        return Err(AttentionError::RowMismatch {
            features: features.len(),
            nodes: graph.nodes.len(),
        });
    }
    let layers = weights.layers();
    let (last, hidden) = layers.split_last().expect("at least one layer");

    let adjacency = graph.intra_adjacency();
    let mut h = features.matrix.clone();
    for layer in hidden {
        h = hidden_layer(&h, layer, &adjacency);
    }

    let groups = graph.candidates_by_source();
    let mut alpha = vec![0.0; graph.candidate_edges.len()];
    let head_count = last.heads.len();
    let mut logits = Vec::new();
    for head in &last.heads {
        let proj = project(&h, &head.w, &head.a);
        for (&source, positions) in &groups {
            logits.clear();
            logits.extend(positions.iter().map(|&pos| {
                let target = graph.candidate_edges[pos].target;
                leaky_relu(proj.src_score[source] + proj.dst_score[target], last.leaky_slope)
            }));
            softmax_in_place(&mut logits);
            for (&pos, a) in positions.iter().zip(&logits) {
                alpha[pos] += a;
            }
        }
    }
    if head_count > 1 {
        for a in &mut alpha {
            *a /= head_count as f64;
        }
    }
    AttentionAssignment::new(graph.edge_ids(), alpha, head_count)
}

//! Static input graph over two consecutive clouds.
//!
//! Points are characterised as corner or surface from the eigenvalues of
//! their local covariance. Intra-cloud edges link same-class points within a
//! radius; registration-candidate edges link each point of cloud `t` to its
//! nearest same-class, same-geometry points of cloud `t+1`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::schema_io::{ClassId, LabeledCloud, SemanticSchema};
use crate::spatial::KdTree;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("cloud {cloud} has {points} points; at least {needed} required")]
    TooFewPoints { cloud: usize, points: usize, needed: usize },
    #[error("neighbour count k = {0} must be at least 3")]
    InvalidNeighborCount(usize),
    #[error("invalid graph parameter: {0}")]
    InvalidParams(String),
    #[error("point {index} of cloud {cloud} has no semantic label")]
    Unlabeled { cloud: usize, index: usize },
    #[error("class id {0} is not in the schema")]
    UnknownClass(ClassId),
    #[error("no registration candidates")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeometricClass {
    Corner,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    /// Neighbours used for the local covariance (the point itself is added).
    pub k: usize,
    /// `λ₂/λ₁` below this marks a line-like neighbourhood.
    pub line_ratio: f64,
    /// Curvature `λ₃/(λ₁+λ₂+λ₃)` above this marks a corner.
    pub curvature_threshold: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            k: 10,
            line_ratio: 0.25,
            curvature_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry {
    pub class: GeometricClass,
    pub curvature: f64,
    /// Smallest-eigenvalue eigenvector, oriented towards the sensor origin.
    pub normal: Vector3<f64>,
    /// All neighbours coincide; classified Surface with zero curvature.
    pub degenerate: bool,
}

pub fn classify_geometry(cloud: &LabeledCloud, params: &GeometryParams) -> Result<Vec<PointGeometry>, GraphError> {
    if params.k < 3 {
        return Err(GraphError::InvalidNeighborCount(params.k));
    }
    if cloud.len() < params.k + 1 {
        return Err(GraphError::TooFewPoints {
            cloud: cloud.timestamp_index,
            points: cloud.len(),
            needed: params.k + 1,
        });
    }
    let positions = cloud.positions();
    let tree = KdTree::new(&positions);
    let out = positions
        .par_iter()
        .map(|p| {
            let neighbors = tree.nearest(p, params.k + 1, f64::INFINITY);
            let pts: Vec<Vector3<f64>> = neighbors.iter().map(|n| positions[n.id]).collect();
            local_geometry(p, &pts, params)
        })
        .collect();
    Ok(out)
}

fn local_geometry(p: &Vector3<f64>, pts: &[Vector3<f64>], params: &GeometryParams) -> PointGeometry {
    let flat = PointGeometry {
        class: GeometricClass::Surface,
        curvature: 0.0,
        normal: Vector3::z(),
        degenerate: true,
    };
    if pts.iter().all(|q| q == p) {
        return flat;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().sum::<Vector3<f64>>() / n;
    let cov = pts
        .iter()
        .map(|q| {
            let d = q - mean;
            d * d.transpose()
        })
        .sum::<Matrix3<f64>>()
        / n;
    let eigen = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let lambda = order.map(|i| eigen.eigenvalues[i].max(0.0));
    let total = lambda[0] + lambda[1] + lambda[2];
    if total <= 1e-24 {
        return flat;
    }
    let curvature = lambda[2] / total;
    let linear = lambda[1] / lambda[0] < params.line_ratio;
    let class = if linear || curvature > params.curvature_threshold {
        GeometricClass::Corner
    } else {
        GeometricClass::Surface
    };
    let mut normal: Vector3<f64> = eigen.eigenvectors.column(order[2]).into_owned();
    if normal.dot(p) > 0.0 {
        normal = -normal;
    }
    PointGeometry {
        class,
        curvature,
        normal,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub geometry: GeometryParams,
    /// Intra-cloud edge radius r (m).
    pub intra_radius: f64,
    /// Maximum candidates m per cloud-`t` node.
    pub candidate_fanout: usize,
    /// Maximum candidate distance d (m).
    pub candidate_max_distance: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            geometry: GeometryParams::default(),
            intra_radius: 0.5,
            candidate_fanout: 5,
            candidate_max_distance: 2.0,
        }
    }
}

impl GraphParams {
    fn validate(&self) -> Result<(), GraphError> {
        if !(self.intra_radius >= 0.0 && self.intra_radius.is_finite()) {
            return Err(GraphError::InvalidParams(format!(
                "intra_radius = {}",
                self.intra_radius
            )));
        }
        if !(self.candidate_max_distance >= 0.0) {
            return Err(GraphError::InvalidParams(format!(
                "candidate_max_distance = {}",
                self.candidate_max_distance
            )));
        }
        if self.candidate_fanout == 0 {
            return Err(GraphError::InvalidParams("candidate_fanout = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CloudTag {
    /// Cloud at time `t` (candidate sources).
    Source,
    /// Cloud at time `t+1` (candidate targets).
    Target,
}

/// Stable node identifier: the node's position in the freshly built graph.
pub type NodeId = usize;
/// Stable candidate-edge identifier: its position in the freshly built graph.
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: NodeId,
    pub cloud: CloudTag,
    pub point_index: usize,
    pub class_id: ClassId,
    pub geometry: GeometricClass,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateEdge {
    pub id: EdgeId,
    /// Index into `nodes` of the cloud-`t` endpoint.
    pub source: usize,
    /// Index into `nodes` of the cloud-`t+1` endpoint.
    pub target: usize,
}

/// `nodes` holds cloud `t` first, then cloud `t+1`. Edge endpoints index
/// into `nodes`; ids survive masking.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub nodes: Vec<GraphNode>,
    /// Same-cloud pairs `(a, b)` with `a < b`, sorted.
    pub intra_edges: Vec<(usize, usize)>,
    /// Sorted by `(source, target)`.
    pub candidate_edges: Vec<CandidateEdge>,
}

impl SemanticGraph {
    pub fn source_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.cloud == CloudTag::Source).count()
    }

    pub fn edge_ids(&self) -> Vec<EdgeId> {
        self.candidate_edges.iter().map(|e| e.id).collect()
    }

    /// Candidate-edge positions grouped by source node, in edge order.
    pub fn candidates_by_source(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, edge) in self.candidate_edges.iter().enumerate() {
            groups.entry(edge.source).or_default().push(pos);
        }
        groups
    }

    /// Intra-edge adjacency lists (neighbor node indices, ascending).
    pub fn intra_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.intra_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Text dump: `node`, `intra` and `candidate` records, one per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        for n in &self.nodes {
            let cloud = match n.cloud {
                CloudTag::Source => "t",
                CloudTag::Target => "t+1",
            };
            let geometry = match n.geometry {
                GeometricClass::Corner => "corner",
                GeometricClass::Surface => "surface",
            };
            writeln!(out, "node {} {cloud} {} {} {geometry}", n.id, n.point_index, n.class_id)?;
        }
        for &(a, b) in &self.intra_edges {
            writeln!(out, "intra {} {}", self.nodes[a].id, self.nodes[b].id)?;
        }
        for e in &self.candidate_edges {
            writeln!(
                out,
                "candidate {} {} {}",
                e.id, self.nodes[e.source].id, self.nodes[e.target].id
            )?;
        }
        Ok(())
    }
}

type GroupKey = (ClassId, GeometricClass);

pub fn build_graph(
    cloud_t: &LabeledCloud,
    cloud_t1: &LabeledCloud,
    params: &GraphParams,
) -> Result<SemanticGraph, GraphError> {
    let geometry_t = classify_geometry(cloud_t, &params.geometry)?;
    let geometry_t1 = classify_geometry(cloud_t1, &params.geometry)?;
    build_graph_classified(cloud_t, &geometry_t, cloud_t1, &geometry_t1, params)
}

/// [`build_graph`] with precomputed geometry.
pub fn build_graph_classified(
    cloud_t: &LabeledCloud,
    geometry_t: &[PointGeometry],
    cloud_t1: &LabeledCloud,
    geometry_t1: &[PointGeometry],
    params: &GraphParams,
) -> Result<SemanticGraph, GraphError> {
    params.validate()?;
    assert_eq!(cloud_t.len(), geometry_t.len(), "geometry per point of cloud t");
    assert_eq!(cloud_t1.len(), geometry_t1.len(), "geometry per point of cloud t+1");

    let mut nodes = Vec::with_capacity(cloud_t.len() + cloud_t1.len());
    for (cloud, geometry, tag) in [
        (cloud_t, geometry_t, CloudTag::Source),
        (cloud_t1, geometry_t1, CloudTag::Target),
    ] {
        for (index, (point, geo)) in cloud.points.iter().zip(geometry).enumerate() {
            let class_id = point.label.ok_or(GraphError::Unlabeled {
                cloud: cloud.timestamp_index,
                index,
            })?;
            nodes.push(GraphNode {
                id: nodes.len(),
                cloud: tag,
                point_index: index,
                class_id,
                geometry: geo.class,
                position: point.position,
                normal: geo.normal,
                curvature: geo.curvature,
            });
        }
    }
    let n_t = cloud_t.len();

    let intra_edges = intra_edges(&nodes[..n_t], 0, params.intra_radius)
        .into_iter()
        .chain(intra_edges(&nodes[n_t..], n_t, params.intra_radius))
        .collect();

    // one tree per (class, geometry) group of cloud t+1
    let mut groups: BTreeMap<GroupKey, (Vec<Vector3<f64>>, Vec<usize>)> = BTreeMap::new();
    for node in &nodes[n_t..] {
        let entry = groups.entry((node.class_id, node.geometry)).or_default();
        entry.0.push(node.position);
        entry.1.push(node.id);
    }
    let trees: BTreeMap<_, KdTree> = groups
        .into_iter()
        .map(|(key, (points, ids))| (key, KdTree::with_ids(points, ids)))
        .collect();
    let max_d2 = params.candidate_max_distance * params.candidate_max_distance;
    let per_source: Vec<Vec<usize>> = nodes[..n_t]
        .par_iter()
        .map(|node| match trees.get(&(node.class_id, node.geometry)) {
            Some(tree) => {
                let mut targets: Vec<usize> = tree
                    .nearest(&node.position, params.candidate_fanout, max_d2)
                    .into_iter()
                    .map(|n| n.id)
                    .collect();
                targets.sort_unstable();
                targets
            }
            None => Vec::new(),
        })
        .collect();
    let candidate_edges: Vec<CandidateEdge> = per_source
        .into_iter()
        .enumerate()
        .flat_map(|(source, targets)| targets.into_iter().map(move |target| (source, target)))
        .enumerate()
        .map(|(id, (source, target))| CandidateEdge { id, source, target })
        .collect();
    if candidate_edges.is_empty() {
        return Err(GraphError::NoCandidates);
    }
    Ok(SemanticGraph {
        nodes,
        intra_edges,
        candidate_edges,
    })
}

fn intra_edges(nodes: &[GraphNode], offset: usize, radius: f64) -> Vec<(usize, usize)> {
    let mut by_class: BTreeMap<ClassId, (Vec<Vector3<f64>>, Vec<usize>)> = BTreeMap::new();
    for (k, node) in nodes.iter().enumerate() {
        let entry = by_class.entry(node.class_id).or_default();
        entry.0.push(node.position);
        entry.1.push(offset + k);
    }
    let r2 = radius * radius;
    let mut edges: Vec<(usize, usize)> = by_class
        .into_values()
        .flat_map(|(points, ids)| {
            let tree = KdTree::with_ids(points.clone(), ids.clone());
            points
                .par_iter()
                .zip(ids.par_iter())
                .flat_map_iter(|(p, &a)| {
                    tree.within(p, r2)
                        .into_iter()
                        .filter(move |n| n.id > a)
                        .map(move |n| (a, n.id))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    edges.sort_unstable();
    edges
}

/// Per-node input features, one row per node:
/// `position (3) | normal (3) | curvature | one-hot class | corner flag`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub matrix: DMatrix<f64>,
    pub class_count: usize,
}

impl NodeFeatures {
    pub const POSITION: usize = 0;
    pub const NORMAL: usize = 3;
    pub const CURVATURE: usize = 6;
    pub const ONE_HOT: usize = 7;

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn flag_column(&self) -> usize {
        Self::ONE_HOT + self.class_count
    }

    pub fn row(&self, node: usize) -> Vec<f64> {
        self.matrix.row(node).iter().copied().collect()
    }

    pub fn dim_for(class_count: usize) -> usize {
        Self::ONE_HOT + class_count + 1
    }
}

pub fn node_features(graph: &SemanticGraph, schema: &SemanticSchema) -> Result<NodeFeatures, GraphError> {
    let class_count = schema.len();
    let dim = NodeFeatures::dim_for(class_count);
    let mut matrix = DMatrix::zeros(graph.nodes.len(), dim);
    for (row, node) in graph.nodes.iter().enumerate() {
        let slot = schema
            .index_of(node.class_id)
            .ok_or(GraphError::UnknownClass(node.class_id))?;
        for k in 0..3 {
            matrix[(row, NodeFeatures::POSITION + k)] = node.position[k];
            matrix[(row, NodeFeatures::NORMAL + k)] = node.normal[k];
        }
        matrix[(row, NodeFeatures::CURVATURE)] = node.curvature;
        matrix[(row, NodeFeatures::ONE_HOT + slot)] = 1.0;
        matrix[(row, dim - 1)] = match node.geometry {
            GeometricClass::Corner => 1.0,
            GeometricClass::Surface => 0.0,
        };
    }
    Ok(NodeFeatures { matrix, class_count })
}

//! Graph construction over selected voxels.
//!
//! Nodes come from [`crate::uncertainty::select_nodes`]. Edges mix three
//! sources: face-neighbour edges between nodes, random "global" edges that
//! prefer other tumour parts, and extra edges for the uncertain test nodes.
//! All edges have unit weight.

mod edges;
mod features;
mod sparse;

pub use edges::{build_edges, Edge, EdgeConfig, EdgeCounts, EdgeList, EdgeSource, UncertainMode};
pub use features::{assemble_features, FeatureMatrix, FEATURE_COUNT};
pub use sparse::CsrMatrix;

use thiserror::Error;

use crate::uncertainty::NodeSet;
use crate::volume::{connected_components, Connectivity, Mask3, VolumeError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("the node set is empty")]
    EmptyNodeSet,
    #[error("edge ({a}, {b}) references a node outside 0..{n}")]
    EdgeOutOfBounds { a: u32, b: u32, n: usize },
    #[error("non-finite {channel} value {value} at voxel {voxel} (z, y, x = {coords:?})")]
    NonFinite {
        channel: &'static str,
        voxel: usize,
        coords: [usize; 3],
        value: f64,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Part id of every node: connected components of the binarised prediction,
/// numbered from 1. Nodes outside the prediction get part 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parts {
    pub ids: Vec<u32>,
    pub count: u32,
}

pub fn partition_parts(e_b: &Mask3, nodes: &NodeSet, connectivity: Connectivity) -> Parts {
    let labels = connected_components(e_b, connectivity);
    let ids = nodes.nodes().iter().map(|n| labels.get(n.voxel)).collect();
    Parts {
        ids,
        count: labels.count,
    }
}

/// Unit-weight adjacency together with its self-loop-augmented, symmetrically
/// normalised form `D̃^-1/2 (A + I) D̃^-1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    pub adjacency: CsrMatrix,
    pub normalized: CsrMatrix,
}

impl SparseGraph {
    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    /// Neighbour count of node `i` (without the self loop).
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).count()
    }
}

/// Build the adjacency and its normalised propagation matrix. Self loops in
/// the input are ignored and repeated edges count once.
pub fn normalize_adjacency(
    edges: impl IntoIterator<Item = (u32, u32)>,
    n: usize,
) -> Result<SparseGraph, GraphError> {
    let mut pairs = Vec::new();
    for (a, b) in edges {
        if a as usize >= n || b as usize >= n {
            return Err(GraphError::EdgeOutOfBounds { a, b, n });
        }
        if a != b {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let mut degree = vec![1usize; n];
    let mut triplets = Vec::with_capacity(2 * pairs.len());
    for &(a, b) in &pairs {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
        triplets.push((a, b, 1.0));
        triplets.push((b, a, 1.0));
    }
    let adjacency = CsrMatrix::from_triplets(n, triplets);

    let d: Vec<f64> = degree.iter().map(|&k| k as f64).collect();
    let mut norm = Vec::with_capacity(2 * pairs.len() + n);
    for (i, &di) in d.iter().enumerate() {
        norm.push((i as u32, i as u32, 1.0 / di));
    }
    for &(a, b) in &pairs {
        // Same expression for (a, b) and (b, a): exact symmetry.
        let w = 1.0 / (d[a as usize] * d[b as usize]).sqrt();
        norm.push((a, b, w));
        norm.push((b, a, w));
    }
    let normalized = CsrMatrix::from_triplets(n, norm);
    Ok(SparseGraph {
        adjacency,
        normalized,
    })
}

//! Voxelwise binary entropy and the certain/uncertain node split.
//!
//! Entropy uses base-2 logarithms so that it spans `[0, 1]` for two classes.
//! Voxels whose entropy exceeds `alpha` become unlabelled (test) nodes; the
//! remaining voxels with probability above `beta` are positive training
//! nodes, and a dilation shell around both sets supplies the negatives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{dilate, Grid, Mask3, StructuringElement, Volume3, VolumeError};

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("probability {value} at voxel {index} (z, y, x = {coords:?}) is outside [0, 1]")]
    OutOfDomain {
        index: usize,
        coords: [usize; 3],
        value: f64,
    },
    #[error("invalid selection config: {0}")]
    Config(String),
    #[error("node selection produced no {0} training nodes")]
    MissingClass(&'static str),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Binary entropy in bits, with `0 * log 0 = 0`.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { q * q.log2() } else { 0.0 };
    -(term(p) + term(1.0 - p))
}

fn check_probabilities(prob: &Volume3) -> Result<(), UncertaintyError> {
    let bad = (0..prob.len())
        .into_par_iter()
        .find_first(|&i| !(0.0..=1.0).contains(&prob.get(i)));
    match bad {
        Some(index) => Err(UncertaintyError::OutOfDomain {
            index,
            coords: prob.grid().coords(index),
            value: prob.get(index),
        }),
        None => Ok(()),
    }
}

/// Per-voxel binary entropy of a foreground probability map.
pub fn entropy_map(prob: &Volume3) -> Result<Volume3, UncertaintyError> {
    check_probabilities(prob)?;
    let data: Vec<f64> = (0..prob.len())
        .into_par_iter()
        .map(|i| binary_entropy(prob.get(i)))
        .collect();
    Ok(Volume3::from_f64(*prob.grid(), data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Greater,
    GreaterOrEqual,
}

/// Binarise `vol` against `t`. NaN voxels map to 0.
pub fn threshold_mask(vol: &Volume3, t: f64, cmp: Comparison) -> Mask3 {
    match cmp {
        Comparison::Greater => Mask3::from_fn(*vol.grid(), |i| vol.get(i) > t),
        Comparison::GreaterOrEqual => Mask3::from_fn(*vol.grid(), |i| vol.get(i) >= t),
    }
}

/// The open probability interval `(p_lo, p_hi)` on which binary entropy
/// exceeds `alpha`. Returns `None` when the interval is empty (`alpha >= 1`).
pub fn uncertain_band(alpha: f64) -> Option<(f64, f64)> {
    if alpha >= 1.0 {
        return None;
    }
    if alpha < 0.0 {
        return Some((0.0, 1.0));
    }
    // Entropy rises monotonically on [0, 0.5]; bisect for the crossing.
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binary_entropy(mid) > alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // `lo` is the largest probe with entropy <= alpha.
    Some((lo, 1.0 - lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub dilation: StructuringElement,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.5,
            dilation: StructuringElement::default(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), UncertaintyError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(UncertaintyError::Config(format!(
                "alpha = {} must lie in [0, 1]",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(UncertaintyError::Config(format!(
                "beta = {} must lie in (0, 1)",
                self.beta
            )));
        }
        if self.dilation.radius == 0 {
            return Err(UncertaintyError::Config(
                "dilation radius must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TrainPositive,
    TrainNegative,
    Test,
}

impl Role {
    /// Training label, or `None` for test nodes.
    pub fn label(self) -> Option<f64> {
        match self {
            Role::TrainPositive => Some(1.0),
            Role::TrainNegative => Some(0.0),
            Role::Test => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    /// Linear voxel index.
    pub voxel: usize,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub train_positive: usize,
    pub train_negative: usize,
    pub test: usize,
}

impl RoleCounts {
    pub fn total(&self) -> usize {
        self.train_positive + self.train_negative + self.test
    }
}

/// Graph nodes, sorted by voxel index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    grid: Grid,
    nodes: Vec<Node>,
    counts: RoleCounts,
}

impl NodeSet {
    /// Build from arbitrary `(voxel, role)` pairs. Fails on duplicate or
    /// out-of-bounds voxels.
    pub fn new(grid: Grid, mut nodes: Vec<Node>) -> Result<Self, UncertaintyError> {
        nodes.sort_unstable_by_key(|n| n.voxel);
        if let Some(n) = nodes.last() {
            if n.voxel >= grid.len() {
                return Err(UncertaintyError::Config(format!(
                    "node voxel {} is outside a volume of {} voxels",
                    n.voxel,
                    grid.len()
                )));
            }
        }
        if let Some(w) = nodes.windows(2).find(|w| w[0].voxel == w[1].voxel) {
            return Err(UncertaintyError::Config(format!(
                "voxel {} appears twice in the node set",
                w[0].voxel
            )));
        }
        let mut counts = RoleCounts::default();
        for n in &nodes {
            match n.role {
                Role::TrainPositive => counts.train_positive += 1,
                Role::TrainNegative => counts.train_negative += 1,
                Role::Test => counts.test += 1,
            }
        }
        Ok(Self {
            grid,
            nodes,
            counts,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn counts(&self) -> RoleCounts {
        self.counts
    }

    /// Node position of a voxel, if the voxel is a node.
    pub fn position(&self, voxel: usize) -> Option<usize> {
        self.nodes.binary_search_by_key(&voxel, |n| n.voxel).ok()
    }

    pub fn iter_role(&self, role: Role) -> impl Iterator<Item = (usize, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.role == role)
    }

    pub fn role_mask(&self, role: Role) -> Mask3 {
        Mask3::from_indices(self.grid, self.iter_role(role).map(|(_, n)| n.voxel))
    }
}

/// Output of node selection, including the intermediate maps.
#[derive(Debug, Clone)]
pub struct Selection {
    pub nodes: NodeSet,
    pub entropy: Volume3,
    /// `prob > beta`
    pub e_b: Mask3,
    /// `entropy > alpha`
    pub u_b: Mask3,
}

impl Selection {
    /// Classify voxels without requiring both training classes to be present.
    pub fn classify(prob: &Volume3, cfg: &SelectionConfig) -> Result<Self, UncertaintyError> {
        cfg.validate()?;
        let entropy = entropy_map(prob)?;
        let u_b = threshold_mask(&entropy, cfg.alpha, Comparison::Greater);
        let e_b = threshold_mask(prob, cfg.beta, Comparison::Greater);
        let union = e_b.union(&u_b)?;
        let shell = dilate(&union, cfg.dilation).difference(&union)?;

        let grid = *prob.grid();
        let nodes = (0..grid.len())
            .filter_map(|i| {
                let role = if u_b.get(i) {
                    Role::Test
                } else if e_b.get(i) {
                    Role::TrainPositive
                } else if shell.get(i) {
                    Role::TrainNegative
                } else {
                    return None;
                };
                Some(Node { voxel: i, role })
            })
            .collect();
        Ok(Self {
            nodes: NodeSet::new(grid, nodes)?,
            entropy,
            e_b,
            u_b,
        })
    }

    pub fn require_both_classes(&self) -> Result<(), UncertaintyError> {
        let c = self.nodes.counts();
        if c.train_positive == 0 {
            return Err(UncertaintyError::MissingClass("positive"));
        }
        if c.train_negative == 0 {
            return Err(UncertaintyError::MissingClass("negative"));
        }
        Ok(())
    }
}

/// Select graph nodes from a probability map.
///
/// Fails if either training class ends up empty. An empty test set is
/// allowed; refinement is then a no-op.
pub fn select_nodes(prob: &Volume3, cfg: &SelectionConfig) -> Result<Selection, UncertaintyError> {
    let sel = Selection::classify(prob, cfg)?;
    sel.require_both_classes()?;
    Ok(sel)
}

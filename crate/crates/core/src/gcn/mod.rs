//! Two-layer graph convolutional network for semi-supervised relabelling of
//! uncertain voxels.

mod model;
mod train;

pub use model::{
    bce_loss, gcn_forward, gcn_gradients, init_model, objective, ForwardPass, GcnModel, Gradients,
};
pub use train::{train_gcn, StopReason, TrainConfig, TrainReport};

use thiserror::Error;

use crate::uncertainty::{NodeSet, Role};
use crate::volume::Mask3;

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no labelled nodes to compute a loss over")]
    NoLabelledNodes,
    #[error("cannot train without {0} examples")]
    MissingClass(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
}

/// Default decision threshold on the sigmoid output.
pub const DEFAULT_TAU: f64 = 0.5;

/// Copy `e_b`, overwriting test voxels with `prediction >= tau`.
pub fn refine_segmentation(
    e_b: &Mask3,
    nodes: &NodeSet,
    predictions: &[f64],
    tau: f64,
) -> Result<Mask3, GcnError> {
    if predictions.len() != nodes.len() {
        return Err(GcnError::Shape(format!(
            "{} predictions for {} nodes",
            predictions.len(),
            nodes.len()
        )));
    }
    if e_b.dims() != nodes.grid().dims {
        return Err(GcnError::Shape(format!(
            "mask dims {:?} differ from node grid {:?}",
            e_b.dims(),
            nodes.grid().dims
        )));
    }
    let mut out = e_b.clone();
    for (i, node) in nodes.iter_role(Role::Test) {
        out.set(node.voxel, predictions[i] >= tau);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::Node;
    use crate::volume::Grid;

    fn fixture() -> (Mask3, NodeSet) {
        let grid = Grid::unit([1, 1, 6]).unwrap();
        let e_b = Mask3::from_indices(grid, [0, 1, 2]);
        let roles = [
            Role::TrainPositive,
            Role::Test,
            Role::Test,
            Role::Test,
            Role::TrainNegative,
        ];
        let nodes = NodeSet::new(
            grid,
            roles
                .iter()
                .enumerate()
                .map(|(voxel, &role)| Node { voxel, role })
                .collect(),
        )
        .unwrap();
        (e_b, nodes)
    }

    #[test]
    fn only_test_voxels_change() {
        let (e_b, nodes) = fixture();
        let out = refine_segmentation(&e_b, &nodes, &[0.0, 0.2, 0.5, 0.9, 1.0], 0.5).unwrap();
        assert_eq!(out.as_slice(), &[1, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn zero_predictions_drop_test_voxels() {
        let (e_b, nodes) = fixture();
        let out = refine_segmentation(&e_b, &nodes, &[0.0; 5], 0.5).unwrap();
        assert_eq!(out.as_slice(), &[1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn no_test_nodes_is_identity() {
        let grid = Grid::unit([1, 1, 3]).unwrap();
        let e_b = Mask3::from_indices(grid, [1]);
        let nodes = NodeSet::new(
            grid,
            vec![
                Node { voxel: 1, role: Role::TrainPositive },
                Node { voxel: 2, role: Role::TrainNegative },
            ],
        )
        .unwrap();
        assert_eq!(refine_segmentation(&e_b, &nodes, &[0.0, 1.0], 0.5).unwrap(), e_b);
    }
}

use super::GraphError;
use crate::linalg::Matrix;
use crate::uncertainty::NodeSet;
use crate::volume::Volume3;

pub const FEATURE_COUNT: usize = 4;

/// Node features, one row per node:
/// `[z-scored CT, z-scored PET, probability, entropy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    /// Wrap an `n x 4` matrix. Panics on a wrong column count.
    pub fn from_matrix(m: Matrix) -> Self {
        assert_eq!(m.cols(), FEATURE_COUNT, "feature matrix needs 4 columns");
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }
}

fn zscore(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Gather per-node features. CT and PET are z-scored over the node set
/// (population standard deviation); a constant channel becomes all zeros.
pub fn assemble_features(
    nodes: &NodeSet,
    ct: &Volume3,
    pet: &Volume3,
    prob: &Volume3,
    entropy: &Volume3,
) -> Result<FeatureMatrix, GraphError> {
    let grid = nodes.grid();
    let channels: [(&'static str, &Volume3); FEATURE_COUNT] =
        [("ct", ct), ("pet", pet), ("probability", prob), ("entropy", entropy)];
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(FEATURE_COUNT);
    for (channel, vol) in channels {
        grid.ensure_same_dims(vol.grid())?;
        let mut col = Vec::with_capacity(nodes.len());
        for node in nodes.nodes() {
            let value = vol.get(node.voxel);
            if !value.is_finite() {
                return Err(GraphError::NonFinite {
                    channel,
                    voxel: node.voxel,
                    coords: grid.coords(node.voxel),
                    value,
                });
            }
            col.push(value);
        }
        columns.push(col);
    }
    zscore(&mut columns[0]);
    zscore(&mut columns[1]);

    let n = nodes.len();
    let mut m = Matrix::zeros(n, FEATURE_COUNT);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(FeatureMatrix(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{Node, Role};
    use crate::volume::Grid;

    fn setup(ct: Vec<f64>) -> (NodeSet, Volume3, Volume3, Volume3, Volume3) {
        let grid = Grid::unit([1, 1, ct.len()]).unwrap();
        let nodes = NodeSet::new(
            grid,
            (0..ct.len())
                .map(|voxel| Node {
                    voxel,
                    role: Role::TrainNegative,
                })
                .collect(),
        )
        .unwrap();
        let n = ct.len();
        let prob: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        (
            nodes,
            Volume3::from_f64(grid, ct).unwrap(),
            Volume3::from_f64(grid, vec![3.0; n]).unwrap(),
            Volume3::from_f64(grid, prob).unwrap(),
            Volume3::from_f64(grid, vec![0.25; n]).unwrap(),
        )
    }

    #[test]
    fn zscore_of_pm_one() {
        let (nodes, ct, pet, prob, ent) = setup(vec![-1.0, 1.0]);
        let f = assemble_features(&nodes, &ct, &pet, &prob, &ent).unwrap();
        assert_eq!(f.matrix().column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_is_zero_and_prob_passes_through() {
        let (nodes, ct, pet, prob, ent) = setup(vec![5.0, 7.0, 9.0]);
        let f = assemble_features(&nodes, &ct, &pet, &prob, &ent).unwrap();
        assert_eq!(f.matrix().column(1), vec![0.0; 3]);
        assert_eq!(f.matrix().column(2), prob.to_f64_vec());
        assert_eq!(f.matrix().column(3), vec![0.25; 3]);
    }

    #[test]
    fn nan_is_reported_with_voxel() {
        let (nodes, ct, _, prob, ent) = setup(vec![0.0, 1.0]);
        let pet = Volume3::from_f64(*ct.grid(), vec![0.0, f64::NAN]).unwrap();
        let err = assemble_features(&nodes, &ct, &pet, &prob, &ent).unwrap_err();
        assert!(matches!(err, GraphError::NonFinite { channel: "pet", voxel: 1, .. }));
    }
}

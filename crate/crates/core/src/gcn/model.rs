use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GcnError, TrainConfig};
use crate::graph::{FeatureMatrix, SparseGraph, FEATURE_COUNT};
use crate::linalg::Matrix;
use crate::uncertainty::NodeSet;

/// Two-layer GCN: `sigmoid(N · relu(N · X · W0) · W1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    /// `4 x hidden`
    pub w0: Matrix,
    /// `hidden x 1`
    pub w1: Matrix,
}

impl GcnModel {
    pub fn hidden(&self) -> usize {
        self.w0.cols()
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            w0: Matrix::zeros(FEATURE_COUNT, hidden),
            w1: Matrix::zeros(hidden, 1),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w1.is_finite()
    }
}

/// Glorot-uniform initialisation: entries of a `fan_in x fan_out` matrix are
/// uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn init_model(hidden: usize, seed: u64) -> GcnModel {
    assert!(hidden >= 1, "hidden width must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Matrix::from_vec(rows, cols, data)
    };
    let w0 = glorot(FEATURE_COUNT, hidden);
    let w1 = glorot(hidden, 1);
    GcnModel { w0, w1 }
}

/// Sigmoid kept strictly inside `(0, 1)` even where `f64` would round to an
/// endpoint.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Activations kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub predictions: Vec<f64>,
    pub logits: Vec<f64>,
    /// `relu(N X W0)`, `n x hidden`
    pub hidden: Matrix,
    /// `N X W0` before the ReLU
    pub pre_activation: Matrix,
}

fn check_shapes(model: &GcnModel, g: &SparseGraph, x: &FeatureMatrix) -> Result<(), GcnError> {
    if x.rows() != g.n() {
        return Err(GcnError::Shape(format!(
            "feature matrix has {} rows but the graph has {} nodes",
            x.rows(),
            g.n()
        )));
    }
    if model.w0.rows() != FEATURE_COUNT || model.w1.rows() != model.w0.cols() || model.w1.cols() != 1 {
        return Err(GcnError::Shape(format!(
            "weights {:?} and {:?} do not chain 4 -> h -> 1",
            model.w0.shape(),
            model.w1.shape()
        )));
    }
    Ok(())
}

pub fn gcn_forward(model: &GcnModel, g: &SparseGraph, x: &FeatureMatrix) -> Result<ForwardPass, GcnError> {
    check_shapes(model, g, x)?;
    let pre_activation = g.normalized.matmul(&x.matrix().matmul(&model.w0));
    let hidden = pre_activation.map(|v| v.max(0.0));
    let logits = g.normalized.matmul(&hidden.matmul(&model.w1)).column(0);
    let predictions = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardPass {
        predictions,
        logits,
        hidden,
        pre_activation,
    })
}

fn labelled(nodes: &NodeSet) -> impl Iterator<Item = (usize, f64)> + '_ {
    nodes
        .nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.role.label().map(|y| (i, y)))
}

/// Mean weighted binary cross-entropy over the training nodes.
/// Test nodes contribute nothing.
pub fn bce_loss(predictions: &[f64], nodes: &NodeSet, pos_weight: f64) -> Result<f64, GcnError> {
    if predictions.len() != nodes.len() {
        return Err(GcnError::Shape(format!(
            "{} predictions for {} nodes",
            predictions.len(),
            nodes.len()
        )));
    }
    let (mut sum, mut m) = (0.0, 0usize);
    for (i, y) in labelled(nodes) {
        let p = predictions[i];
        sum -= if y == 1.0 { pos_weight * p.ln() } else { (1.0 - p).ln() };
        m += 1;
    }
    if m == 0 {
        return Err(GcnError::NoLabelledNodes);
    }
    Ok(sum / m as f64)
}

/// Same loss evaluated from logits via `softplus`, accurate when the sigmoid
/// saturates.
fn bce_from_logits(logits: &[f64], nodes: &NodeSet, pos_weight: f64) -> Result<f64, GcnError> {
    let (mut sum, mut m) = (0.0, 0usize);
    for (i, y) in labelled(nodes) {
        let z = logits[i];
        // -log σ(z) = softplus(-z), -log(1 - σ(z)) = softplus(z)
        sum += if y == 1.0 { pos_weight * softplus(-z) } else { softplus(z) };
        m += 1;
    }
    if m == 0 {
        return Err(GcnError::NoLabelledNodes);
    }
    Ok(sum / m as f64)
}

/// Regularised objective `bce + λ(‖W0‖² + ‖W1‖²)`.
pub fn objective(
    model: &GcnModel,
    g: &SparseGraph,
    x: &FeatureMatrix,
    nodes: &NodeSet,
    cfg: &TrainConfig,
) -> Result<f64, GcnError> {
    let fwd = gcn_forward(model, g, x)?;
    Ok(bce_from_logits(&fwd.logits, nodes, cfg.pos_weight)? + l2_penalty(model, cfg.weight_decay))
}

fn l2_penalty(model: &GcnModel, weight_decay: f64) -> f64 {
    weight_decay * (model.w0.squared_norm() + model.w1.squared_norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dw0: Matrix,
    pub dw1: Matrix,
    /// Regularised objective at the evaluated weights.
    pub loss: f64,
}

/// Analytic gradients of the regularised objective with respect to both
/// weight matrices. The ReLU derivative at exactly 0 is taken as 0.
pub fn gcn_gradients(
    model: &GcnModel,
    g: &SparseGraph,
    x: &FeatureMatrix,
    nodes: &NodeSet,
    cfg: &TrainConfig,
) -> Result<Gradients, GcnError> {
    let fwd = gcn_forward(model, g, x)?;
    let data_loss = bce_from_logits(&fwd.logits, nodes, cfg.pos_weight)?;
    let n = g.n();
    let m = labelled(nodes).count() as f64;

    // dL/dlogit for each node: (σ(z)(w·y + 1 - y) - w·y) / m
    let mut d_logits = Matrix::zeros(n, 1);
    for (i, y) in labelled(nodes) {
        let p = sigmoid_unclamped(fwd.logits[i]);
        let wy = cfg.pos_weight * y;
        d_logits[(i, 0)] = (p * (wy + 1.0 - y) - wy) / m;
    }
    // N is symmetric, so Nᵀ·G = N·G.
    let back2 = g.normalized.matmul(&d_logits);
    let mut dw1 = fwd.hidden.t_matmul(&back2);
    let mut d_hidden = back2.matmul_t(&model.w1);
    for (d, &z) in d_hidden
        .as_mut_slice()
        .iter_mut()
        .zip(fwd.pre_activation.as_slice())
    {
        if z <= 0.0 {
            *d = 0.0;
        }
    }
    let back1 = g.normalized.matmul(&d_hidden);
    let mut dw0 = x.matrix().t_matmul(&back1);

    dw0.add_scaled(&model.w0, 2.0 * cfg.weight_decay);
    dw1.add_scaled(&model.w1, 2.0 * cfg.weight_decay);
    Ok(Gradients {
        dw0,
        dw1,
        loss: data_loss + l2_penalty(model, cfg.weight_decay),
    })
}

#[inline]
fn sigmoid_unclamped(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

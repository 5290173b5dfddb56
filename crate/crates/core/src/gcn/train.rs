use serde::{Deserialize, Serialize};

use super::model::{gcn_gradients, init_model, objective, GcnModel};
use super::GcnError;
use crate::graph::{FeatureMatrix, SparseGraph};
use crate::linalg::Matrix;
use crate::uncertainty::NodeSet;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 coefficient applied to both weight matrices.
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without a `min_delta` improvement.
    pub patience: usize,
    pub min_delta: f64,
    pub pos_weight: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 200,
            patience: 20,
            min_delta: 1e-6,
            pos_weight: 1.0,
            hidden: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        let bad = |msg: String| Err(GcnError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay = {} must be >= 0", self.weight_decay));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta = {} must be >= 0", self.min_delta));
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return bad(format!("pos_weight = {} must be positive", self.pos_weight));
        }
        if self.hidden == 0 {
            return bad("hidden width must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective at the start of each epoch, before its update.
    pub losses: Vec<f64>,
    pub epochs: usize,
    /// Objective of the returned model.
    pub final_loss: f64,
    pub stop_reason: StopReason,
}

struct AdamState {
    m: Matrix,
    v: Matrix,
}

impl AdamState {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: Matrix::zeros(shape.0, shape.1),
            v: Matrix::zeros(shape.0, shape.1),
        }
    }

    fn step(&mut self, w: &mut Matrix, grad: &Matrix, lr: f64, t: i32) {
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let (m, v) = (self.m.as_mut_slice(), self.v.as_mut_slice());
        for (k, (wk, &g)) in w.as_mut_slice().iter_mut().zip(grad.as_slice()).enumerate() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *wk -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Full-batch Adam on the regularised objective, from a Glorot
/// initialisation seeded by `cfg.seed`.
pub fn train_gcn(
    g: &SparseGraph,
    x: &FeatureMatrix,
    nodes: &NodeSet,
    cfg: &TrainConfig,
) -> Result<(GcnModel, TrainReport), GcnError> {
    cfg.validate()?;
    let counts = nodes.counts();
    if counts.train_positive == 0 {
        return Err(GcnError::MissingClass("positive"));
    }
    if counts.train_negative == 0 {
        return Err(GcnError::MissingClass("negative"));
    }

    let mut model = init_model(cfg.hidden, cfg.seed);
    let mut adam0 = AdamState::new(model.w0.shape());
    let mut adam1 = AdamState::new(model.w1.shape());
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..cfg.max_epochs {
        let grads = gcn_gradients(&model, g, x, nodes, cfg)?;
        if !grads.loss.is_finite() {
            return Err(GcnError::Divergence {
                epoch,
                loss: grads.loss,
            });
        }
        losses.push(grads.loss);
        if grads.loss < best - cfg.min_delta {
            best = grads.loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
        let t = epoch as i32 + 1;
        adam0.step(&mut model.w0, &grads.dw0, cfg.learning_rate, t);
        adam1.step(&mut model.w1, &grads.dw1, cfg.learning_rate, t);
        if !model.is_finite() {
            return Err(GcnError::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
    }

    let final_loss = objective(&model, g, x, nodes, cfg)?;
    if !final_loss.is_finite() {
        return Err(GcnError::Divergence {
            epoch: losses.len(),
            loss: final_loss,
        });
    }
    let report = TrainReport {
        epochs: losses.len(),
        losses,
        final_loss,
        stop_reason,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(GcnError::Config(_))));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut w = Matrix::from_vec(1, 2, vec![1.0, -1.0]);
        let g = Matrix::from_vec(1, 2, vec![0.5, -2.0]);
        let mut st = AdamState::new((1, 2));
        st.step(&mut w, &g, 0.1, 1);
        assert!((w[(0, 0)] - 0.9).abs() < 1e-7);
        assert!((w[(0, 1)] + 0.9).abs() < 1e-7);
    }
}

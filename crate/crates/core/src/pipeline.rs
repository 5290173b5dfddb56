//! End-to-end refinement: node selection, parts, edges, features, training
//! and relabelling of the uncertain voxels.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcn::{gcn_forward, refine_segmentation, train_gcn, GcnError, StopReason, TrainConfig, DEFAULT_TAU};
use crate::graph::{
    assemble_features, build_edges, normalize_adjacency, partition_parts, EdgeConfig, EdgeCounts, GraphError,
};
use crate::uncertainty::{select_nodes, RoleCounts, SelectionConfig, UncertaintyError};
use crate::volume::{Connectivity, Mask3, Volume3, VolumeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input volumes: {0}")]
    Input(#[from] VolumeError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("node selection: {0}")]
    Selection(#[from] UncertaintyError),
    #[error("graph construction: {0}")]
    Graph(#[from] GraphError),
    #[error("training: {0}")]
    Training(#[from] GcnError),
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Every knob of a refinement run.
///
/// The edge and training seeds are derived from `seed` (`seed` and
/// `seed + 1`); seeds inside `edges` and `train` are overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub edges: EdgeConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub part_connectivity: Connectivity,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            selection: SelectionConfig::default(),
            edges: EdgeConfig::default(),
            train: TrainConfig::default(),
            part_connectivity: Connectivity::Full26,
            tau: DEFAULT_TAU,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.selection.validate()?;
        self.train.validate()?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(PipelineError::Config(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        Ok(())
    }

    /// Sub-configs with their seeds derived from the top-level seed.
    pub fn seeded(&self) -> (EdgeConfig, TrainConfig) {
        let edges = EdgeConfig {
            seed: self.seed,
            ..self.edges
        };
        let train = TrainConfig {
            seed: self.seed.wrapping_add(1),
            ..self.train
        };
        (edges, train)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipCounts {
    /// Test voxels in the initial mask that the model removed.
    pub removed: usize,
    /// Test voxels outside the initial mask that the model added.
    pub added: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub selection_ms: f64,
    pub graph_ms: f64,
    pub training_ms: f64,
    pub refinement_ms: f64,
}

/// Machine-readable summary of one run. Everything except `timings` is a
/// deterministic function of the inputs and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub nodes: RoleCounts,
    pub parts: u32,
    pub edges: EdgeCounts,
    pub training_skipped: bool,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub flips: FlipCounts,
    pub timings: StageTimings,
}

impl RunReport {
    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: StageTimings::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub refined: Mask3,
    /// `prob > beta`
    pub initial: Mask3,
    pub report: RunReport,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn run_refinement(
    ct: &Volume3,
    pet: &Volume3,
    prob: &Volume3,
    cfg: &PipelineConfig,
) -> Result<Refinement, PipelineError> {
    cfg.validate()?;
    prob.grid().ensure_same(ct.grid())?;
    prob.grid().ensure_same(pet.grid())?;
    let (edge_cfg, train_cfg) = cfg.seeded();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let sel = select_nodes(prob, &cfg.selection)?;
    timings.selection_ms = ms(t);
    let initial = sel.e_b.clone();
    let counts = sel.nodes.counts();

    if counts.test == 0 {
        log::info!("no uncertain voxels; skipping graph construction and training");
        return Ok(Refinement {
            refined: initial.clone(),
            initial,
            report: RunReport {
                nodes: counts,
                parts: 0,
                edges: EdgeCounts::default(),
                training_skipped: true,
                epochs: 0,
                final_loss: None,
                stop_reason: None,
                flips: FlipCounts::default(),
                timings,
            },
        });
    }

    let t = Instant::now();
    let parts = partition_parts(&sel.e_b, &sel.nodes, cfg.part_connectivity);
    let edges = build_edges(&sel.nodes, &parts, &edge_cfg)?;
    let graph = normalize_adjacency(edges.pairs(), sel.nodes.len())?;
    let features = assemble_features(&sel.nodes, ct, pet, prob, &sel.entropy)?;
    timings.graph_ms = ms(t);

    let t = Instant::now();
    let (model, train_report) = train_gcn(&graph, &features, &sel.nodes, &train_cfg)?;
    timings.training_ms = ms(t);

    let t = Instant::now();
    let fwd = gcn_forward(&model, &graph, &features)?;
    let refined = refine_segmentation(&initial, &sel.nodes, &fwd.predictions, cfg.tau)?;
    let mut flips = FlipCounts::default();
    for (before, after) in initial.as_slice().iter().zip(refined.as_slice()) {
        match (before, after) {
            (1, 0) => flips.removed += 1,
            (0, 1) => flips.added += 1,
            _ => {}
        }
    }
    timings.refinement_ms = ms(t);

    Ok(Refinement {
        refined,
        initial,
        report: RunReport {
            nodes: counts,
            parts: parts.count,
            edges: edges.counts(),
            training_skipped: false,
            epochs: train_report.epochs,
            final_loss: Some(train_report.final_loss),
            stop_reason: Some(train_report.stop_reason),
            flips,
            timings,
        },
    })
}

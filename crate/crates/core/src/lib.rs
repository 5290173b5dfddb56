//! Uncertainty-guided graph-convolutional refinement of 3D tumour
//! segmentations.
//!
//! A segmentation network's foreground probability map is split into
//! confident voxels (used as labels) and uncertain voxels (to be relabelled).
//! Both become nodes of a sparse graph with local face-neighbour edges and
//! random long-range edges; a two-layer GCN trained on the confident nodes
//! then predicts the uncertain ones.
//!
//! ```no_run
//! use voxelgraph::pipeline::{run_refinement, PipelineConfig};
//! use voxelgraph::volume::load_volume;
//!
//! let ct = load_volume("ct.nii")?;
//! let pet = load_volume("pet.nii")?;
//! let prob = load_volume("prob.nii")?;
//! let out = run_refinement(&ct, &pet, &prob, &PipelineConfig::default())?;
//! println!("{} voxels removed", out.report.flips.removed);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod parallel;
pub mod phantom;
pub mod pipeline;
pub mod uncertainty;
pub mod volume;

//! `voxelgraph` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime or training error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use voxelgraph::metrics::evaluate;
use voxelgraph::parallel::{threads_from_env, with_threads};
use voxelgraph::phantom::{generate_phantom, PhantomSpec};
use voxelgraph::pipeline::{run_refinement, PipelineConfig, PipelineError};
use voxelgraph::uncertainty::{uncertain_band, Role, Selection};
use voxelgraph::volume::{connected_components, load_volume, save_volume, Mask3, Volume3};

#[derive(Parser)]
#[command(name = "voxelgraph", version, about = "Graph-based refinement of 3D segmentation probability maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine a probability map with a GCN trained on its confident voxels.
    Refine {
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        pet: PathBuf,
        #[arg(long)]
        prob: PathBuf,
        /// Pipeline configuration (JSON); omitted fields take defaults.
        #[arg(long)]
        config: PathBuf,
        /// Refined mask (NIfTI).
        #[arg(long)]
        out: PathBuf,
        /// Run report (JSON).
        #[arg(long)]
        report: PathBuf,
        /// Also write the thresholded input mask.
        #[arg(long)]
        initial_out: Option<PathBuf>,
    },
    /// Dice, HD95 and ASSD of a predicted mask against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Voxel spacing "sz,sy,sx" in mm, overriding the file headers.
        #[arg(long)]
        spacing: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic ct/pet/gt/prob phantom.
    Phantom {
        /// Phantom spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Count graph nodes per role without training.
    InspectNodes {
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for train_positive.nii, train_negative.nii and test.nii.
        #[arg(long)]
        masks_out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{what} {}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    fs::write(path, text + "\n").map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Volume3, Failure> {
    load_volume(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn save(vol: &Volume3, path: &Path) -> Result<(), Failure> {
    save_volume(vol, path).map_err(|e| Failure::Runtime(e.to_string()))
}

fn load_config(path: &Path) -> Result<PipelineConfig, Failure> {
    let cfg: PipelineConfig = read_json(path, "config")?;
    cfg.validate().map_err(|e| Failure::Data(format!("config {}: {e}", path.display())))?;
    Ok(cfg)
}

fn parse_spacing(s: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Failure::Usage(format!("--spacing {s:?}: expected three positive numbers \"sz,sy,sx\""));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse::<f64>().map_err(|_| bad())?;
        if !(slot.is_finite() && *slot > 0.0) {
            return Err(bad());
        }
    }
    Ok(out)
}

fn refine(
    ct: &Path,
    pet: &Path,
    prob: &Path,
    config: &Path,
    out: &Path,
    report: &Path,
    initial_out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let (ct, pet, prob) = (load(ct)?, load(pet)?, load(prob)?);
    let result = run_refinement(&ct, &pet, &prob, &cfg).map_err(|e| match e {
        PipelineError::Training(_) => Failure::Runtime(e.to_string()),
        _ => Failure::Data(e.to_string()),
    })?;
    save(&result.refined.to_volume(), out)?;
    if let Some(path) = initial_out {
        save(&result.initial.to_volume(), path)?;
    }
    write_json(&result.report, report)?;
    let r = &result.report;
    let loss = r.final_loss.map_or("n/a".to_string(), |l| format!("{l:.6}"));
    println!(
        "nodes +{} -{} ?{} | flips 1->0 {} 0->1 {} | epochs {} | final loss {loss}",
        r.nodes.train_positive, r.nodes.train_negative, r.nodes.test, r.flips.removed, r.flips.added, r.epochs
    );
    Ok(())
}

fn evaluate_cmd(pred: &Path, gt: &Path, spacing: Option<&str>, out: &Path) -> Result<(), Failure> {
    let override_spacing = spacing.map(parse_spacing).transpose()?;
    let pred_vol = load(pred)?;
    let gt_vol = load(gt)?;
    let as_mask = |vol: &Volume3, path: &Path| {
        Mask3::from_binary_volume(vol).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    };
    let pred_mask = as_mask(&pred_vol, pred)?;
    let gt_mask = as_mask(&gt_vol, gt)?;
    if pred_mask.dims() != gt_mask.dims() {
        return Err(Failure::Data(format!(
            "mask dims differ: pred {:?}, gt {:?}",
            pred_mask.dims(),
            gt_mask.dims()
        )));
    }
    let spacing = match override_spacing {
        Some(s) => s,
        None if pred_mask.spacing() == gt_mask.spacing() => gt_mask.grid().spacing_f64(),
        None => {
            return Err(Failure::Data(format!(
                "header spacings differ (pred {:?}, gt {:?}); pass --spacing",
                pred_mask.spacing(),
                gt_mask.spacing()
            )))
        }
    };
    let report = evaluate(&pred_mask, &gt_mask, spacing).map_err(|e| Failure::Data(e.to_string()))?;
    write_json(&report, out)?;
    println!("dice {:.6} hd95 {:?} assd {:?}", report.dice, report.hd95, report.assd);
    Ok(())
}

fn phantom(spec: &Path, out: &Path) -> Result<(), Failure> {
    let spec: PhantomSpec = read_json(spec, "phantom spec")?;
    let p = generate_phantom(&spec).map_err(|e| Failure::Data(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.display())))?;
    for (name, vol) in [("ct", &p.ct), ("pet", &p.pet), ("gt", &p.gt.to_volume()), ("prob", &p.prob)] {
        save(vol, &out.join(format!("{name}.nii")))?;
    }
    println!("lesion voxels {} | false-positive voxels {}", p.gt.count(), p.false_positive.count());
    Ok(())
}

#[derive(Serialize)]
struct NodeSummary {
    train_positive: usize,
    train_negative: usize,
    test: usize,
    part_count: u32,
    /// `[p_lo, p_hi]`, or null when the band is empty.
    band: Option<[f64; 2]>,
}

fn inspect_nodes(prob: &Path, config: &Path, out: &Path, masks_out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let prob = load(prob)?;
    let sel = Selection::classify(&prob, &cfg.selection).map_err(|e| Failure::Data(e.to_string()))?;
    if let Err(e) = sel.require_both_classes() {
        log::warn!("{e}; refine would fail on this input");
    }
    let counts = sel.nodes.counts();
    let summary = NodeSummary {
        train_positive: counts.train_positive,
        train_negative: counts.train_negative,
        test: counts.test,
        part_count: connected_components(&sel.e_b, cfg.part_connectivity).count,
        band: uncertain_band(cfg.selection.alpha).map(|(lo, hi)| [lo, hi]),
    };
    if let Some(dir) = masks_out {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
        for (name, role) in [
            ("train_positive", Role::TrainPositive),
            ("train_negative", Role::TrainNegative),
            ("test", Role::Test),
        ] {
            save(&sel.nodes.role_mask(role).to_volume(), &dir.join(format!("{name}.nii")))?;
        }
    }
    write_json(&summary, out)?;
    println!(
        "train_positive {} train_negative {} test {} parts {}",
        summary.train_positive, summary.train_negative, summary.test, summary.part_count
    );
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Refine { ct, pet, prob, config, out, report, initial_out } => {
            refine(&ct, &pet, &prob, &config, &out, &report, initial_out.as_deref())
        }
        Command::Evaluate { pred, gt, spacing, out } => evaluate_cmd(&pred, &gt, spacing.as_deref(), &out),
        Command::Phantom { spec, out } => phantom(&spec, &out),
        Command::InspectNodes { prob, config, out, masks_out } => {
            inspect_nodes(&prob, &config, &out, masks_out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = threads_from_env()
        .map_err(Failure::Usage)
        .and_then(|threads| with_threads(threads, || dispatch(cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

//! Generate a phantom with one lesion and one uncertain false-positive blob,
//! refine it and print Dice before and after.
//!
//! cargo run --release -p voxelgraph --example phantom_refine [seed]

use voxelgraph::metrics::evaluate;
use voxelgraph::phantom::{generate_phantom, FalsePositive, Lesion, PhantomSpec};
use voxelgraph::pipeline::{run_refinement, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut spec = PhantomSpec::empty([48, 48, 48], [1.0, 1.0, 1.0], seed);
    spec.lesions.push(Lesion { center: [15.0, 15.0, 15.0], radii: [6.0, 5.0, 5.5], pet_intensity: 6.0 });
    spec.false_positives.push(FalsePositive {
        center: [34.0, 33.0, 32.0],
        radii: [4.0, 3.5, 4.0],
        prob_level: 0.65,
        pet_intensity: 0.0,
    });
    spec.noise_sd = 0.02;
    let p = generate_phantom(&spec)?;

    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    let out = run_refinement(&p.ct, &p.pet, &p.prob, &cfg)?;
    let spacing = p.gt.grid().spacing_f64();
    let before = evaluate(&out.initial, &p.gt, spacing)?;
    let after = evaluate(&out.refined, &p.gt, spacing)?;
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    println!("dice {:.4} -> {:.4}", before.dice, after.dice);
    println!("hd95 {:?} -> {:?}", before.hd95, after.hd95);
    Ok(())
}

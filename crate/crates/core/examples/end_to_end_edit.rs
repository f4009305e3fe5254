// Replace the elephant with a zebra in the synthetic demo clip and print
// the edit report.

use noise_edit::eiam::{demo, Instruction, MockBackend};
use noise_edit::pipeline::{run_edit, EditConfig, EditRequest};
use noise_edit::AnalyticGaussian;

pub fn run_example() -> noise_edit::Result<()> {
    let set = demo::demo_set()?;
    let cfg = EditConfig {
        world_sigma: demo::SIGMA,
        seed: 7,
        ..EditConfig::default()
    };
    let denoiser = AnalyticGaussian::new(set.world.clone(), cfg.schedule()?);
    let backend = MockBackend::new(set.fixtures.clone());
    let outcome = run_edit(
        &set.source,
        EditRequest::Instruction {
            backend: &backend,
            video_ref: demo::VIDEO_REF.into(),
            instruction: Instruction::new(demo::INSTRUCTION)?,
        },
        &cfg,
        &denoiser,
        Some(&set.world),
    )?;
    println!("{} -> {}", outcome.prompts.source, outcome.prompts.target);
    println!("{}", outcome.report.to_json());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

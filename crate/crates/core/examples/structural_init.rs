// Build the two noisy branches for a masked clip and blend them into the
// starting state of the edit.

use noise_edit::maskops::FarField;
use noise_edit::rng::NoiseSource;
use noise_edit::snis::{self, BranchContext, InpaintMode, InversionSource, Prompts, SnisConfig};
use noise_edit::{
    AnalyticGaussian, ConditioningVector, EditMask, GaussianWorld, NoiseSchedule, Sampler, SamplerKind, ScheduleKind,
    Shape,
};

pub fn run_example() -> noise_edit::Result<()> {
    let shape = Shape::new(2, 2, 32, 32)?;
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 100)?;
    let sampler = Sampler::new(schedule.clone(), SamplerKind::Ddim);
    let world = GaussianWorld::new(0.5)?
        .with_mean(0, noise_edit::LatentVolume::filled(shape, 1.0))?
        .with_mean(1, noise_edit::LatentVolume::filled(shape, -1.0))?;
    let denoiser = AnalyticGaussian::new(world, schedule);
    let z0 = NoiseSource::new(3)
        .gaussian("example/z0", shape)
        .map(|v| 1.0 + 0.5 * v)?;
    let mask = EditMask::from_fn(shape.plane_shape(), |_, y, x| {
        (12..20).contains(&y) && (12..20).contains(&x)
    })?;
    let prompts = Prompts {
        source: ConditioningVector::one_hot(8, 0)?,
        target: ConditioningVector::one_hot(8, 1)?,
    };
    let cfg = SnisConfig {
        t_start: 95,
        tau: 5,
        transition_width: 16.0,
        seed: 42,
        inpaint: InpaintMode::None,
        inversion_source: InversionSource::Original,
        far_field: FarField::Zero,
    };
    let branches = snis::prepare_branches(
        &z0,
        &mask,
        &cfg,
        BranchContext {
            sampler: &sampler,
            denoiser: &denoiser,
            prompts: &prompts,
            inpainter: None,
            inversion_depth: 85,
        },
    )?;
    let init = snis::structural_init(
        &branches.random_at_t,
        &branches.inversion_at_t,
        &mask,
        cfg.transition_width,
    )?;

    println!("trajectory holds steps 0..={}", branches.trajectory.last_step());
    println!("row 16 of frame 0, channel 0 at t = {}:", cfg.t_start);
    println!("{:>3} {:>9} {:>9} {:>9}", "x", "random", "inverted", "blended");
    for x in (0..32).step_by(4) {
        println!(
            "{x:>3} {:>9.4} {:>9.4} {:>9.4}",
            branches.random_at_t.get(0, 0, 16, x),
            branches.inversion_at_t.get(0, 0, 16, x),
            init.get(0, 0, 16, x)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

// Invert a clean latent with DDIM under the analytic Gaussian denoiser,
// denoise it back, and report the reconstruction error for a few step
// counts (with and without fixed-point refinement of the inversion).

use noise_edit::rng::NoiseSource;
use noise_edit::{
    AnalyticGaussian, ConditioningVector, GaussianWorld, NoiseSchedule, Sampler, SamplerKind, ScheduleKind, Shape,
};

pub fn run_example() -> noise_edit::Result<()> {
    let shape = Shape::new(4, 2, 16, 16)?;
    let mean = NoiseSource::new(1).gaussian("example/mean", shape);
    let world = GaussianWorld::new(0.5)?.with_mean(0, mean.clone())?;
    let z0 = mean.linear_combination(1.0, &NoiseSource::new(2).gaussian("example/z0", shape), 0.5)?;
    let cond = ConditioningVector::one_hot(8, 0)?;

    println!("{:>5} {:>14} {:>14}", "T", "first order", "3 refinements");
    for steps in [25, 50, 100, 200] {
        let schedule = NoiseSchedule::new(ScheduleKind::Linear, steps)?;
        let sampler = Sampler::new(schedule.clone(), SamplerKind::Ddim);
        let denoiser = AnalyticGaussian::new(world.clone(), schedule);
        let mut errs = Vec::new();
        for iterations in [0, 3] {
            let traj = sampler.invert_corrected(&z0, steps, &denoiser, &cond, iterations)?;
            let back = sampler.denoise(traj.entry(steps)?, steps, 0, &denoiser, &cond)?;
            let diff = back.linear_combination(1.0, &z0, -1.0)?;
            errs.push(diff.norm() / z0.norm());
        }
        println!("{steps:>5} {:>14.4e} {:>14.4e}", errs[0], errs[1]);
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

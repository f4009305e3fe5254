// Guided denoising: trace which trajectory entries pin the unedited
// region, and how far the background drifts with and without guidance.

use noise_edit::ngm::{guided_denoise_observed, Guidance, GuidanceWindow, Pairing};
use noise_edit::rng::NoiseSource;
use noise_edit::volume::masked_select;
use noise_edit::{
    AnalyticGaussian, ConditioningVector, EditMask, GaussianWorld, NoiseSchedule, Sampler, SamplerKind, ScheduleKind,
    Shape,
};

pub fn run_example() -> noise_edit::Result<()> {
    let shape = Shape::new(2, 2, 24, 24)?;
    let schedule = NoiseSchedule::new(ScheduleKind::Linear, 100)?;
    let sampler = Sampler::new(schedule.clone(), SamplerKind::Ddim);
    let mean = NoiseSource::new(1).gaussian("example/mean", shape);
    let world = GaussianWorld::new(0.5)?.with_mean(0, mean.clone())?;
    let denoiser = AnalyticGaussian::new(world, schedule);
    let cond = ConditioningVector::one_hot(8, 0)?;
    let z0 = mean.linear_combination(1.0, &NoiseSource::new(2).gaussian("example/z0", shape), 0.5)?;
    let mask = EditMask::from_fn(shape.plane_shape(), |_, y, x| {
        (8..16).contains(&y) && (8..16).contains(&x)
    })?;

    let window = GuidanceWindow::from_fractions(0.48, 0.85, 100)?;
    let trajectory = sampler.invert(&z0, window.hi().max(95), &denoiser, &cond)?;
    let start = NoiseSource::new(3).gaussian("example/start", shape);
    let background = mask.invert();
    let drift = |v: &noise_edit::LatentVolume| -> noise_edit::Result<f64> {
        let only_bg = masked_select(&background, v, &z0)?;
        Ok(only_bg.linear_combination(1.0, &z0, -1.0)?.norm())
    };

    for (label, w) in [("guided", window), ("unguided", GuidanceWindow::empty())] {
        let mut first = None;
        let mut last = None;
        let out = guided_denoise_observed(
            &start,
            95,
            Guidance {
                trajectory: &trajectory,
                mask: &mask,
                window: w,
                pairing: Pairing::PostStepLevel,
            },
            &sampler,
            &denoiser,
            &cond,
            |ev, _| {
                if let Some(level) = ev.guided_with {
                    first.get_or_insert(level);
                    last = Some(level);
                }
            },
        )?;
        println!(
            "{label:>9}: guided levels {first:?}..{last:?}, background drift {:.4}",
            drift(&out)?
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

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use noise_edit::eiam::demo;
use noise_edit::pipeline::{run_edit, EditConfig, EditRequest, WindowSetting};
use noise_edit::rng::NoiseSource;
use noise_edit::{AnalyticGaussian, EditMask, GaussianWorld, LatentVolume, Shape};

const SIGMA: f64 = 0.5;

fn world(shape: Shape) -> GaussianWorld {
    let src = NoiseSource::new(900);
    GaussianWorld::new(SIGMA)
        .and_then(|w| w.with_mean(1, src.gaussian("mu_s", shape)))
        .and_then(|w| w.with_mean(7, src.gaussian("mu_t", shape).map(|v| v + 2.0)?))
        .unwrap()
}

fn manual(mask: EditMask) -> EditRequest<'static> {
    EditRequest::Manual {
        source_prompt: "an elephant walks".into(),
        target_prompt: "a zebra walks".into(),
        mask,
    }
}

/// With the whole clip masked and the random branch started from full noise,
/// the edit is a plain sample from the target condition, so its mean over
/// many seeds must approach the target mean.
#[test]
fn full_mask_edits_sample_the_target_mean() {
    let shape = Shape::new(1, 1, 4, 4).unwrap();
    let world = world(shape);
    let mu_t = world.mean(7).unwrap().clone();
    let cfg0 = EditConfig {
        t_start: Some(95),
        tau: 5,
        world_sigma: SIGMA,
        ..EditConfig::default()
    };
    let denoiser = AnalyticGaussian::new(world.clone(), cfg0.schedule().unwrap());
    let mask = EditMask::full(shape.plane_shape());
    let runs = 1000;
    let mut sum = vec![0.0; shape.len()];
    let mut sum_sq = vec![0.0; shape.len()];
    for seed in 0..runs {
        let cfg = EditConfig { seed, ..cfg0.clone() };
        let source = NoiseSource::new(seed + 10_000).gaussian("source", shape);
        let out = run_edit(&source, manual(mask.clone()), &cfg, &denoiser, Some(&world)).unwrap();
        for (i, v) in out.edited.values().iter().enumerate() {
            let d = v - mu_t.values()[i];
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    let n = runs as f64;
    let bias = sum.iter().sum::<f64>() / (n * shape.len() as f64);
    let var = sum_sq.iter().sum::<f64>() / (n * shape.len() as f64) - bias * bias;
    assert!(bias.abs() < 0.05 * SIGMA, "mean offset {bias}");
    assert!((var.sqrt() / SIGMA - 1.0).abs() < 0.1, "spread {}", var.sqrt());
}

#[test]
fn empty_mask_without_guidance_is_plain_denoising() {
    let shape = Shape::new(2, 2, 12, 12).unwrap();
    let world = world(shape);
    let cfg = EditConfig {
        window: WindowSetting::Off,
        world_sigma: SIGMA,
        ..EditConfig::default()
    };
    let denoiser = AnalyticGaussian::new(world.clone(), cfg.schedule().unwrap());
    let source = world
        .mean(1)
        .unwrap()
        .linear_combination(1.0, &NoiseSource::new(1).gaussian("z0", shape), SIGMA)
        .unwrap();
    let out = run_edit(
        &source,
        manual(EditMask::empty(shape.plane_shape())),
        &cfg,
        &denoiser,
        Some(&world),
    )
    .unwrap();
    let t = cfg.t_start();
    assert_eq!(out.initial, *out.trajectory.entry(t).unwrap());
    let target = noise_edit::eiam::embed_prompt("a zebra walks", cfg.condition_length).unwrap();
    let plain = cfg
        .build_sampler()
        .unwrap()
        .denoise(out.trajectory.entry(t).unwrap(), t, 0, &denoiser, &target)
        .unwrap();
    assert_eq!(out.edited, plain);
}

#[test]
fn same_prompt_edit_reconstructs_the_source() {
    let shape = Shape::new(2, 2, 16, 16).unwrap();
    let world = world(shape);
    let cfg = EditConfig {
        world_sigma: SIGMA,
        ..EditConfig::default()
    };
    let denoiser = AnalyticGaussian::new(world.clone(), cfg.schedule().unwrap());
    let source = world
        .mean(7)
        .unwrap()
        .linear_combination(1.0, &NoiseSource::new(2).gaussian("z0", shape), SIGMA)
        .unwrap();
    let mask = EditMask::from_fn(shape.plane_shape(), |_, y, x| {
        (6..10).contains(&y) && (6..10).contains(&x)
    })
    .unwrap();
    let request = EditRequest::Manual {
        source_prompt: "a zebra walks".into(),
        target_prompt: "a zebra walks".into(),
        mask,
    };
    let out = run_edit(&source, request, &cfg, &denoiser, Some(&world)).unwrap();
    assert!(out.report.unedited_mse < 1e-3, "{}", out.report.unedited_mse);
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn bundled_demo_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    demo::write_demo(tmp.path()).unwrap();
    let bundled = files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo"));
    let fresh = files(tmp.path());
    assert_eq!(bundled.keys().collect::<Vec<_>>(), fresh.keys().collect::<Vec<_>>());
    for (name, bytes) in &fresh {
        assert!(bundled[name] == *bytes, "{} differs", name.display());
    }
}

#[test]
fn demo_clip_is_the_generated_source() {
    let set = demo::demo_set().unwrap();
    let clip: LatentVolume = noise_edit::container::read_latent(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo/videos/elephant-walk.latf"),
    )
    .unwrap();
    assert_eq!(clip, set.source.map(|v| v as f32 as f64).unwrap());
}

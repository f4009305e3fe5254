//! The bundled `elephant-walk` demo: a synthetic clip, its caption and
//! object mask, and a two-condition Gaussian world in which "elephant" and
//! "zebra" differ only inside the object's footprint.

use std::fs;
use std::path::Path;

use super::mock::Fixtures;
use super::prompt::{embed_prompt, template_rewrite, Instruction};
use crate::container;
use crate::denoiser::GaussianWorld;
use crate::error::{Error, Result};
use crate::rng::NoiseSource;
use crate::volume::{EditMask, LatentVolume, PlaneShape, Shape};

pub const VIDEO_REF: &str = "elephant-walk";
pub const CAPTION: &str = "an elephant walks";
pub const INSTRUCTION: &str = "replace the elephant with a zebra";
pub const OBJECT: &str = "elephant";
pub const SIGMA: f64 = 0.5;
pub const CONDITION_LENGTH: usize = 8;
/// Offset of the object region in the source (`+`) and target (`-`) means.
pub const OBJECT_OFFSET: f64 = 1.0;

const FRAMES: usize = 4;
const CHANNELS: usize = 2;
const SIDE: usize = 48;
const SQUARE: usize = 12;
const SEED: u64 = 20_240_601;

pub fn shape() -> Shape {
    Shape::new(FRAMES, CHANNELS, SIDE, SIDE).expect("demo shape is non-empty")
}

/// The object square drifts two pixels right per frame.
fn in_object(frame: usize, y: usize, x: usize) -> bool {
    let top = (SIDE - SQUARE) / 2;
    let left = top - 4 + 2 * frame;
    (top..top + SQUARE).contains(&y) && (left..left + SQUARE).contains(&x)
}

fn background(frame: usize, channel: usize, y: usize, x: usize) -> f64 {
    let (xf, yf) = (x as f64, y as f64);
    0.6 * (0.21 * xf + 0.5 * channel as f64).sin() + 0.4 * (0.17 * yf - 0.3 * frame as f64).cos()
}

/// Everything the demo needs, generated deterministically.
#[derive(Debug, Clone)]
pub struct DemoSet {
    pub fixtures: Fixtures,
    pub source: LatentVolume,
    pub world: GaussianWorld,
    pub mask: EditMask,
    pub source_condition: usize,
    pub target_condition: usize,
}

pub fn demo_set() -> Result<DemoSet> {
    let shape = shape();
    let plane: PlaneShape = shape.plane_shape();
    let mask = EditMask::from_fn(plane, in_object)?;

    let target_prompt = template_rewrite(CAPTION, &Instruction::new(INSTRUCTION)?)?.target;
    let source_condition = embed_prompt(CAPTION, CONDITION_LENGTH)?.condition_id();
    let target_condition = embed_prompt(&target_prompt, CONDITION_LENGTH)?.condition_id();
    if source_condition == target_condition {
        return Err(Error::Analysis(format!(
            "demo prompts `{CAPTION}` and `{target_prompt}` embed to the same condition"
        )));
    }

    let mean_with = |offset: f64| {
        LatentVolume::from_fn(shape, |f, c, y, x| {
            background(f, c, y, x) + if in_object(f, y, x) { offset } else { 0.0 }
        })
    };
    let world = GaussianWorld::new(SIGMA)?
        .with_mean(source_condition, mean_with(OBJECT_OFFSET)?)?
        .with_mean(target_condition, mean_with(-OBJECT_OFFSET)?)?;

    let noise = NoiseSource::new(SEED).gaussian("demo/source", shape);
    let source = world.mean(source_condition)?.linear_combination(1.0, &noise, SIGMA)?;

    let mut fixtures = Fixtures::default();
    fixtures.captions.insert(VIDEO_REF.into(), CAPTION.into());
    fixtures.masks.insert((VIDEO_REF.into(), OBJECT.into()), mask.clone());
    Ok(DemoSet {
        fixtures,
        source,
        world,
        mask,
        source_condition,
        target_condition,
    })
}

/// Config text that runs the demo edit against `world/world.txt`.
pub fn demo_config() -> String {
    format!(
        "# elephant -> zebra on the synthetic demo clip\n\
         world = world/world.txt\n\
         world_sigma = {SIGMA}\n\
         condition_length = {CONDITION_LENGTH}\n"
    )
}

/// Writes the demo under `dir`:
///
/// ```text
/// captions.json, masks/elephant-walk/elephant.latf   mock fixtures
/// videos/elephant-walk.latf                           source latent
/// world/world.txt, world/cond_<id>.latf               condition means
/// edit.conf                                           pipeline config
/// ```
pub fn write_demo(dir: impl AsRef<Path>) -> Result<DemoSet> {
    let dir = dir.as_ref();
    let set = demo_set()?;
    set.fixtures.save(dir)?;
    let videos = dir.join("videos");
    fs::create_dir_all(&videos).map_err(|e| Error::io(&videos, e))?;
    container::write_latent(videos.join(format!("{VIDEO_REF}.latf")), &set.source)?;
    set.world.write_manifest(dir.join("world"))?;
    let conf = dir.join("edit.conf");
    fs::write(&conf, demo_config()).map_err(|e| Error::io(&conf, e))?;
    Ok(set)
}

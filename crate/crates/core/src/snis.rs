//! Structural noise initialization.
//!
//! Two noisy versions of the clean latent are built: a random-noise branch
//! at the higher level `t + tau` (for the edited region) and a DDIM
//! inversion branch at level `t` (for the unedited region). The random
//! branch is denoised by `tau` steps under the target prompt so both sit at
//! level `t`, then they are blended through the distance-based coefficient
//! field: `z_hat = D * z_star + (1 - D) * z_inv`.

use std::str::FromStr;

use crate::denoiser::{ConditioningVector, Denoiser};
use crate::error::{Error, Result};
use crate::maskops::{self, CoefficientField, FarField};
use crate::rng::NoiseSource;
use crate::scheduler::{forward_noise, InversionTrajectory, Sampler};
use crate::volume::{elementwise_lerp, masked_select, EditMask, LatentVolume};

/// Purpose tag for the random-branch noise draw.
pub const RANDOM_BRANCH_STREAM: &str = "snis/random-branch";

/// Radius (latent pixels) by which the mask grows before inpainting.
pub const INPAINT_DILATION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InpaintMode {
    #[default]
    None,
    /// Harmonic fill, see [`naive_inpaint`].
    Naive,
    /// POST to an external `/inpaint` endpoint at this base URL.
    External(String),
}

impl FromStr for InpaintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(InpaintMode::None),
            "naive" => Ok(InpaintMode::Naive),
            "external" => Ok(InpaintMode::External(String::new())),
            other => Err(Error::Config(format!(
                "unknown inpaint mode `{other}` (none | naive | external)"
            ))),
        }
    }
}

/// Which clean latent feeds the inversion branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InversionSource {
    #[default]
    Original,
    Inpainted,
}

impl FromStr for InversionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(InversionSource::Original),
            "inpainted" => Ok(InversionSource::Inpainted),
            other => Err(Error::Config(format!(
                "unknown inversion source `{other}` (original | inpainted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnisConfig {
    pub t_start: usize,
    pub tau: usize,
    pub transition_width: f64,
    pub seed: u64,
    pub inpaint: InpaintMode,
    pub inversion_source: InversionSource,
    pub far_field: FarField,
}

impl SnisConfig {
    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.t_start + self.tau > total_steps {
            return Err(Error::Config(format!(
                "t_start + tau = {} exceeds total steps {total_steps}",
                self.t_start + self.tau
            )));
        }
        if !(self.transition_width > 0.0 && self.transition_width.is_finite()) {
            return Err(Error::Config(format!(
                "transition width must be positive, got {}",
                self.transition_width
            )));
        }
        Ok(())
    }
}

/// Fills the masked region of a latent; must leave unmasked values untouched.
pub trait Inpainter: Send + Sync {
    fn inpaint(&self, frames: &LatentVolume, mask: &EditMask) -> Result<LatentVolume>;
}

/// Runs an inpainter and re-imposes the original values outside the mask.
pub fn apply_inpainter(inpainter: &dyn Inpainter, frames: &LatentVolume, mask: &EditMask) -> Result<LatentVolume> {
    let filled = inpainter.inpaint(frames, mask)?;
    frames.ensure_same_shape(&filled)?;
    masked_select(mask, &filled, frames)
}

/// Result of [`naive_inpaint`].
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutcome {
    pub volume: LatentVolume,
    /// Frames with no unmasked pixel; filled with the global mean.
    pub fully_masked_frames: Vec<usize>,
    /// Largest sweep count used for any frame/channel.
    pub sweeps: usize,
}

const INPAINT_TOLERANCE: f64 = 1e-6;
const INPAINT_MAX_SWEEPS: usize = 200_000;

/// Harmonic fill: masked pixels converge to the average of their in-bounds
/// 4-neighbours, with unmasked pixels held fixed (Gauss-Seidel sweeps until
/// the relative change drops below 1e-6).
pub fn naive_inpaint(frames: &LatentVolume, mask: &EditMask) -> Result<InpaintOutcome> {
    let shape = frames.shape();
    mask.ensure_matches(shape)?;
    let (h, w) = (shape.height, shape.width);
    let mut values = frames.values().to_vec();
    let mut fully_masked_frames = Vec::new();
    let mut max_sweeps = 0;

    // per-channel fallback for frames with no boundary
    let global_means: Vec<f64> = (0..shape.channels)
        .map(|c| {
            let (mut sum, mut n) = (0.0, 0usize);
            for fr in 0..shape.frames {
                let bits = mask.frame(fr);
                for (p, &v) in frames.plane(fr, c).iter().enumerate() {
                    if bits[p] == 0 {
                        sum += v;
                        n += 1;
                    }
                }
            }
            if n > 0 {
                sum / n as f64
            } else {
                (0..shape.frames)
                    .map(|fr| frames.plane(fr, c).iter().sum::<f64>())
                    .sum::<f64>()
                    / (shape.frames * shape.plane_len()) as f64
            }
        })
        .collect();

    for fr in 0..shape.frames {
        let bits = mask.frame(fr);
        let holes: Vec<usize> = (0..bits.len()).filter(|&p| bits[p] == 1).collect();
        if holes.is_empty() {
            continue;
        }
        let fully_masked = holes.len() == bits.len();
        if fully_masked {
            fully_masked_frames.push(fr);
        }
        for (c, &global_mean) in global_means.iter().enumerate() {
            let start = shape.index(fr, c, 0, 0);
            let plane = &mut values[start..start + h * w];
            if fully_masked {
                plane.fill(global_mean);
                continue;
            }
            let known: Vec<f64> = (0..bits.len()).filter(|&p| bits[p] == 0).map(|p| plane[p]).collect();
            let init = known.iter().sum::<f64>() / known.len() as f64;
            for &p in &holes {
                plane[p] = init;
            }
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                let (mut delta, mut norm) = (0.0, 0.0);
                for &p in &holes {
                    let (y, x) = (p / w, p % w);
                    let (mut sum, mut n) = (0.0, 0.0);
                    if y > 0 {
                        sum += plane[p - w];
                        n += 1.0;
                    }
                    if y + 1 < h {
                        sum += plane[p + w];
                        n += 1.0;
                    }
                    if x > 0 {
                        sum += plane[p - 1];
                        n += 1.0;
                    }
                    if x + 1 < w {
                        sum += plane[p + 1];
                        n += 1.0;
                    }
                    let next = sum / n;
                    delta += (next - plane[p]).powi(2);
                    norm += next * next;
                    plane[p] = next;
                }
                if delta.sqrt() <= INPAINT_TOLERANCE * norm.sqrt().max(f64::MIN_POSITIVE) || delta == 0.0 {
                    break;
                }
                if sweeps >= INPAINT_MAX_SWEEPS {
                    return Err(Error::Numerical(format!(
                        "harmonic fill did not converge in {INPAINT_MAX_SWEEPS} sweeps (frame {fr}, channel {c})"
                    )));
                }
            }
            max_sweeps = max_sweeps.max(sweeps);
        }
    }
    Ok(InpaintOutcome {
        volume: LatentVolume::from_vec(shape, values)?,
        fully_masked_frames,
        sweeps: max_sweeps,
    })
}

/// [`naive_inpaint`] behind the [`Inpainter`] contract.
#[derive(Debug, Clone, Copy, Default)]
pub struct HarmonicInpainter;

impl Inpainter for HarmonicInpainter {
    fn inpaint(&self, frames: &LatentVolume, mask: &EditMask) -> Result<LatentVolume> {
        naive_inpaint(frames, mask).map(|o| o.volume)
    }
}

/// Source and target prompt embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompts {
    pub source: ConditioningVector,
    pub target: ConditioningVector,
}

/// The two noisy branches plus everything needed downstream.
#[derive(Debug, Clone)]
pub struct Branches {
    /// Random branch at level `t + tau`.
    pub random_start: LatentVolume,
    /// Random branch after `tau` target-conditioned denoising steps (level `t`).
    pub random_at_t: LatentVolume,
    /// Inversion branch at level `t`.
    pub inversion_at_t: LatentVolume,
    pub trajectory: InversionTrajectory,
    /// The clean latent the random branch was noised from.
    pub random_source: LatentVolume,
}

/// Everything [`prepare_branches`] needs besides the latent and mask.
#[derive(Clone, Copy)]
pub struct BranchContext<'a> {
    pub sampler: &'a Sampler,
    pub denoiser: &'a dyn Denoiser,
    pub prompts: &'a Prompts,
    pub inpainter: Option<&'a dyn Inpainter>,
    /// Inversion runs to `max(t_start, inversion_depth)`.
    pub inversion_depth: usize,
}

/// Builds both branches, drawing the random-branch noise from `cfg.seed`.
pub fn prepare_branches(
    z0: &LatentVolume,
    mask: &EditMask,
    cfg: &SnisConfig,
    ctx: BranchContext<'_>,
) -> Result<Branches> {
    let eps = NoiseSource::new(cfg.seed).gaussian(RANDOM_BRANCH_STREAM, z0.shape());
    prepare_branches_with_noise(z0, mask, cfg, ctx, &eps)
}

/// [`prepare_branches`] with an explicit noise draw for the random branch.
pub fn prepare_branches_with_noise(
    z0: &LatentVolume,
    mask: &EditMask,
    cfg: &SnisConfig,
    ctx: BranchContext<'_>,
    eps: &LatentVolume,
) -> Result<Branches> {
    let sampler = ctx.sampler;
    cfg.validate(sampler.total_steps())?;
    mask.ensure_matches(z0.shape())?;
    z0.ensure_same_shape(eps)?;

    let random_source = match (&cfg.inpaint, ctx.inpainter) {
        (InpaintMode::None, _) => z0.clone(),
        (_, Some(inpainter)) => {
            let grown = maskops::dilate(mask, INPAINT_DILATION)?;
            apply_inpainter(inpainter, z0, &grown)?
        }
        (mode, None) => {
            return Err(Error::Config(format!("inpaint mode {mode:?} needs an inpainter")));
        }
    };
    let inversion_input = match cfg.inversion_source {
        InversionSource::Original => z0,
        InversionSource::Inpainted => &random_source,
    };
    let t = cfg.t_start;
    let depth = t.max(ctx.inversion_depth).min(sampler.total_steps());

    let (random, trajectory) = std::thread::scope(|scope| {
        let random = scope.spawn(|| -> Result<_> {
            let start = forward_noise(&random_source, t + cfg.tau, eps, &sampler.schedule)?;
            let at_t = sampler.denoise(&start, t + cfg.tau, t, ctx.denoiser, &ctx.prompts.target)?;
            Ok((start, at_t))
        });
        let trajectory = sampler.invert(inversion_input, depth, ctx.denoiser, &ctx.prompts.source);
        (random.join().expect("random branch thread panicked"), trajectory)
    });
    let (random_start, random_at_t) = random?;
    let trajectory = trajectory?;
    let inversion_at_t = trajectory.entry(t)?.clone();
    Ok(Branches {
        random_start,
        random_at_t,
        inversion_at_t,
        trajectory,
        random_source,
    })
}

/// Blends the branches through precomputed coefficients.
pub fn blend(z_star_t: &LatentVolume, z_t: &LatentVolume, coeffs: &CoefficientField) -> Result<LatentVolume> {
    elementwise_lerp(z_star_t, z_t, coeffs.field())
}

/// `D(M) * z_star_t + (1 - D(M)) * z_t` with transition width `m`.
pub fn structural_init(z_star_t: &LatentVolume, z_t: &LatentVolume, mask: &EditMask, m: f64) -> Result<LatentVolume> {
    structural_init_with(z_star_t, z_t, mask, m, FarField::Zero)
}

pub fn structural_init_with(
    z_star_t: &LatentVolume,
    z_t: &LatentVolume,
    mask: &EditMask,
    m: f64,
    far: FarField,
) -> Result<LatentVolume> {
    z_star_t.ensure_same_shape(z_t)?;
    mask.ensure_matches(z_t.shape())?;
    let coeffs = maskops::coefficient_field_with(&maskops::distance_transform(mask), m, far)?;
    blend(z_star_t, z_t, &coeffs)
}

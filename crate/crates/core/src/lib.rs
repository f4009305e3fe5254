//! Tuning-free latent video editing with region-adaptive noise.
//!
//! The edited region starts from fresh noise at a higher level while the
//! rest of the clip starts from its own DDIM inversion; the two are blended
//! through a distance-based transition band ([`snis`]). During the middle of
//! denoising the unedited region is pinned back to the inversion trajectory
//! ([`ngm`]). Everything runs against the [`Denoiser`] trait, so the closed-form
//! [`AnalyticGaussian`] can stand in for a video diffusion model.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod container;
pub mod denoiser;
pub mod eiam;
pub mod error;
pub mod maskops;
pub mod ngm;
pub mod pipeline;
pub mod preview;
pub mod rng;
pub mod scheduler;
pub mod snis;
pub mod volume;

pub use denoiser::{AnalyticGaussian, ConditioningVector, Denoiser, GaussianWorld};
pub use error::{Error, Result};
pub use pipeline::{run_edit, EditConfig, EditOutcome, EditReport, EditRequest};
pub use scheduler::{InversionTrajectory, NoiseSchedule, Sampler, SamplerKind, ScheduleKind};
pub use volume::{EditMask, LatentVolume, PlaneField, PlaneShape, Shape};

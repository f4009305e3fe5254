//! Instruction analysis: caption the source, derive the target prompt and
//! the objects to edit, and segment those objects into an edit mask.
//!
//! The three steps sit behind [`EiamBackend`]. [`MockBackend`] answers from
//! a fixtures directory, [`HttpBackend`] talks to remote services over JSON,
//! and [`serve_mock`] exposes a mock backend on a local port.

mod http;
mod mock;
mod prompt;
mod server;

pub mod demo;

pub use http::{Endpoints, HttpBackend, HttpInpainter, DEFAULT_TIMEOUT};
pub use mock::{Fixtures, MockBackend};
pub use prompt::{embed_prompt, template_rewrite, Instruction, PromptPair, TaskKind};
pub use server::{serve_mock, MockServer};

use crate::error::Result;
use crate::volume::{EditMask, PlaneShape};

pub trait EiamBackend: Send + Sync {
    fn describe_source(&self, video_ref: &str) -> Result<String>;

    fn derive_target(&self, source_prompt: &str, instruction: &Instruction) -> Result<PromptPair>;

    /// Union of the per-object masks.
    fn segment_objects(&self, video_ref: &str, objects: &[String]) -> Result<EditMask>;
}

/// Output of the analysis stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub prompts: PromptPair,
    pub mask: EditMask,
}

/// caption, then reason, then segment.
pub fn analyze(backend: &dyn EiamBackend, video_ref: &str, instruction: &Instruction) -> Result<Analysis> {
    let source = backend.describe_source(video_ref)?;
    let prompts = backend.derive_target(&source, instruction)?;
    let mask = backend.segment_objects(video_ref, &prompts.objects)?;
    Ok(Analysis { prompts, mask })
}

/// Checks a returned mask against the latent it will edit.
pub fn validate_mask(mask: &EditMask, expected: PlaneShape) -> Result<()> {
    if mask.shape() != expected {
        return Err(crate::error::Error::dims(expected, mask.shape()));
    }
    Ok(())
}

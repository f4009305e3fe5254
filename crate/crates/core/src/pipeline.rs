//! End-to-end editing: analysis, two-branch initialization, blending,
//! guided denoising and the latent-space report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::denoiser::{AnalyticGaussian, Denoiser, GaussianWorld};
use crate::eiam::{self, embed_prompt, EiamBackend, HttpInpainter, Instruction, PromptPair};
use crate::error::{Error, Result, StageExt};
use crate::maskops::{self, FarField};
use crate::ngm::{self, Guidance, GuidanceWindow, Pairing};
use crate::scheduler::{InversionTrajectory, NoiseSchedule, Sampler, SamplerKind, ScheduleKind, TRAIN_STEPS};
use crate::snis::{
    self, BranchContext, HarmonicInpainter, InpaintMode, Inpainter, InversionSource, Prompts, SnisConfig,
};
use crate::volume::{EditMask, LatentVolume};

/// How the guidance window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowSetting {
    /// `[ceil(alpha T), floor(beta T)]`.
    #[default]
    Fractions,
    Steps(usize, usize),
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub total_steps: usize,
    pub tau: usize,
    pub transition_width: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to `total_steps - tau`.
    pub t_start: Option<usize>,
    pub seed: u64,
    pub schedule: ScheduleKind,
    pub sampler: SamplerKind,
    pub inpaint: InpaintMode,
    pub condition_length: usize,
    /// Manifest of condition means for the analytic denoiser.
    pub world: Option<PathBuf>,
    pub world_sigma: f64,
    pub window: WindowSetting,
    pub pairing: Pairing,
    pub far_field: FarField,
    pub inversion_source: InversionSource,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            total_steps: 100,
            tau: 5,
            transition_width: 16.0,
            alpha: 0.48,
            beta: 0.85,
            t_start: None,
            seed: 0,
            schedule: ScheduleKind::Linear,
            sampler: SamplerKind::Ddim,
            inpaint: InpaintMode::None,
            condition_length: 8,
            world: None,
            world_sigma: 1.0,
            window: WindowSetting::Fractions,
            pairing: Pairing::PostStepLevel,
            far_field: FarField::Zero,
            inversion_source: InversionSource::Original,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl EditConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
    /// keys are rejected. Relative `world` paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = EditConfig::default();
        let mut seen = Vec::new();
        let mut inpaint_url = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
            seen.push(key);
            match key {
                "total_steps" => cfg.total_steps = parse_value(key, value)?,
                "tau" => cfg.tau = parse_value(key, value)?,
                "transition_width" => cfg.transition_width = parse_value(key, value)?,
                "alpha" => cfg.alpha = parse_value(key, value)?,
                "beta" => cfg.beta = parse_value(key, value)?,
                "t_start" => cfg.t_start = Some(parse_value(key, value)?),
                "seed" => cfg.seed = parse_value(key, value)?,
                "schedule" => cfg.schedule = value.parse()?,
                "sampler" => cfg.sampler = value.parse()?,
                "inpaint" => cfg.inpaint = value.parse()?,
                "inpaint_url" => inpaint_url = Some(value.to_string()),
                "condition_length" => cfg.condition_length = parse_value(key, value)?,
                "world" => {
                    let p = PathBuf::from(value);
                    cfg.world = Some(match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    });
                }
                "world_sigma" => cfg.world_sigma = parse_value(key, value)?,
                "window" => cfg.window = parse_window(value)?,
                "pairing" => {
                    cfg.pairing = match value {
                        "post-step" => Pairing::PostStepLevel,
                        "pre-step" => Pairing::PreStepLevel,
                        _ => {
                            return Err(Error::Config(format!(
                                "unknown pairing `{value}` (post-step | pre-step)"
                            )))
                        }
                    }
                }
                "far_field" => {
                    cfg.far_field = match value {
                        "zero" => FarField::Zero,
                        "one" => FarField::One,
                        _ => return Err(Error::Config(format!("unknown far_field `{value}` (zero | one)"))),
                    }
                }
                "inversion_source" => cfg.inversion_source = value.parse()?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", n + 1))),
            }
        }
        match (&mut cfg.inpaint, inpaint_url) {
            (InpaintMode::External(url), Some(u)) => *url = u,
            (_, Some(_)) => return Err(Error::Config("`inpaint_url` requires `inpaint = external`".into())),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn t_start(&self) -> usize {
        self.t_start.unwrap_or(self.total_steps.saturating_sub(self.tau))
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.total_steps;
        if t == 0 || t > TRAIN_STEPS {
            return Err(Error::Config(format!(
                "total_steps must be in 1..={TRAIN_STEPS}, got {t}"
            )));
        }
        if self.tau > t {
            return Err(Error::Config(format!("tau = {} exceeds total_steps = {t}", self.tau)));
        }
        if self.t_start() + self.tau > t {
            return Err(Error::Config(format!(
                "t_start + tau = {} exceeds total_steps = {t}",
                self.t_start() + self.tau
            )));
        }
        if self.alpha > self.beta {
            return Err(Error::Config(format!(
                "alpha = {} exceeds beta = {}",
                self.alpha, self.beta
            )));
        }
        if !(self.transition_width > 0.0 && self.transition_width.is_finite()) {
            return Err(Error::Config(format!(
                "transition_width must be positive, got {}",
                self.transition_width
            )));
        }
        if self.condition_length == 0 {
            return Err(Error::Config("condition_length must be at least 1".into()));
        }
        if !(self.world_sigma > 0.0 && self.world_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "world_sigma must be positive, got {}",
                self.world_sigma
            )));
        }
        self.guidance_window().map(|_| ())
    }

    pub fn guidance_window(&self) -> Result<GuidanceWindow> {
        match self.window {
            WindowSetting::Fractions => GuidanceWindow::from_fractions(self.alpha, self.beta, self.total_steps),
            WindowSetting::Steps(lo, hi) => GuidanceWindow::from_steps(lo, hi, self.total_steps),
            WindowSetting::Off => Ok(GuidanceWindow::empty()),
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule, self.total_steps)
    }

    pub fn build_sampler(&self) -> Result<Sampler> {
        Ok(Sampler::new(self.schedule()?, self.sampler))
    }

    pub fn snis(&self) -> SnisConfig {
        SnisConfig {
            t_start: self.t_start(),
            tau: self.tau,
            transition_width: self.transition_width,
            seed: self.seed,
            inpaint: self.inpaint.clone(),
            inversion_source: self.inversion_source,
            far_field: self.far_field,
        }
    }

    /// Loads the configured world manifest.
    pub fn load_world(&self) -> Result<GaussianWorld> {
        let path = self
            .world
            .as_ref()
            .ok_or_else(|| Error::Config("no `world` manifest configured".into()))?;
        GaussianWorld::load_manifest(path, self.world_sigma)
    }

    /// Every setting as `key -> value`, in the config-file spelling.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("total_steps", self.total_steps.to_string());
        put("tau", self.tau.to_string());
        put("transition_width", self.transition_width.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("t_start", self.t_start().to_string());
        put("seed", self.seed.to_string());
        put("schedule", self.schedule.to_string());
        put("sampler", self.sampler.to_string());
        let (mode, url) = match &self.inpaint {
            InpaintMode::None => ("none", None),
            InpaintMode::Naive => ("naive", None),
            InpaintMode::External(u) => ("external", (!u.is_empty()).then(|| u.clone())),
        };
        put("inpaint", mode.to_string());
        if let Some(u) = url {
            put("inpaint_url", u);
        }
        put("condition_length", self.condition_length.to_string());
        if let Some(w) = &self.world {
            put("world", w.display().to_string());
        }
        put("world_sigma", self.world_sigma.to_string());
        put(
            "window",
            match self.window {
                WindowSetting::Fractions => "auto".to_string(),
                WindowSetting::Steps(lo, hi) => format!("{lo}:{hi}"),
                WindowSetting::Off => "off".to_string(),
            },
        );
        put(
            "pairing",
            match self.pairing {
                Pairing::PostStepLevel => "post-step",
                Pairing::PreStepLevel => "pre-step",
            }
            .to_string(),
        );
        put(
            "far_field",
            match self.far_field {
                FarField::Zero => "zero",
                FarField::One => "one",
            }
            .to_string(),
        );
        put(
            "inversion_source",
            match self.inversion_source {
                InversionSource::Original => "original",
                InversionSource::Inpainted => "inpainted",
            }
            .to_string(),
        );
        m
    }

    /// Renders the config in the format [`EditConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.echo() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_window(value: &str) -> Result<WindowSetting> {
    match value {
        "auto" => Ok(WindowSetting::Fractions),
        "off" => Ok(WindowSetting::Off),
        text => {
            let (lo, hi) = text
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("window `{text}` is not auto, off or lo:hi")))?;
            Ok(WindowSetting::Steps(
                parse_value("window", lo.trim())?,
                parse_value("window", hi.trim())?,
            ))
        }
    }
}

impl FromStr for WindowSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_window(s)
    }
}

/// Desk-scale edit metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    /// Mean squared deviation from the source outside the mask grown by
    /// the transition width.
    pub unedited_mse: f64,
    pub unedited_elements: usize,
    /// `|mean(edited on mask) - mean(target)| / |mean(source) - mean(target)|`,
    /// with both means taken over the mask; needs a world.
    pub edited_mean_shift: Option<f64>,
    pub timings_ms: BTreeMap<String, f64>,
    pub config: BTreeMap<String, String>,
}

impl EditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with wall times dropped, for reproducibility checks.
    pub fn without_timings(&self) -> EditReport {
        EditReport {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
    }
}

/// Condition means the report compares against.
#[derive(Debug, Clone, Copy)]
pub struct WorldRef<'a> {
    pub world: &'a GaussianWorld,
    pub source_condition: usize,
    pub target_condition: usize,
}

fn masked_mean(v: &LatentVolume, mask: &EditMask) -> Option<f64> {
    let s = v.shape();
    let (mut sum, mut n) = (0.0, 0usize);
    for f in 0..s.frames {
        let bits = mask.frame(f);
        for c in 0..s.channels {
            for (p, &x) in v.plane(f, c).iter().enumerate() {
                if bits[p] == 1 {
                    sum += x;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn compute_report(
    source: &LatentVolume,
    edited: &LatentVolume,
    mask: &EditMask,
    transition_width: f64,
    world: Option<WorldRef<'_>>,
) -> Result<EditReport> {
    source.ensure_same_shape(edited)?;
    mask.ensure_matches(source.shape())?;
    let grown = maskops::dilate(mask, transition_width)?;
    let s = source.shape();
    let (mut sq, mut n) = (0.0, 0usize);
    for f in 0..s.frames {
        let bits = grown.frame(f);
        for c in 0..s.channels {
            for (p, (a, b)) in source.plane(f, c).iter().zip(edited.plane(f, c)).enumerate() {
                if bits[p] == 0 {
                    sq += (a - b) * (a - b);
                    n += 1;
                }
            }
        }
    }
    let unedited_mse = if n > 0 { sq / n as f64 } else { 0.0 };

    let edited_mean_shift = match world {
        Some(w) => {
            let mu_s = w.world.mean(w.source_condition)?;
            let mu_t = w.world.mean(w.target_condition)?;
            match (
                masked_mean(edited, mask),
                masked_mean(mu_s, mask),
                masked_mean(mu_t, mask),
            ) {
                (Some(e), Some(ms), Some(mt)) if ms != mt => Some((e - mt).abs() / (ms - mt).abs()),
                _ => None,
            }
        }
        None => None,
    };
    if !unedited_mse.is_finite() || edited_mean_shift.is_some_and(|v| !v.is_finite()) {
        return Err(Error::Numerical("report metrics are not finite".into()));
    }
    Ok(EditReport {
        unedited_mse,
        unedited_elements: n,
        edited_mean_shift,
        timings_ms: BTreeMap::new(),
        config: BTreeMap::new(),
    })
}

/// Where the prompts and mask come from.
pub enum EditRequest<'a> {
    /// Prompts and mask supplied directly.
    Manual {
        source_prompt: String,
        target_prompt: String,
        mask: EditMask,
    },
    Instruction {
        backend: &'a dyn EiamBackend,
        video_ref: String,
        instruction: Instruction,
    },
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub edited: LatentVolume,
    pub report: EditReport,
    pub prompts: PromptPair,
    pub mask: EditMask,
    /// Blended starting state at `t_start`.
    pub initial: LatentVolume,
    pub trajectory: InversionTrajectory,
}

fn make_inpainter(mode: &InpaintMode) -> Result<Option<Box<dyn Inpainter>>> {
    Ok(match mode {
        InpaintMode::None => None,
        InpaintMode::Naive => Some(Box::new(HarmonicInpainter)),
        InpaintMode::External(url) if url.is_empty() => Some(Box::new(HttpInpainter::from_env()?)),
        InpaintMode::External(url) => Some(Box::new(HttpInpainter::new(url)?)),
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the whole edit with an arbitrary denoiser. When `world` is given,
/// the report includes the edited-region mean shift.
pub fn run_edit(
    source: &LatentVolume,
    request: EditRequest<'_>,
    cfg: &EditConfig,
    denoiser: &dyn Denoiser,
    world: Option<&GaussianWorld>,
) -> Result<EditOutcome> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();

    let clock = Instant::now();
    let (prompts, mask) = match request {
        EditRequest::Manual {
            source_prompt,
            target_prompt,
            mask,
        } => (
            PromptPair {
                source: source_prompt,
                target: target_prompt,
                objects: Vec::new(),
            },
            mask,
        ),
        EditRequest::Instruction {
            backend,
            video_ref,
            instruction,
        } => {
            let analysis = eiam::analyze(backend, &video_ref, &instruction).stage("analyze")?;
            (analysis.prompts, analysis.mask)
        }
    };
    eiam::validate_mask(&mask, source.shape().plane_shape()).stage("analyze")?;
    let conds = Prompts {
        source: embed_prompt(&prompts.source, cfg.condition_length)?,
        target: embed_prompt(&prompts.target, cfg.condition_length)?,
    };
    timings.insert("analyze".to_string(), elapsed_ms(clock));

    let sampler = cfg.build_sampler()?;
    let window = cfg.guidance_window()?;
    let t_start = cfg.t_start();
    let depth = if window.is_empty() {
        t_start
    } else {
        t_start.max(window.hi())
    };
    let inpainter = make_inpainter(&cfg.inpaint).stage("branches")?;

    let clock = Instant::now();
    let branches = snis::prepare_branches(
        source,
        &mask,
        &cfg.snis(),
        BranchContext {
            sampler: &sampler,
            denoiser,
            prompts: &conds,
            inpainter: inpainter.as_deref(),
            inversion_depth: depth,
        },
    )
    .stage("branches")?;
    timings.insert("branches".to_string(), elapsed_ms(clock));

    let clock = Instant::now();
    let initial =
        maskops::coefficient_field_with(&maskops::distance_transform(&mask), cfg.transition_width, cfg.far_field)
            .and_then(|coeffs| snis::blend(&branches.random_at_t, &branches.inversion_at_t, &coeffs))
            .stage("blend")?;
    timings.insert("blend".to_string(), elapsed_ms(clock));

    let clock = Instant::now();
    let guidance = Guidance {
        trajectory: &branches.trajectory,
        mask: &mask,
        window,
        pairing: cfg.pairing,
    };
    let edited = ngm::guided_denoise(&initial, t_start, guidance, &sampler, denoiser, &conds.target).stage("guide")?;
    timings.insert("guide".to_string(), elapsed_ms(clock));

    let clock = Instant::now();
    let world_ref = world.map(|w| WorldRef {
        world: w,
        source_condition: conds.source.condition_id(),
        target_condition: conds.target.condition_id(),
    });
    let mut report = compute_report(source, &edited, &mask, cfg.transition_width, world_ref).stage("report")?;
    timings.insert("report".to_string(), elapsed_ms(clock));
    report.timings_ms = timings;
    report.config = cfg.echo();

    Ok(EditOutcome {
        edited,
        report,
        prompts,
        mask,
        initial,
        trajectory: branches.trajectory,
    })
}

/// [`run_edit`] with the analytic denoiser built from the configured world.
pub fn run_edit_with_world(source: &LatentVolume, request: EditRequest<'_>, cfg: &EditConfig) -> Result<EditOutcome> {
    let world = cfg.load_world().stage("load-world")?;
    let denoiser = AnalyticGaussian::new(world.clone(), cfg.schedule()?);
    run_edit(source, request, cfg, &denoiser, Some(&world))
}

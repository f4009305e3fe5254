//! Masked re-injection of the inversion trajectory during denoising.
//!
//! After each reverse step whose resulting noise level lies inside the
//! guidance window, the unedited region (mask = 0) of the state is replaced
//! with the inversion-trajectory latent at that same level. Below the
//! window the state is denoised freely.

use crate::denoiser::{ConditioningVector, Denoiser};
use crate::error::{Error, Result};
use crate::scheduler::{InversionTrajectory, Sampler};
use crate::volume::{masked_select, EditMask, LatentVolume};

/// Inclusive range of noise levels at which guidance is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceWindow {
    alpha: f64,
    beta: f64,
    lo: usize,
    hi: usize,
}

// absorbs representation error, e.g. 0.48 * 100 = 48.000000000000004
const ROUNDING_SLACK: f64 = 1e-9;

impl GuidanceWindow {
    /// `lo = ceil(alpha * T)`, `hi = floor(beta * T)`.
    pub fn from_fractions(alpha: f64, beta: f64, total_steps: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta && beta <= 1.0) {
            return Err(Error::Config(format!(
                "guidance window needs 0 < alpha <= beta <= 1, got alpha={alpha} beta={beta}"
            )));
        }
        let t = total_steps as f64;
        let lo = (alpha * t - ROUNDING_SLACK).ceil().max(0.0) as usize;
        let hi = (beta * t + ROUNDING_SLACK).floor() as usize;
        if lo > hi {
            return Err(Error::Config(format!(
                "guidance window [{alpha}, {beta}] contains no step for T={total_steps}"
            )));
        }
        Ok(GuidanceWindow { alpha, beta, lo, hi })
    }

    /// Explicit step bounds; `lo > hi` gives an empty window.
    pub fn from_steps(lo: usize, hi: usize, total_steps: usize) -> Result<Self> {
        if hi > total_steps {
            return Err(Error::Config(format!(
                "window end {hi} exceeds total steps {total_steps}"
            )));
        }
        let t = total_steps.max(1) as f64;
        Ok(GuidanceWindow {
            alpha: lo as f64 / t,
            beta: hi as f64 / t,
            lo,
            hi,
        })
    }

    pub fn empty() -> Self {
        GuidanceWindow {
            alpha: 0.0,
            beta: 0.0,
            lo: 1,
            hi: 0,
        }
    }

    /// Parses `lo:hi`.
    pub fn parse_steps(text: &str, total_steps: usize) -> Result<Self> {
        let (lo, hi) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("window `{text}` is not of the form lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("window bound `{s}` is not a step index")))
        };
        Self::from_steps(parse(lo)?, parse(hi)?, total_steps)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, step: usize) -> bool {
        self.lo <= step && step <= self.hi
    }
}

/// Which trajectory entry a post-step state is matched with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// The entry at the level the state occupies after the step (`i - 1`).
    #[default]
    PostStepLevel,
    /// The entry at the level the step started from (`i`).
    PreStepLevel,
}

/// Replaces the unedited region of `state` with the trajectory entry at
/// `level` when the level is inside the window; otherwise returns the
/// state unchanged.
pub fn guide_step(
    state: &LatentVolume,
    trajectory: &InversionTrajectory,
    mask: &EditMask,
    level: usize,
    window: &GuidanceWindow,
) -> Result<LatentVolume> {
    if !window.contains(level) {
        return Ok(state.clone());
    }
    let reference = trajectory.entry(level)?;
    masked_select(mask, state, reference)
}

/// Inputs shared by every step of [`guided_denoise`].
#[derive(Clone, Copy)]
pub struct Guidance<'a> {
    pub trajectory: &'a InversionTrajectory,
    pub mask: &'a EditMask,
    pub window: GuidanceWindow,
    pub pairing: Pairing,
}

/// What the observer sees after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    /// Noise level of the state.
    pub level: usize,
    /// Trajectory entry used for replacement, if any.
    pub guided_with: Option<usize>,
}

/// Denoises `start` from level `t_start` to 0 under `cond`, guiding inside
/// the window. The starting state itself is guided too when `t_start` lies
/// in the window.
pub fn guided_denoise(
    start: &LatentVolume,
    t_start: usize,
    guidance: Guidance<'_>,
    sampler: &Sampler,
    denoiser: &dyn Denoiser,
    cond: &ConditioningVector,
) -> Result<LatentVolume> {
    guided_denoise_observed(start, t_start, guidance, sampler, denoiser, cond, |_, _| {})
}

pub fn guided_denoise_observed(
    start: &LatentVolume,
    t_start: usize,
    guidance: Guidance<'_>,
    sampler: &Sampler,
    denoiser: &dyn Denoiser,
    cond: &ConditioningVector,
    mut observe: impl FnMut(StepEvent, &LatentVolume),
) -> Result<LatentVolume> {
    if t_start > sampler.total_steps() {
        return Err(Error::Domain(format!(
            "start level {t_start} exceeds total steps {}",
            sampler.total_steps()
        )));
    }
    guidance.mask.ensure_matches(start.shape())?;
    let Guidance {
        trajectory,
        mask,
        window,
        pairing,
    } = guidance;

    let mut state = guide_step(start, trajectory, mask, t_start, &window)?;
    observe(
        StepEvent {
            level: t_start,
            guided_with: window.contains(t_start).then_some(t_start),
        },
        &state,
    );
    for step in (1..=t_start).rev() {
        state = sampler.reverse_step(&state, step, denoiser, cond)?;
        let level = step - 1;
        let source = match pairing {
            Pairing::PostStepLevel => level,
            Pairing::PreStepLevel => step,
        };
        let guided = window.contains(source);
        if guided {
            state = masked_select(mask, &state, trajectory.entry(source)?)?;
        }
        observe(
            StepEvent {
                level,
                guided_with: guided.then_some(source),
            },
            &state,
        );
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{AnalyticGaussian, GaussianWorld};
    use crate::rng::NoiseSource;
    use crate::scheduler::{NoiseSchedule, SamplerKind, ScheduleKind};
    use crate::volume::Shape;

    fn setup(t: usize) -> (Sampler, AnalyticGaussian, LatentVolume, Shape) {
        let shape = Shape::new(2, 2, 6, 6).unwrap();
        let schedule = NoiseSchedule::new(ScheduleKind::Linear, t).unwrap();
        let mean = NoiseSource::new(5).gaussian("mu", shape);
        let world = GaussianWorld::new(0.5).unwrap().with_mean(0, mean).unwrap();
        let den = AnalyticGaussian::new(world, schedule.clone());
        let z0 = NoiseSource::new(6).gaussian("z0", shape);
        (Sampler::new(schedule, SamplerKind::Ddim), den, z0, shape)
    }

    #[test]
    fn window_rounding() {
        let w = GuidanceWindow::from_fractions(0.48, 0.85, 100).unwrap();
        assert_eq!((w.lo(), w.hi()), (48, 85));
        assert!(!w.contains(47) && w.contains(48) && w.contains(85) && !w.contains(86));
        let w = GuidanceWindow::from_fractions(0.475, 0.855, 100).unwrap();
        assert_eq!((w.lo(), w.hi()), (48, 85));
        assert!(GuidanceWindow::from_fractions(0.9, 0.5, 100).is_err());
        assert!(GuidanceWindow::from_fractions(0.0, 0.5, 100).is_err());
        assert!(GuidanceWindow::from_fractions(0.501, 0.509, 100).is_err());
    }

    #[test]
    fn parse_step_window() {
        let w = GuidanceWindow::parse_steps("10:20", 100).unwrap();
        assert_eq!((w.lo(), w.hi()), (10, 20));
        assert!(GuidanceWindow::parse_steps("20:10", 100).unwrap().is_empty());
        assert!(GuidanceWindow::parse_steps("10-20", 100).is_err());
        assert!(GuidanceWindow::parse_steps("1:200", 100).is_err());
    }

    #[test]
    fn guide_step_outside_window_is_identity() {
        let (sampler, den, z0, shape) = setup(20);
        let traj = sampler
            .invert(&z0, 20, &den, &ConditioningVector::one_hot(8, 0).unwrap())
            .unwrap();
        let state = NoiseSource::new(1).gaussian("s", shape);
        let w = GuidanceWindow::from_steps(5, 10, 20).unwrap();
        let mask = EditMask::empty(shape.plane_shape());
        assert_eq!(guide_step(&state, &traj, &mask, 11, &w).unwrap(), state);
        assert_eq!(
            guide_step(&state, &traj, &mask, 10, &w).unwrap(),
            *traj.entry(10).unwrap()
        );
    }

    #[test]
    fn guide_step_matches_naive_loop() {
        let (sampler, den, z0, shape) = setup(10);
        let traj = sampler
            .invert(&z0, 10, &den, &ConditioningVector::one_hot(8, 0).unwrap())
            .unwrap();
        let state = NoiseSource::new(1).gaussian("s", shape);
        let w = GuidanceWindow::from_steps(0, 10, 10).unwrap();
        let mut bits = NoiseSource::new(2).stream("mask", 0);
        let mask = EditMask::from_fn(shape.plane_shape(), |_, _, _| rand::Rng::random_bool(&mut bits, 0.4)).unwrap();
        let out = guide_step(&state, &traj, &mask, 7, &w).unwrap();
        let reference = traj.entry(7).unwrap();
        for f in 0..shape.frames {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        let want = if mask.is_set(f, y, x) {
                            state.get(f, c, y, x)
                        } else {
                            reference.get(f, c, y, x)
                        };
                        assert_eq!(out.get(f, c, y, x), want);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_entry_inside_window_is_an_error() {
        let (sampler, den, z0, shape) = setup(20);
        let traj = sampler
            .invert(&z0, 5, &den, &ConditioningVector::one_hot(8, 0).unwrap())
            .unwrap();
        let w = GuidanceWindow::from_steps(0, 20, 20).unwrap();
        let err = guide_step(&z0, &traj, &EditMask::empty(shape.plane_shape()), 9, &w).unwrap_err();
        assert!(matches!(err, Error::Trajectory(9)));
    }

    #[test]
    fn full_mask_and_empty_window_equal_plain_denoising() {
        let (sampler, den, z0, shape) = setup(30);
        let cond = ConditioningVector::one_hot(8, 0).unwrap();
        let traj = sampler.invert(&z0, 30, &den, &cond).unwrap();
        let start = traj.entry(30).unwrap();
        let plain = sampler.denoise(start, 30, 0, &den, &cond).unwrap();

        let full = EditMask::full(shape.plane_shape());
        let g = Guidance {
            trajectory: &traj,
            mask: &full,
            window: GuidanceWindow::from_steps(0, 30, 30).unwrap(),
            pairing: Pairing::PostStepLevel,
        };
        assert_eq!(guided_denoise(start, 30, g, &sampler, &den, &cond).unwrap(), plain);

        let none = EditMask::empty(shape.plane_shape());
        let g = Guidance {
            trajectory: &traj,
            mask: &none,
            window: GuidanceWindow::empty(),
            pairing: Pairing::PostStepLevel,
        };
        assert_eq!(guided_denoise(start, 30, g, &sampler, &den, &cond).unwrap(), plain);
    }

    #[test]
    fn observer_sees_exact_replacement_inside_window_only() {
        let (sampler, den, z0, shape) = setup(100);
        let cond = ConditioningVector::one_hot(8, 0).unwrap();
        let traj = sampler.invert(&z0, 100, &den, &cond).unwrap();
        let mask = EditMask::from_fn(shape.plane_shape(), |_, y, x| y < 3 && x < 3).unwrap();
        let window = GuidanceWindow::from_fractions(0.48, 0.85, 100).unwrap();
        let g = Guidance {
            trajectory: &traj,
            mask: &mask,
            window,
            pairing: Pairing::PostStepLevel,
        };
        let start = NoiseSource::new(3).gaussian("start", shape);
        let mut guided = Vec::new();
        guided_denoise_observed(&start, 95, g, &sampler, &den, &cond, |ev, state| {
            if let Some(level) = ev.guided_with {
                guided.push(level);
                let entry = traj.entry(level).unwrap();
                // unedited pixels of the state are exactly the entry's
                assert_eq!(masked_select(&mask, state, entry).unwrap(), *state);
            }
        })
        .unwrap();
        assert_eq!(guided, (48..=85).rev().collect::<Vec<_>>());
    }

    #[test]
    fn pre_step_pairing_uses_the_higher_entry() {
        let (sampler, den, z0, shape) = setup(10);
        let cond = ConditioningVector::one_hot(8, 0).unwrap();
        let traj = sampler.invert(&z0, 10, &den, &cond).unwrap();
        let mask = EditMask::empty(shape.plane_shape());
        let g = Guidance {
            trajectory: &traj,
            mask: &mask,
            window: GuidanceWindow::from_steps(4, 6, 10).unwrap(),
            pairing: Pairing::PreStepLevel,
        };
        let mut seen = Vec::new();
        guided_denoise_observed(traj.entry(10).unwrap(), 10, g, &sampler, &den, &cond, |ev, _| {
            if let Some(src) = ev.guided_with {
                seen.push((ev.level, src));
            }
        })
        .unwrap();
        assert_eq!(seen, vec![(5, 6), (4, 5), (3, 4)]);
    }
}

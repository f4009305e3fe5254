//! Noise schedules, forward noising, the deterministic reverse step and
//! DDIM inversion.
//!
//! Inference steps are indexed `0..=T`. Step 0 is the clean latent
//! (`alpha_bar = 1`) and step `T` the noisiest level. Schedules are defined
//! on a 1000-step training grid and subsampled to `T` inference steps, so
//! `alpha_bar(T)` is the end of the training schedule for every `T`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::container;
use crate::denoiser::{ConditioningVector, Denoiser};
use crate::error::{Error, Result};
use crate::volume::LatentVolume;

pub const TRAIN_STEPS: usize = 1000;
const LINEAR_BETA_START: f64 = 1e-4;
const LINEAR_BETA_END: f64 = 2e-2;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Linear,
    Cosine,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config(format!("unknown schedule `{other}` (linear | cosine)"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

/// Cumulative signal levels `alpha_bar_0 ..= alpha_bar_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas_bar: Vec<f64>,
}

fn training_alphas_bar(kind: ScheduleKind) -> Vec<f64> {
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => (0..TRAIN_STEPS)
            .map(|k| LINEAR_BETA_START + (LINEAR_BETA_END - LINEAR_BETA_START) * k as f64 / (TRAIN_STEPS - 1) as f64)
            .collect(),
        ScheduleKind::Cosine => {
            let f = |s: f64| {
                let x = (s / TRAIN_STEPS as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            (0..TRAIN_STEPS)
                .map(|k| (1.0 - f(k as f64 + 1.0) / f(k as f64)).min(MAX_BETA))
                .collect()
        }
    };
    betas
        .iter()
        .scan(1.0, |acc, b| {
            *acc *= 1.0 - b;
            Some(*acc)
        })
        .collect()
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, total_steps: usize) -> Result<Self> {
        if total_steps == 0 || total_steps > TRAIN_STEPS {
            return Err(Error::Config(format!(
                "total steps must be in 1..={TRAIN_STEPS}, got {total_steps}"
            )));
        }
        let train = training_alphas_bar(kind);
        let mut alphas_bar = Vec::with_capacity(total_steps + 1);
        alphas_bar.push(1.0);
        for i in 1..=total_steps {
            let t = ((i * TRAIN_STEPS) as f64 / total_steps as f64).round() as usize;
            alphas_bar.push(train[t - 1]);
        }
        Self::from_alphas_bar(alphas_bar)
    }

    /// Builds a schedule from explicit levels; `alphas_bar[0]` must be 1 and
    /// the sequence strictly decreasing within (0, 1].
    pub fn from_alphas_bar(alphas_bar: Vec<f64>) -> Result<Self> {
        if alphas_bar.len() < 2 || alphas_bar[0] != 1.0 {
            return Err(Error::Domain(
                "schedule must start at alpha_bar = 1 and have >= 1 step".into(),
            ));
        }
        for w in alphas_bar.windows(2) {
            if !(w[1] < w[0] && w[1] > 0.0) {
                return Err(Error::Domain(format!(
                    "alpha_bar must decrease strictly within (0, 1]: {} -> {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(NoiseSchedule { alphas_bar })
    }

    pub fn total_steps(&self) -> usize {
        self.alphas_bar.len() - 1
    }

    pub fn alphas_bar(&self) -> &[f64] {
        &self.alphas_bar
    }

    pub fn alpha_bar(&self, step: usize) -> Result<f64> {
        self.alphas_bar
            .get(step)
            .copied()
            .ok_or_else(|| Error::Domain(format!("step {step} outside 0..={}", self.total_steps())))
    }
}

/// `sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_noise(
    z0: &LatentVolume,
    t: usize,
    eps: &LatentVolume,
    schedule: &NoiseSchedule,
) -> Result<LatentVolume> {
    let a = schedule.alpha_bar(t)?;
    z0.linear_combination(a.sqrt(), eps, (1.0 - a).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// `z_{i-1} = z_i - eps(z_i)`.
    Euler,
    /// Deterministic (eta = 0) DDIM update.
    #[default]
    Ddim,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(SamplerKind::Euler),
            "ddim" => Ok(SamplerKind::Ddim),
            other => Err(Error::Config(format!("unknown sampler `{other}` (euler | ddim)"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Euler => "euler",
            SamplerKind::Ddim => "ddim",
        })
    }
}

/// Clean latent plus its inverted noisy latents, one per step `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionTrajectory {
    entries: Vec<LatentVolume>,
}

impl InversionTrajectory {
    pub fn from_entries(entries: Vec<LatentVolume>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Domain("trajectory needs at least the clean latent".into()))?;
        for e in &entries[1..] {
            first.ensure_same_shape(e)?;
        }
        Ok(InversionTrajectory { entries })
    }

    pub fn clean(&self) -> &LatentVolume {
        &self.entries[0]
    }

    pub fn entry(&self, step: usize) -> Result<&LatentVolume> {
        self.entries.get(step).ok_or(Error::Trajectory(step))
    }

    /// Highest step held.
    pub fn last_step(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &LatentVolume)> {
        self.entries.iter().enumerate()
    }

    /// Writes `step_NNNN.latf` files into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, z) in self.entries() {
            container::write_latent(dir.join(format!("step_{i:04}.latf")), z)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut entries = Vec::new();
        loop {
            let path = dir.join(format!("step_{:04}.latf", entries.len()));
            if !path.exists() {
                break;
            }
            entries.push(container::read_latent(path)?);
        }
        Self::from_entries(entries)
    }
}

/// A noise schedule paired with an update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub schedule: NoiseSchedule,
    pub kind: SamplerKind,
}

impl Sampler {
    pub fn new(schedule: NoiseSchedule, kind: SamplerKind) -> Self {
        Sampler { schedule, kind }
    }

    pub fn total_steps(&self) -> usize {
        self.schedule.total_steps()
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.total_steps() {
            return Err(Error::Domain(format!("step {step} outside 1..={}", self.total_steps())));
        }
        Ok(())
    }

    fn predict(
        &self,
        denoiser: &dyn Denoiser,
        z: &LatentVolume,
        step: usize,
        cond: &ConditioningVector,
    ) -> Result<LatentVolume> {
        let eps = denoiser.predict_noise(z, step, cond)?;
        z.ensure_same_shape(&eps)?;
        Ok(eps)
    }

    /// Moves a latent with known noise estimate from level `from` to `to`.
    fn transfer(&self, z: &LatentVolume, eps: &LatentVolume, from: usize, to: usize) -> Result<LatentVolume> {
        match self.kind {
            SamplerKind::Euler => {
                let sign = if to < from { -1.0 } else { 1.0 };
                z.linear_combination(1.0, eps, sign)
            }
            SamplerKind::Ddim => {
                let a_from = self.schedule.alpha_bar(from)?;
                let a_to = self.schedule.alpha_bar(to)?;
                let (sf, nf) = (a_from.sqrt(), (1.0 - a_from).sqrt());
                let (st, nt) = (a_to.sqrt(), (1.0 - a_to).sqrt());
                // x0_hat = (z - nf * eps) / sf, then re-noise to level `to`
                z.zip_map(eps, |zv, e| st * (zv - nf * e) / sf + nt * e)
            }
        }
    }

    /// One denoising step from level `step` to `step - 1`.
    pub fn reverse_step(
        &self,
        z: &LatentVolume,
        step: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
    ) -> Result<LatentVolume> {
        self.check_step(step)?;
        let eps = self.predict(denoiser, z, step, cond)?;
        self.transfer(z, &eps, step, step - 1)
    }

    /// Denoises from level `from` down to level `to` (`to <= from`).
    pub fn denoise(
        &self,
        z: &LatentVolume,
        from: usize,
        to: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
    ) -> Result<LatentVolume> {
        if to > from {
            return Err(Error::Domain(format!("cannot denoise upward from {from} to {to}")));
        }
        let mut state = z.clone();
        for step in (to + 1..=from).rev() {
            state = self.reverse_step(&state, step, denoiser, cond)?;
        }
        Ok(state)
    }

    /// Approximate inverse of [`Sampler::reverse_step`]: maps the latent at
    /// level `step - 1` to level `step`, evaluating the noise estimate at the
    /// known point `z_prev` with the target step's index.
    pub fn inverse_step(
        &self,
        z_prev: &LatentVolume,
        step: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
    ) -> Result<LatentVolume> {
        self.inverse_step_corrected(z_prev, step, denoiser, cond, 0)
    }

    /// [`Sampler::inverse_step`] followed by `iterations` fixed-point
    /// refinements of the noise estimate at the candidate output.
    pub fn inverse_step_corrected(
        &self,
        z_prev: &LatentVolume,
        step: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
        iterations: usize,
    ) -> Result<LatentVolume> {
        self.check_step(step)?;
        let mut eps = self.predict(denoiser, z_prev, step, cond)?;
        let mut z = self.transfer(z_prev, &eps, step - 1, step)?;
        for _ in 0..iterations {
            eps = self.predict(denoiser, &z, step, cond)?;
            z = self.transfer(z_prev, &eps, step - 1, step)?;
        }
        Ok(z)
    }

    /// Inverts `z0` up to level `up_to`, keeping every intermediate latent.
    pub fn invert(
        &self,
        z0: &LatentVolume,
        up_to: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
    ) -> Result<InversionTrajectory> {
        self.invert_corrected(z0, up_to, denoiser, cond, 0)
    }

    pub fn invert_corrected(
        &self,
        z0: &LatentVolume,
        up_to: usize,
        denoiser: &dyn Denoiser,
        cond: &ConditioningVector,
        iterations: usize,
    ) -> Result<InversionTrajectory> {
        if up_to > self.total_steps() {
            return Err(Error::Domain(format!(
                "cannot invert to step {up_to} of {}",
                self.total_steps()
            )));
        }
        let mut entries = Vec::with_capacity(up_to + 1);
        entries.push(z0.clone());
        for step in 1..=up_to {
            let next = self.inverse_step_corrected(&entries[step - 1], step, denoiser, cond, iterations)?;
            entries.push(next);
        }
        InversionTrajectory::from_entries(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{AnalyticGaussian, FixedNoise, GaussianWorld, ZeroDenoiser};
    use crate::rng::NoiseSource;
    use crate::volume::Shape;

    fn cond() -> ConditioningVector {
        ConditioningVector::zeros(8)
    }

    fn shape() -> Shape {
        Shape::new(2, 2, 4, 4).unwrap()
    }

    #[test]
    fn default_schedule_invariants() {
        for t in [1, 10, 100, 200, 1000] {
            let s = NoiseSchedule::new(ScheduleKind::Linear, t).unwrap();
            let ab = s.alphas_bar();
            assert_eq!(ab.len(), t + 1);
            assert_eq!(ab[0], 1.0);
            assert!(ab.windows(2).all(|w| w[1] < w[0]));
            assert!(ab[t] > 0.0 && ab[t] <= 1e-3, "T={t}: {}", ab[t]);
        }
        let cos = NoiseSchedule::new(ScheduleKind::Cosine, 100).unwrap();
        assert!(cos.alphas_bar().iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn linear_schedule_matches_cumulative_product() {
        // brute-force product of (1 - beta_k) up to training index 9 (step 1 of T = 100)
        let mut prod = 1.0;
        for k in 0..10 {
            prod *= 1.0 - (1e-4 + (2e-2 - 1e-4) * k as f64 / 999.0);
        }
        let s = NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap();
        assert!((s.alpha_bar(1).unwrap() - prod).abs() < 1e-15);
    }

    #[test]
    fn bad_step_counts_rejected() {
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 0).is_err());
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 1001).is_err());
        assert!(NoiseSchedule::from_alphas_bar(vec![1.0, 0.5, 0.6]).is_err());
    }

    #[test]
    fn forward_noise_edge_cases() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap();
        let src = NoiseSource::new(3);
        let (z0, eps) = (src.gaussian("z", shape()), src.gaussian("e", shape()));
        assert_eq!(forward_noise(&z0, 0, &eps, &s).unwrap(), z0);
        let zero = LatentVolume::zeros(shape());
        let t = 37;
        let a = s.alpha_bar(t).unwrap();
        let out = forward_noise(&zero, t, &eps, &s).unwrap();
        for (o, e) in out.values().iter().zip(eps.values()) {
            assert_eq!(*o, (1.0 - a).sqrt() * e);
        }
        assert!(matches!(forward_noise(&z0, 101, &eps, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn forward_noise_moments_at_end_of_schedule() {
        // Monte Carlo over 10^4 elements: variance ~ Var(eps), corr(z0, out) ~ sqrt(alpha_bar_T)
        let s = NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap();
        let shp = Shape::new(1, 1, 100, 100).unwrap();
        let src = NoiseSource::new(99);
        let (z0, eps) = (src.gaussian("z", shp), src.gaussian("e", shp));
        let out = forward_noise(&z0, 100, &eps, &s).unwrap();
        let n = shp.len() as f64;
        let (mo, mz) = (out.mean(), z0.mean());
        let var_o = out.values().iter().map(|v| (v - mo).powi(2)).sum::<f64>() / n;
        let var_z = z0.values().iter().map(|v| (v - mz).powi(2)).sum::<f64>() / n;
        let cov = out
            .values()
            .iter()
            .zip(z0.values())
            .map(|(o, z)| (o - mo) * (z - mz))
            .sum::<f64>()
            / n;
        let corr = cov / (var_o * var_z).sqrt();
        assert!((var_o - 1.0).abs() < 0.05, "variance {var_o}");
        let expect = s.alpha_bar(100).unwrap().sqrt();
        // standard error of a sample correlation near 0 is ~ 1/sqrt(n) = 0.01
        assert!((corr - expect).abs() < 0.03, "corr {corr} vs {expect}");
    }

    #[test]
    fn reverse_step_rejects_step_zero() {
        let sampler = Sampler::new(NoiseSchedule::new(ScheduleKind::Linear, 10).unwrap(), SamplerKind::Ddim);
        let z = LatentVolume::zeros(shape());
        assert!(matches!(
            sampler.reverse_step(&z, 0, &ZeroDenoiser, &cond()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn euler_zero_denoiser_is_identity() {
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, 10).unwrap(),
            SamplerKind::Euler,
        );
        let z = NoiseSource::new(1).gaussian("z", shape());
        assert_eq!(sampler.denoise(&z, 10, 0, &ZeroDenoiser, &cond()).unwrap(), z);
    }

    #[test]
    fn euler_constant_noise_telescopes() {
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, 20).unwrap(),
            SamplerKind::Euler,
        );
        let z = NoiseSource::new(1).gaussian("z", shape());
        let c = LatentVolume::filled(shape(), 0.25);
        let out = sampler.denoise(&z, 20, 8, &FixedNoise(c), &cond()).unwrap();
        for (o, v) in out.values().iter().zip(z.values()) {
            assert!((o - (v - 12.0 * 0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn ddim_with_true_noise_walks_forward_trajectory() {
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap(),
            SamplerKind::Ddim,
        );
        let src = NoiseSource::new(8);
        let (z0, eps) = (src.gaussian("z", shape()), src.gaussian("e", shape()));
        let oracle = FixedNoise(eps.clone());
        for i in [1, 2, 50, 99, 100] {
            let zi = forward_noise(&z0, i, &eps, &sampler.schedule).unwrap();
            let prev = sampler.reverse_step(&zi, i, &oracle, &cond()).unwrap();
            let want = forward_noise(&z0, i - 1, &eps, &sampler.schedule).unwrap();
            for (a, b) in prev.values().iter().zip(want.values()) {
                assert!((a - b).abs() < 1e-9, "step {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ddim_zero_denoiser_rescales_by_alpha_ratio() {
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap(),
            SamplerKind::Ddim,
        );
        let z = NoiseSource::new(4).gaussian("z", shape());
        let out = sampler.denoise(&z, 100, 0, &ZeroDenoiser, &cond()).unwrap();
        let ab = sampler.schedule.alphas_bar();
        let product: f64 = (1..=100).map(|i| (ab[i - 1] / ab[i]).sqrt()).product();
        let cumulative = (ab[0] / ab[100]).sqrt();
        assert!((product / cumulative - 1.0).abs() < 1e-12);
        for (o, v) in out.values().iter().zip(z.values()) {
            assert!((o - cumulative * v).abs() <= 1e-10 * cumulative * v.abs().max(1.0));
        }
    }

    #[test]
    fn invert_to_zero_is_just_the_clean_latent() {
        let sampler = Sampler::new(NoiseSchedule::new(ScheduleKind::Linear, 10).unwrap(), SamplerKind::Ddim);
        let z = NoiseSource::new(4).gaussian("z", shape());
        let traj = sampler.invert(&z, 0, &ZeroDenoiser, &cond()).unwrap();
        assert_eq!(traj.last_step(), 0);
        assert_eq!(traj.clean(), &z);
        assert!(matches!(traj.entry(1), Err(Error::Trajectory(1))));
    }

    #[test]
    fn trajectory_entries_chain_through_inverse_step() {
        let sampler = Sampler::new(NoiseSchedule::new(ScheduleKind::Linear, 30).unwrap(), SamplerKind::Ddim);
        let src = NoiseSource::new(12);
        let world = GaussianWorld::new(0.5)
            .unwrap()
            .with_mean(0, src.gaussian("mu", shape()))
            .unwrap();
        let den = AnalyticGaussian::new(world, sampler.schedule.clone());
        let traj = sampler.invert(&src.gaussian("z", shape()), 30, &den, &cond()).unwrap();
        for i in 1..=30 {
            let again = sampler
                .inverse_step(traj.entry(i - 1).unwrap(), i, &den, &cond())
                .unwrap();
            assert_eq!(&again, traj.entry(i).unwrap());
        }
    }

    /// Linear denoiser eps(z) = A z with the Euler rule: one inverse step
    /// multiplies by (1 + A), one reverse step by (1 - A), so n round trips
    /// scale by (1 - A^2)^n. With A = a / n the error 1 - (1 - a^2/n^2)^n
    /// falls off like 1/n.
    #[test]
    fn linear_denoiser_round_trip_matches_closed_form() {
        struct Linear(f64);
        impl Denoiser for Linear {
            fn predict_noise(&self, z: &LatentVolume, _: usize, _: &ConditioningVector) -> Result<LatentVolume> {
                z.map(|v| self.0 * v)
            }
        }
        let z0 = NoiseSource::new(21).gaussian("z", shape());
        let mut errors = Vec::new();
        for n in [50usize, 100, 200] {
            let a = 0.5 / n as f64;
            let sampler = Sampler::new(NoiseSchedule::new(ScheduleKind::Linear, n).unwrap(), SamplerKind::Euler);
            let den = Linear(a);
            let traj = sampler.invert(&z0, n, &den, &cond()).unwrap();
            let back = sampler.denoise(traj.entry(n).unwrap(), n, 0, &den, &cond()).unwrap();
            let factor = (1.0 - a * a).powi(n as i32);
            for (b, z) in back.values().iter().zip(z0.values()) {
                assert!((b - factor * z).abs() < 1e-12);
            }
            errors.push(1.0 - factor);
        }
        assert!((errors[0] / errors[1] - 2.0).abs() < 0.01);
        assert!((errors[1] / errors[2] - 2.0).abs() < 0.01);
    }

    fn analytic_round_trip(total: usize) -> f64 {
        let shp = Shape::new(4, 2, 16, 16).unwrap();
        let src = NoiseSource::new(77);
        let mu = src.gaussian("mu", shp);
        let sigma = 0.5;
        let z0 = mu.linear_combination(1.0, &src.gaussian("x", shp), sigma).unwrap();
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, total).unwrap(),
            SamplerKind::Ddim,
        );
        let world = GaussianWorld::new(sigma).unwrap().with_mean(0, mu).unwrap();
        let den = AnalyticGaussian::new(world, sampler.schedule.clone());
        let traj = sampler.invert(&z0, total, &den, &cond()).unwrap();
        let back = sampler
            .denoise(traj.entry(total).unwrap(), total, 0, &den, &cond())
            .unwrap();
        back.linear_combination(1.0, &z0, -1.0).unwrap().norm() / z0.norm()
    }

    #[test]
    fn round_trip_error_shrinks_with_more_steps() {
        let e100 = analytic_round_trip(100);
        let e200 = analytic_round_trip(200);
        let e400 = analytic_round_trip(400);
        assert!(e200 / e100 < 0.7, "{e100} -> {e200}");
        assert!(e400 / e200 < 0.7 * 1.1, "{e200} -> {e400}");
    }

    #[test]
    fn corrector_iterations_tighten_round_trip() {
        let shp = shape();
        let src = NoiseSource::new(5);
        let mu = src.gaussian("mu", shp);
        let z0 = mu.linear_combination(1.0, &src.gaussian("x", shp), 0.5).unwrap();
        let sampler = Sampler::new(
            NoiseSchedule::new(ScheduleKind::Linear, 100).unwrap(),
            SamplerKind::Ddim,
        );
        let world = GaussianWorld::new(0.5).unwrap().with_mean(0, mu).unwrap();
        let den = AnalyticGaussian::new(world, sampler.schedule.clone());
        let err = |iters| {
            let traj = sampler.invert_corrected(&z0, 100, &den, &cond(), iters).unwrap();
            let back = sampler
                .denoise(traj.entry(100).unwrap(), 100, 0, &den, &cond())
                .unwrap();
            back.linear_combination(1.0, &z0, -1.0).unwrap().norm() / z0.norm()
        };
        assert!(err(3) < 0.01 * err(0));
    }

    #[test]
    fn trajectory_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let z = NoiseSource::new(1).gaussian("z", shape());
        let quantized = z.map(|v| v as f32 as f64).unwrap();
        let traj = InversionTrajectory::from_entries(vec![quantized.clone(), quantized.clone()]).unwrap();
        traj.write_dir(dir.path()).unwrap();
        assert_eq!(InversionTrajectory::read_dir(dir.path()).unwrap(), traj);
    }
}

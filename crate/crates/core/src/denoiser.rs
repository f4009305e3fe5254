//! The noise-prediction contract and closed-form denoisers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::container;
use crate::error::{Error, Result};
use crate::scheduler::NoiseSchedule;
use crate::volume::{LatentVolume, Shape};

/// Abstract embedding of a prompt, consumed by a [`Denoiser`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningVector(Vec<f64>);

impl ConditioningVector {
    pub const DEFAULT_LEN: usize = 8;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("conditioning vector must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("conditioning vector has non-finite values".into()));
        }
        Ok(ConditioningVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ConditioningVector(vec![0.0; len.max(1)])
    }

    /// A vector whose argmax is `id`.
    pub fn one_hot(len: usize, id: usize) -> Result<Self> {
        if id >= len {
            return Err(Error::Condition(id));
        }
        let mut v = vec![0.0; len];
        v[id] = 1.0;
        Ok(ConditioningVector(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Condition id: index of the largest coordinate, first one on ties.
    pub fn condition_id(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Predicts the noise component `eps_theta(z, cond, step)` of a noisy latent.
///
/// Implementations must return a volume of the input's shape and must not
/// emit non-finite values for finite input.
pub trait Denoiser: Send + Sync {
    fn predict_noise(&self, z: &LatentVolume, step: usize, cond: &ConditioningVector) -> Result<LatentVolume>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(&self, z: &LatentVolume, step: usize, cond: &ConditioningVector) -> Result<LatentVolume> {
        (**self).predict_noise(z, step, cond)
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_noise(&self, z: &LatentVolume, _: usize, _: &ConditioningVector) -> Result<LatentVolume> {
        Ok(LatentVolume::zeros(z.shape()))
    }
}

/// Returns one fixed noise volume at every step.
///
/// When that volume is the exact noise used to build a forward-noised
/// latent, DDIM steps with this denoiser walk the forward trajectory exactly.
#[derive(Debug, Clone)]
pub struct FixedNoise(pub LatentVolume);

impl Denoiser for FixedNoise {
    fn predict_noise(&self, z: &LatentVolume, _: usize, _: &ConditioningVector) -> Result<LatentVolume> {
        z.ensure_same_shape(&self.0)?;
        Ok(self.0.clone())
    }
}

/// Per-condition Gaussian data distributions `N(mu_c, sigma^2 I)`.
#[derive(Debug, Clone)]
pub struct GaussianWorld {
    means: BTreeMap<usize, LatentVolume>,
    sigma: f64,
}

impl GaussianWorld {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("world sigma must be positive, got {sigma}")));
        }
        Ok(GaussianWorld {
            means: BTreeMap::new(),
            sigma,
        })
    }

    pub fn with_mean(mut self, id: usize, mean: LatentVolume) -> Result<Self> {
        self.register(id, mean)?;
        Ok(self)
    }

    pub fn register(&mut self, id: usize, mean: LatentVolume) -> Result<()> {
        if let Some(shape) = self.shape() {
            if shape != mean.shape() {
                return Err(Error::dims(shape, mean.shape()));
            }
        }
        self.means.insert(id, mean);
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> Option<Shape> {
        self.means.values().next().map(|m| m.shape())
    }

    pub fn mean(&self, id: usize) -> Result<&LatentVolume> {
        self.means.get(&id).ok_or(Error::Condition(id))
    }

    pub fn condition_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.means.keys().copied()
    }

    /// Loads means from a manifest of `condition_id path` lines.
    ///
    /// Relative paths resolve against the manifest's directory; blank lines
    /// and `#` comments are skipped.
    pub fn load_manifest(path: impl AsRef<Path>, sigma: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut world = GaussianWorld::new(sigma)?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!(
                    "{}:{}: expected `condition_id path`",
                    path.display(),
                    n + 1
                )));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::Format(format!("{}:{}: bad condition id `{id}`", path.display(), n + 1)))?;
            world.register(id, container::read_latent(base.join(file))?)?;
        }
        if world.means.is_empty() {
            return Err(Error::Format(format!(
                "{}: manifest lists no conditions",
                path.display()
            )));
        }
        Ok(world)
    }

    /// Writes each mean as `cond_<id>.latf` next to a manifest file.
    pub fn write_manifest(&self, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for (id, mean) in &self.means {
            let file = format!("cond_{id}.latf");
            container::write_latent(dir.join(&file), mean)?;
            manifest.push_str(&format!("{id} {file}\n"));
        }
        let path = dir.join("world.txt");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Exact posterior-mean noise predictor for a [`GaussianWorld`].
///
/// With data `x0 ~ N(mu, s^2)` and `z = sqrt(a) x0 + sqrt(1 - a) eps`, the
/// pair `(eps, z)` is jointly Gaussian with `Cov(eps, z) = sqrt(1 - a)` and
/// `Var(z) = a s^2 + 1 - a`, so
///
/// ```text
/// E[eps | z] = sqrt(1 - a) / (a s^2 + 1 - a) * (z - sqrt(a) mu)
/// ```
#[derive(Debug, Clone)]
pub struct AnalyticGaussian {
    world: GaussianWorld,
    schedule: NoiseSchedule,
}

impl AnalyticGaussian {
    pub fn new(world: GaussianWorld, schedule: NoiseSchedule) -> Self {
        AnalyticGaussian { world, schedule }
    }

    pub fn world(&self) -> &GaussianWorld {
        &self.world
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl Denoiser for AnalyticGaussian {
    fn predict_noise(&self, z: &LatentVolume, step: usize, cond: &ConditioningVector) -> Result<LatentVolume> {
        let mean = self.world.mean(cond.condition_id())?;
        z.ensure_same_shape(mean)?;
        let a = self.schedule.alpha_bar(step)?;
        let s2 = self.world.sigma * self.world.sigma;
        let gain = (1.0 - a).sqrt() / (a * s2 + 1.0 - a);
        let shift = a.sqrt();
        z.zip_map(mean, |zv, mu| gain * (zv - shift * mu))
    }
}

//! Counter-based, splittable Gaussian noise.
//!
//! Each draw is addressed by `(seed, purpose, frame)`. The purpose string is
//! hashed into the ChaCha key together with the seed and the frame index
//! selects the ChaCha stream, so frames can be generated in any order (or in
//! parallel) and still produce the same values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::volume::{LatentVolume, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn key(&self, purpose: &str) -> [u8; 32] {
        let mut key = [0u8; 32];
        let words = [
            splitmix(self.seed),
            splitmix(fnv1a(purpose.as_bytes())),
            splitmix(self.seed ^ 0x9e37_79b9_7f4a_7c15),
            splitmix(fnv1a(purpose.as_bytes()).rotate_left(17) ^ self.seed),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    /// Generator for one `(purpose, stream)` address.
    pub fn stream(&self, purpose: &str, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key(purpose));
        rng.set_stream(stream);
        rng
    }

    /// Standard-normal volume; frame `f` draws from stream `f`.
    pub fn gaussian(&self, purpose: &str, shape: Shape) -> LatentVolume {
        let per_frame = shape.channels * shape.plane_len();
        let mut values = Vec::with_capacity(shape.len());
        for frame in 0..shape.frames {
            let mut rng = self.stream(purpose, frame as u64);
            values.extend((0..per_frame).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        }
        LatentVolume::from_vec(shape, values).expect("standard normal draws are finite")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

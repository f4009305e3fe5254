//! 8-bit grayscale previews of a latent volume.
//!
//! One binary PGM (`P5`) per frame and channel, all normalized with the
//! same volume-wide min/max. The bounds go to a `<prefix>_bounds.txt`
//! sidecar so values can be recovered to within one quantization step.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::LatentVolume;

/// Normalization range of a preview.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn of(volume: &LatentVolume) -> Self {
        let (min, max) = volume.min_max();
        Bounds { min, max }
    }

    /// Maps to 0..=255; a degenerate range maps everything to 128.
    pub fn quantize(&self, v: f64) -> u8 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return 128;
        }
        ((v - self.min) / range * 255.0).round().clamp(0.0, 255.0) as u8
    }

    pub fn dequantize(&self, q: u8) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return self.min;
        }
        self.min + q as f64 / 255.0 * range
    }

    fn to_text(self) -> String {
        // {:e} keeps the full f64 precision
        format!("min {:e}\nmax {:e}\n", self.min, self.max)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut min = None;
        let mut max = None;
        for line in text.lines() {
            let mut it = line.split_whitespace();
            match (it.next(), it.next().map(str::parse::<f64>)) {
                (Some("min"), Some(Ok(v))) => min = Some(v),
                (Some("max"), Some(Ok(v))) => max = Some(v),
                (None, _) => {}
                _ => return Err(Error::Format(format!("bad bounds line `{line}`"))),
            }
        }
        match (min, max) {
            (Some(min), Some(max)) => Ok(Bounds { min, max }),
            _ => Err(Error::Format("bounds file needs `min` and `max`".into())),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

pub fn frame_path(prefix: &Path, frame: usize, channel: usize) -> PathBuf {
    with_suffix(prefix, &format!("_f{frame:03}_c{channel}.pgm"))
}

pub fn bounds_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, "_bounds.txt")
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary PGM with maxval 255 into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    pos += 1;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM field `{s}`")))
    };
    if fields[0] != "P5" || num(&fields[3])? != 255 {
        return Err(Error::Format("only 8-bit P5 PGM is supported".into()));
    }
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let pixels = bytes.get(pos..).unwrap_or(&[]);
    if pixels.len() != w * h {
        return Err(Error::Length {
            expected: w * h,
            found: pixels.len(),
        });
    }
    Ok((w, h, pixels.to_vec()))
}

/// Writes the previews and bounds sidecar; returns the image paths.
pub fn emit_preview(volume: &LatentVolume, prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bounds = Bounds::of(volume);
    let s = volume.shape();
    let mut paths = Vec::with_capacity(s.frames * s.channels);
    for f in 0..s.frames {
        for c in 0..s.channels {
            let pixels: Vec<u8> = volume.plane(f, c).iter().map(|&v| bounds.quantize(v)).collect();
            let path = frame_path(prefix, f, c);
            fs::write(&path, encode_pgm(s.width, s.height, &pixels)).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
    }
    let bp = bounds_path(prefix);
    fs::write(&bp, bounds.to_text()).map_err(|e| Error::io(&bp, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseSource;
    use crate::volume::Shape;

    #[test]
    fn constant_volume_is_mid_gray() {
        let dir = tempfile::tempdir().unwrap();
        let v = LatentVolume::filled(Shape::new(1, 1, 3, 3).unwrap(), 4.2);
        let paths = emit_preview(&v, dir.path().join("c")).unwrap();
        let (w, h, px) = decode_pgm(&fs::read(&paths[0]).unwrap()).unwrap();
        assert_eq!((w, h), (3, 3));
        assert!(px.iter().all(|&p| p == 128));
    }

    #[test]
    fn one_file_per_frame_and_channel() {
        let dir = tempfile::tempdir().unwrap();
        let v = NoiseSource::new(1).gaussian("v", Shape::new(2, 3, 4, 5).unwrap());
        let paths = emit_preview(&v, dir.path().join("out/prev")).unwrap();
        assert_eq!(paths.len(), 6);
        assert!(paths.iter().all(|p| p.exists()));
        assert!(bounds_path(&dir.path().join("out/prev")).exists());
    }

    #[test]
    fn dequantized_values_are_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let v = NoiseSource::new(3).gaussian("v", Shape::new(2, 2, 8, 8).unwrap());
        let prefix = dir.path().join("p");
        emit_preview(&v, &prefix).unwrap();
        let bounds = Bounds::read(bounds_path(&prefix)).unwrap();
        assert_eq!(bounds, Bounds::of(&v));
        let step = (bounds.max - bounds.min) / 255.0;
        let s = v.shape();
        for f in 0..s.frames {
            for c in 0..s.channels {
                let (_, _, px) = decode_pgm(&fs::read(frame_path(&prefix, f, c)).unwrap()).unwrap();
                for (q, &orig) in px.iter().zip(v.plane(f, c)) {
                    assert!((bounds.dequantize(*q) - orig).abs() <= step);
                }
            }
        }
    }

    #[test]
    fn malformed_pgm() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n2").is_err());
    }
}

//! The `LATF` binary container for latents, masks and plane fields.
//!
//! Layout, all integers unsigned 32-bit little-endian:
//!
//! ```text
//! "LATF" | version (=1) | kind (0 latent, 1 mask/plane) | frames | channels | height | width
//! frames*channels*height*width IEEE-754 f32 little-endian values
//! ```
//!
//! Values are held as `f64` in memory and quantized to `f32` on write.
//! Kind-1 payloads always have `channels = 1`; masks binarize at 0.5 on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{EditMask, LatentVolume, PlaneField, Shape};

pub const MAGIC: &[u8; 4] = b"LATF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 6 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Latent = 0,
    Mask = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: Kind,
    pub shape: Shape,
}

/// What a container decodes to.
#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Latent(LatentVolume),
    Mask(EditMask),
}

pub fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header truncated: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let field = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
    };
    let version = field(0);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = match field(1) {
        0 => Kind::Latent,
        1 => Kind::Mask,
        k => return Err(Error::Format(format!("unknown kind {k}"))),
    };
    let dims = [field(2), field(3), field(4), field(5)].map(|d| d as usize);
    if dims.iter().try_fold(4usize, |acc, &d| acc.checked_mul(d)).is_none() {
        return Err(Error::Format(format!("dims {dims:?} overflow the payload size")));
    }
    let shape =
        Shape::new(dims[0], dims[1], dims[2], dims[3]).map_err(|_| Error::Format(format!("invalid dims {dims:?}")))?;
    if kind == Kind::Mask && shape.channels != 1 {
        return Err(Error::Format(format!(
            "mask container must have 1 channel, found {}",
            shape.channels
        )));
    }
    Ok(Header { kind, shape })
}

/// Decodes header and raw payload values without interpreting the kind.
pub fn decode_raw(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    let header = parse_header(bytes)?;
    let expected = header.shape.len();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected * 4 {
        return Err(Error::Length {
            expected,
            found: payload.len() / 4,
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header, values))
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let (header, values) = decode_raw(bytes)?;
    match header.kind {
        Kind::Latent => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("latent payload contains non-finite values".into()));
            }
            Ok(Container::Latent(LatentVolume::from_vec(header.shape, values)?))
        }
        Kind::Mask => {
            if values.iter().any(|v| v.is_nan()) {
                return Err(Error::Format("mask payload contains NaN".into()));
            }
            Ok(Container::Mask(EditMask::binarize(
                header.shape.plane_shape(),
                &values,
            )?))
        }
    }
}

fn encode_values(kind: Kind, shape: Shape, values: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + shape.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        kind as u32,
        shape.frames as u32,
        shape.channels as u32,
        shape.height as u32,
        shape.width as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        let q = v as f32;
        if v.is_finite() && !q.is_finite() {
            return Err(Error::Numerical(format!("value {v} overflows f32")));
        }
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_latent(volume: &LatentVolume) -> Result<Vec<u8>> {
    encode_values(Kind::Latent, volume.shape(), volume.values().iter().copied())
}

pub fn encode_mask(mask: &EditMask) -> Vec<u8> {
    encode_values(
        Kind::Mask,
        mask.shape().with_channels(1),
        mask.values().iter().map(|&v| v as f64),
    )
    .expect("mask values always fit f32")
}

/// Plane fields (distances, coefficients) use the kind-1 layout.
pub fn encode_plane(field: &PlaneField) -> Result<Vec<u8>> {
    encode_values(
        Kind::Mask,
        field.shape().with_channels(1),
        field.values().iter().copied(),
    )
}

pub fn decode_plane(bytes: &[u8]) -> Result<PlaneField> {
    let (header, values) = decode_raw(bytes)?;
    if header.kind != Kind::Mask {
        return Err(Error::Format("expected a kind-1 container".into()));
    }
    PlaneField::from_vec(header.shape.plane_shape(), values).map_err(|e| Error::Format(e.to_string()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Container> {
    decode(&read_bytes(path.as_ref())?)
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<LatentVolume> {
    match read_volume(path)? {
        Container::Latent(v) => Ok(v),
        Container::Mask(_) => Err(Error::Format("expected a latent container, found a mask".into())),
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<EditMask> {
    match read_volume(path)? {
        Container::Mask(m) => Ok(m),
        Container::Latent(_) => Err(Error::Format("expected a mask container, found a latent".into())),
    }
}

pub fn read_plane(path: impl AsRef<Path>) -> Result<PlaneField> {
    decode_plane(&read_bytes(path.as_ref())?)
}

pub fn write_latent(path: impl AsRef<Path>, volume: &LatentVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_latent(volume)?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &EditMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask(mask))
}

pub fn write_plane(path: impl AsRef<Path>, field: &PlaneField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_plane(field)?)
}

//! Latent volumes, edit masks and per-pixel plane fields.
//!
//! Every volume is stored flat in frame-major order: frame, channel, row,
//! column, with the column index varying fastest. Masks and other plane
//! fields carry no channel axis and broadcast across channels.

use std::fmt;

use crate::error::{Error, Result};

/// Dimensions of a latent volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(frames: usize, channels: usize, height: usize, width: usize) -> Result<Self> {
        let shape = Shape {
            frames,
            channels,
            height,
            width,
        };
        if frames == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::Domain(format!("all dimensions must be >= 1, got {shape}")));
        }
        Ok(shape)
    }

    pub fn len(&self) -> usize {
        self.frames * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane_shape(&self) -> PlaneShape {
        PlaneShape {
            frames: self.frames,
            height: self.height,
            width: self.width,
        }
    }

    #[inline]
    pub fn index(&self, frame: usize, channel: usize, y: usize, x: usize) -> usize {
        ((frame * self.channels + channel) * self.height + y) * self.width + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.frames, self.channels, self.height, self.width)
    }
}

/// Dimensions of a channel-less per-frame field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlaneShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl PlaneShape {
    pub fn new(frames: usize, height: usize, width: usize) -> Result<Self> {
        Shape::new(frames, 1, height, width).map(|s| s.plane_shape())
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, frame: usize, y: usize, x: usize) -> usize {
        (frame * self.height + y) * self.width + x
    }

    pub fn with_channels(&self, channels: usize) -> Shape {
        Shape {
            frames: self.frames,
            channels,
            height: self.height,
            width: self.width,
        }
    }
}

impl fmt::Display for PlaneShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.frames, self.height, self.width)
    }
}

/// A 4-D field of finite reals: frames x channels x height x width.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVolume {
    shape: Shape,
    values: Vec<f64>,
}

impl LatentVolume {
    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        Shape::new(shape.frames, shape.channels, shape.height, shape.width)?;
        if values.len() != shape.len() {
            return Err(Error::Length {
                expected: shape.len(),
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(LatentVolume { shape, values })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(value.is_finite());
        LatentVolume {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Builds a volume from a per-element function of (frame, channel, y, x).
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for fr in 0..shape.frames {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        values.push(f(fr, c, y, x));
                    }
                }
            }
        }
        Self::from_vec(shape, values)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, frame: usize, channel: usize, y: usize, x: usize) -> f64 {
        self.values[self.shape.index(frame, channel, y, x)]
    }

    /// The contiguous channel-plane for (frame, channel).
    pub fn plane(&self, frame: usize, channel: usize) -> &[f64] {
        let n = self.shape.plane_len();
        let start = self.shape.index(frame, channel, 0, 0);
        &self.values[start..start + n]
    }

    pub fn ensure_same_shape(&self, other: &LatentVolume) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims(self.shape, other.shape));
        }
        Ok(())
    }

    /// Applies `f` elementwise and re-validates finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_vec(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `f(self[p], other[p])` for every element.
    pub fn zip_map(&self, other: &LatentVolume, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::from_vec(self.shape, values)
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &LatentVolume, b: f64) -> Result<Self> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Returns (min, max) over all elements.
    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Per-frame binary field marking edited (1) and unedited (0) pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditMask {
    shape: PlaneShape,
    values: Vec<u8>,
}

impl EditMask {
    pub fn from_vec(shape: PlaneShape, values: Vec<u8>) -> Result<Self> {
        PlaneShape::new(shape.frames, shape.height, shape.width)?;
        if values.len() != shape.len() {
            return Err(Error::Length {
                expected: shape.len(),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!("mask values must be 0 or 1, found {bad}")));
        }
        Ok(EditMask { shape, values })
    }

    pub fn from_bools(shape: PlaneShape, bits: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::from_vec(shape, bits.into_iter().map(u8::from).collect())
    }

    pub fn from_fn(shape: PlaneShape, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for fr in 0..shape.frames {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    values.push(u8::from(f(fr, y, x)));
                }
            }
        }
        Self::from_vec(shape, values)
    }

    pub fn empty(shape: PlaneShape) -> Self {
        EditMask {
            shape,
            values: vec![0; shape.len()],
        }
    }

    pub fn full(shape: PlaneShape) -> Self {
        EditMask {
            shape,
            values: vec![1; shape.len()],
        }
    }

    /// Binarizes real values at the 0.5 threshold.
    pub fn binarize(shape: PlaneShape, values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| u8::from(v >= 0.5)).collect())
    }

    pub fn shape(&self) -> PlaneShape {
        self.shape
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn is_set(&self, frame: usize, y: usize, x: usize) -> bool {
        self.values[self.shape.index(frame, y, x)] == 1
    }

    pub fn frame(&self, frame: usize) -> &[u8] {
        let n = self.shape.plane_len();
        &self.values[frame * n..(frame + 1) * n]
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn union(&self, other: &EditMask) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dims(self.shape, other.shape));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a | b).collect();
        Ok(EditMask {
            shape: self.shape,
            values,
        })
    }

    pub fn invert(&self) -> Self {
        EditMask {
            shape: self.shape,
            values: self.values.iter().map(|v| 1 - v).collect(),
        }
    }

    pub fn to_plane(&self) -> PlaneField {
        PlaneField {
            shape: self.shape,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Checks that the mask pairs with a latent of the given shape.
    pub fn ensure_matches(&self, shape: Shape) -> Result<()> {
        if self.shape != shape.plane_shape() {
            return Err(Error::dims(shape.plane_shape(), self.shape));
        }
        Ok(())
    }
}

/// A real-valued per-frame field without a channel axis.
///
/// Distance fields and blend coefficients are plane fields; they broadcast
/// over the channels of a [`LatentVolume`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    shape: PlaneShape,
    values: Vec<f64>,
}

impl PlaneField {
    /// Plane fields may hold `+inf` (distances in empty frames) but never NaN.
    pub fn from_vec(shape: PlaneShape, values: Vec<f64>) -> Result<Self> {
        PlaneShape::new(shape.frames, shape.height, shape.width)?;
        if values.len() != shape.len() {
            return Err(Error::Length {
                expected: shape.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical("plane field contains NaN".into()));
        }
        Ok(PlaneField { shape, values })
    }

    pub fn filled(shape: PlaneShape, value: f64) -> Self {
        PlaneField {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> PlaneShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, y: usize, x: usize) -> f64 {
        self.values[self.shape.index(frame, y, x)]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        let n = self.shape.plane_len();
        &self.values[frame * n..(frame + 1) * n]
    }
}

/// Blend weight for [`elementwise_lerp`]: either one scalar or one weight
/// per (frame, pixel), shared across channels.
#[derive(Debug, Clone, Copy)]
pub enum Weight<'a> {
    Scalar(f64),
    Plane(&'a PlaneField),
}

impl From<f64> for Weight<'_> {
    fn from(w: f64) -> Self {
        Weight::Scalar(w)
    }
}

impl<'a> From<&'a PlaneField> for Weight<'a> {
    fn from(w: &'a PlaneField) -> Self {
        Weight::Plane(w)
    }
}

fn check_unit_interval(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("blend weight {w} outside [0, 1]")));
    }
    Ok(())
}

/// `w * a + (1 - w) * b` for every element, with `w` broadcast over channels.
pub fn elementwise_lerp<'w>(a: &LatentVolume, b: &LatentVolume, w: impl Into<Weight<'w>>) -> Result<LatentVolume> {
    a.ensure_same_shape(b)?;
    let shape = a.shape();
    match w.into() {
        Weight::Scalar(w) => {
            check_unit_interval(w)?;
            a.zip_map(b, |x, y| w * x + (1.0 - w) * y)
        }
        Weight::Plane(field) => {
            if field.shape() != shape.plane_shape() {
                return Err(Error::dims(shape.plane_shape(), field.shape()));
            }
            for &v in field.values() {
                check_unit_interval(v)?;
            }
            let plane = shape.plane_len();
            let mut out = Vec::with_capacity(shape.len());
            for fr in 0..shape.frames {
                let weights = field.frame(fr);
                for c in 0..shape.channels {
                    let (pa, pb) = (a.plane(fr, c), b.plane(fr, c));
                    for p in 0..plane {
                        let w = weights[p];
                        out.push(w * pa[p] + (1.0 - w) * pb[p]);
                    }
                }
            }
            LatentVolume::from_vec(shape, out)
        }
    }
}

/// Takes `a` where the mask is 1 and `b` where it is 0, exactly.
pub fn masked_select(mask: &EditMask, a: &LatentVolume, b: &LatentVolume) -> Result<LatentVolume> {
    a.ensure_same_shape(b)?;
    let shape = a.shape();
    mask.ensure_matches(shape)?;
    let plane = shape.plane_len();
    let mut out = Vec::with_capacity(shape.len());
    for fr in 0..shape.frames {
        let bits = mask.frame(fr);
        for c in 0..shape.channels {
            let (pa, pb) = (a.plane(fr, c), b.plane(fr, c));
            out.extend((0..plane).map(|p| if bits[p] == 1 { pa[p] } else { pb[p] }));
        }
    }
    Ok(LatentVolume { shape, values: out })
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite value {} at element {pos}",
            values[pos]
        )));
    }
    Ok(())
}

//! Exact Euclidean distance transforms and the transition-zone blend
//! coefficients derived from them.
//!
//! Distances are per frame (2-D), measured in latent pixels from every pixel
//! to the nearest edited (mask = 1) pixel. The squared transform is computed
//! with the separable lower-envelope-of-parabolas method: one 1-D pass down
//! each column, one along each row, each linear in the line length.

use crate::error::{Error, Result};
use crate::volume::{EditMask, PlaneField};

/// Per-frame distances to the edited region.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    field: PlaneField,
    empty_frames: Vec<bool>,
}

impl DistanceField {
    pub fn field(&self) -> &PlaneField {
        &self.field
    }

    /// True for frames with no edited pixel; their distances are `+inf`.
    pub fn is_empty_frame(&self, frame: usize) -> bool {
        self.empty_frames[frame]
    }

    pub fn empty_frames(&self) -> &[bool] {
        &self.empty_frames
    }

    pub fn into_field(self) -> PlaneField {
        self.field
    }
}

/// How distances beyond the transition width are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FarField {
    /// Coefficient 0 beyond the band: far background keeps the inversion branch.
    #[default]
    Zero,
    /// Coefficient 1 beyond the band, the literal reading of the piecewise
    /// definition's "otherwise" branch. Compatibility only.
    One,
}

/// Blend weights in [0, 1] with the transition width that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    field: PlaneField,
    width: f64,
}

impl CoefficientField {
    pub fn field(&self) -> &PlaneField {
        &self.field
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn into_field(self) -> PlaneField {
        self.field
    }
}

impl AsRef<PlaneField> for CoefficientField {
    fn as_ref(&self) -> &PlaneField {
        &self.field
    }
}

/// 1-D squared distance transform of the sampled function `f` (entries are
/// either finite or `+inf`). Writes the lower envelope into `out`.
fn envelope_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        // pop parabolas that the new one hides entirely
        while let Some(&v) = sites.last() {
            let s = intersection(f, v, q);
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
        if sites.is_empty() {
            sites.push(q);
            bounds.push(f64::NEG_INFINITY);
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let xf = x as f64;
        while k + 1 < sites.len() && bounds[k + 1] < xf {
            k += 1;
        }
        let v = sites[k];
        let d = xf - v as f64;
        *o = d * d + f[v];
    }
}

fn intersection(f: &[f64], v: usize, q: usize) -> f64 {
    let (vf, qf) = (v as f64, q as f64);
    ((f[q] + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf))
}

/// Squared Euclidean distance for one frame stored row-major.
fn squared_edt_frame(bits: &[u8], height: usize, width: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = bits.iter().map(|&b| if b == 1 { 0.0 } else { f64::INFINITY }).collect();
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());

    let mut column = vec![0.0; height];
    let mut column_out = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            column[y] = grid[y * width + x];
        }
        envelope_1d(&column, &mut column_out, &mut sites, &mut bounds);
        for y in 0..height {
            grid[y * width + x] = column_out[y];
        }
    }

    let mut row_out = vec![0.0; width];
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        envelope_1d(row, &mut row_out, &mut sites, &mut bounds);
        row.copy_from_slice(&row_out);
    }
    grid
}

/// Exact Euclidean distance from each pixel to the nearest mask pixel.
///
/// Frames without any mask pixel are flagged empty and filled with `+inf`.
pub fn distance_transform(mask: &EditMask) -> DistanceField {
    let shape = mask.shape();
    let mut values = Vec::with_capacity(shape.len());
    let mut empty_frames = Vec::with_capacity(shape.frames);
    for fr in 0..shape.frames {
        let bits = mask.frame(fr);
        let empty = !bits.contains(&1);
        empty_frames.push(empty);
        if empty {
            values.extend(std::iter::repeat_n(f64::INFINITY, shape.plane_len()));
        } else {
            values.extend(
                squared_edt_frame(bits, shape.height, shape.width)
                    .into_iter()
                    .map(f64::sqrt),
            );
        }
    }
    DistanceField {
        field: PlaneField::from_vec(shape, values).expect("distances are never NaN"),
        empty_frames,
    }
}

/// Linear decay `max(m - d, 0) / m` inside the band `d <= m`; beyond it the
/// coefficient follows `far`. Empty frames are all zero.
pub fn coefficient_field_with(dist: &DistanceField, width: f64, far: FarField) -> Result<CoefficientField> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Domain(format!("transition width must be positive, got {width}")));
    }
    let shape = dist.field.shape();
    let mut values = Vec::with_capacity(shape.len());
    for fr in 0..shape.frames {
        if dist.is_empty_frame(fr) {
            values.extend(std::iter::repeat_n(0.0, shape.plane_len()));
            continue;
        }
        values.extend(dist.field.frame(fr).iter().map(|&d| {
            if d <= width {
                (width - d).max(0.0) / width
            } else {
                match far {
                    FarField::Zero => 0.0,
                    FarField::One => 1.0,
                }
            }
        }));
    }
    Ok(CoefficientField {
        field: PlaneField::from_vec(shape, values)?,
        width,
    })
}

pub fn coefficient_field(dist: &DistanceField, width: f64) -> Result<CoefficientField> {
    coefficient_field_with(dist, width, FarField::Zero)
}

/// Grows the mask to every pixel within `radius` of an edited pixel.
pub fn dilate(mask: &EditMask, radius: f64) -> Result<EditMask> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::Domain(format!("dilation radius must be >= 0, got {radius}")));
    }
    let dist = distance_transform(mask);
    EditMask::from_bools(mask.shape(), dist.field.values().iter().map(|&d| d <= radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::PlaneShape;
    use rand::{Rng, SeedableRng};

    /// All-pairs reference distance.
    fn brute_force(mask: &EditMask) -> Vec<f64> {
        let s = mask.shape();
        let mut out = Vec::with_capacity(s.len());
        for fr in 0..s.frames {
            let pts: Vec<(usize, usize)> = (0..s.height)
                .flat_map(|y| (0..s.width).map(move |x| (y, x)))
                .filter(|&(y, x)| mask.is_set(fr, y, x))
                .collect();
            for y in 0..s.height {
                for x in 0..s.width {
                    let best = pts
                        .iter()
                        .map(|&(py, px)| {
                            let (dy, dx) = (py as f64 - y as f64, px as f64 - x as f64);
                            (dy * dy + dx * dx).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min);
                    out.push(best);
                }
            }
        }
        out
    }

    fn single_pixel(h: usize, w: usize, y: usize, x: usize) -> EditMask {
        EditMask::from_fn(PlaneShape::new(1, h, w).unwrap(), |_, yy, xx| yy == y && xx == x).unwrap()
    }

    #[test]
    fn full_mask_has_zero_distance() {
        let d = distance_transform(&EditMask::full(PlaneShape::new(2, 5, 7).unwrap()));
        assert!(d.field().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_pixel_distance() {
        let d = distance_transform(&single_pixel(3, 3, 0, 0));
        assert!((d.field().get(0, 2, 2) - 8f64.sqrt()).abs() < 1e-12);
        assert!((d.field().get(0, 2, 2) - 2.8284).abs() < 1e-4);
    }

    #[test]
    fn empty_frame_is_flagged() {
        let shape = PlaneShape::new(2, 4, 4).unwrap();
        let mask = EditMask::from_fn(shape, |f, y, x| f == 1 && y == 1 && x == 1).unwrap();
        let d = distance_transform(&mask);
        assert!(d.is_empty_frame(0));
        assert!(!d.is_empty_frame(1));
        assert!(d.field().frame(0).iter().all(|v| v.is_infinite()));
        let c = coefficient_field(&d, 2.0).unwrap();
        assert!(c.field().frame(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_masks_match_brute_force() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for _ in 0..40 {
            let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
            let density = rng.random_range(0.01..0.5);
            let mask =
                EditMask::from_fn(PlaneShape::new(2, h, w).unwrap(), |_, _, _| rng.random_bool(density)).unwrap();
            let fast = distance_transform(&mask);
            for (a, b) in fast.field().values().iter().zip(brute_force(&mask)) {
                assert!(a == &b || (a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn coefficient_anchor_values() {
        // single pixel at the left edge of a 1x40 strip: d = x
        let mask = single_pixel(1, 40, 0, 0);
        let c = coefficient_field(&distance_transform(&mask), 16.0).unwrap();
        assert_eq!(c.field().get(0, 0, 0), 1.0);
        assert_eq!(c.field().get(0, 0, 8), 0.5);
        assert_eq!(c.field().get(0, 0, 16), 0.0);
        assert_eq!(c.field().get(0, 0, 20), 0.0);
        let literal = coefficient_field_with(&distance_transform(&mask), 16.0, FarField::One).unwrap();
        assert_eq!(literal.field().get(0, 0, 20), 1.0);
        assert_eq!(literal.field().get(0, 0, 8), 0.5);
    }

    #[test]
    fn coefficient_rejects_non_positive_width() {
        let d = distance_transform(&single_pixel(2, 2, 0, 0));
        assert!(matches!(coefficient_field(&d, 0.0), Err(Error::Domain(_))));
        assert!(matches!(coefficient_field(&d, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dilation_cases() {
        let mask = single_pixel(9, 9, 4, 4);
        assert_eq!(dilate(&mask, 0.0).unwrap(), mask);
        assert_eq!(dilate(&mask, 2.0).unwrap().count(), 13);
        assert_eq!(dilate(&mask, 20.0).unwrap().count(), 81);
        assert!(dilate(&mask, -1.0).is_err());
    }
}

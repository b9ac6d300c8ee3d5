//! Raster types, the compositing identity and trimap synthesis.

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};
use crate::resample;

fn shape_str(h: usize, w: usize) -> String {
    format!("{h}x{w}")
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(MattingError::DimensionMismatch {
            left: shape_str(a.0, a.1),
            right: shape_str(b.0, b.1),
        });
    }
    Ok(())
}

fn check_unit_range(data: &[f64], what: &str) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MattingError::Config(format!(
            "{what} value {v} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Planar RGB image with intensities in `[0, 1]`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(MattingError::Config(format!(
                "rgb buffer of length {} does not match {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        check_unit_range(&data, "image")?;
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for c in rgb {
            data.extend(std::iter::repeat_n(c.clamp(0.0, 1.0), height * width));
        }
        RgbImage {
            height,
            width,
            data,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        RgbImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    /// Applies a plane transform to each channel; values are clamped back to `[0, 1]`.
    pub fn map_planes(
        &self,
        out_h: usize,
        out_w: usize,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> RgbImage {
        let mut data = Vec::with_capacity(out_h * out_w * 3);
        for c in 0..3 {
            let plane = f(self.channel(c));
            debug_assert_eq!(plane.len(), out_h * out_w);
            data.extend(plane.into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
        RgbImage {
            height: out_h,
            width: out_w,
            data,
        }
    }

    /// Applies a per-pixel colour transform.
    pub fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> RgbImage {
        let n = self.height * self.width;
        let mut data = vec![0.0; 3 * n];
        for i in 0..n {
            let out = f([self.data[i], self.data[n + i], self.data[2 * n + i]]);
            for c in 0..3 {
                data[c * n + i] = out[c].clamp(0.0, 1.0);
            }
        }
        RgbImage {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Per-pixel opacity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AlphaMatte {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(MattingError::Config(format!(
                "alpha buffer of length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        check_unit_range(&data, "alpha")?;
        Ok(AlphaMatte {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        AlphaMatte {
            height,
            width,
            data: vec![value.clamp(0.0, 1.0); height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x).clamp(0.0, 1.0));
            }
        }
        AlphaMatte {
            height,
            width,
            data,
        }
    }

    /// Builds a matte from unconstrained values by clamping into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(
            height,
            width,
            data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map_plane(&self, out_h: usize, out_w: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let data: Vec<f64> = f(&self.data).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        debug_assert_eq!(data.len(), out_h * out_w);
        AlphaMatte {
            height: out_h,
            width: out_w,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TrimapLabel {
    Background,
    Unknown,
    Foreground,
}

impl TrimapLabel {
    pub fn to_u8(self) -> u8 {
        match self {
            TrimapLabel::Background => 0,
            TrimapLabel::Unknown => 128,
            TrimapLabel::Foreground => 255,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(TrimapLabel::Background),
            128 => Some(TrimapLabel::Unknown),
            255 => Some(TrimapLabel::Foreground),
            _ => None,
        }
    }

    /// Encoding used for the trimap plane of the network input.
    pub fn to_unit(self) -> f64 {
        match self {
            TrimapLabel::Background => 0.0,
            TrimapLabel::Unknown => 0.5,
            TrimapLabel::Foreground => 1.0,
        }
    }
}

/// Three-label prior map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    height: usize,
    width: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn new(height: usize, width: usize, labels: Vec<TrimapLabel>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(MattingError::Config(format!(
                "trimap of length {} does not match {}x{}",
                labels.len(),
                height,
                width
            )));
        }
        Ok(Trimap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: TrimapLabel) -> Self {
        Trimap {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    /// Decodes raw 8-bit values; anything outside `{0, 128, 255}` is rejected.
    pub fn from_u8(height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        if raw.len() != height * width {
            return Err(MattingError::Config(format!(
                "trimap raster of length {} does not match {}x{}",
                raw.len(),
                height,
                width
            )));
        }
        let labels = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                TrimapLabel::from_u8(v).ok_or(MattingError::InvalidTrimapValue {
                    value: v,
                    x: (i % width) as u32,
                    y: (i / width) as u32,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trimap {
            height,
            width,
            labels,
        })
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.to_u8()).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: TrimapLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn map_plane(
        &self,
        out_h: usize,
        out_w: usize,
        f: impl Fn(&[TrimapLabel]) -> Vec<TrimapLabel>,
    ) -> Self {
        let labels = f(&self.labels);
        debug_assert_eq!(labels.len(), out_h * out_w);
        Trimap {
            height: out_h,
            width: out_w,
            labels,
        }
    }
}

/// Boolean pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(MattingError::Config(format!(
                "mask of length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }
}

/// Inputs for one training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct MattingSample {
    pub image: RgbImage,
    pub trimap: Trimap,
    pub ground_truth: Option<AlphaMatte>,
    pub foreground: Option<RgbImage>,
    pub background: Option<RgbImage>,
}

impl MattingSample {
    /// Checks that every present member shares the image dimensions.
    pub fn new(
        image: RgbImage,
        trimap: Trimap,
        ground_truth: Option<AlphaMatte>,
        foreground: Option<RgbImage>,
        background: Option<RgbImage>,
    ) -> Result<Self> {
        let dims = image.dims();
        check_dims(dims, trimap.dims())?;
        if let Some(a) = &ground_truth {
            check_dims(dims, a.dims())?;
        }
        for rgb in [&foreground, &background].into_iter().flatten() {
            check_dims(dims, rgb.dims())?;
        }
        Ok(MattingSample {
            image,
            trimap,
            ground_truth,
            foreground,
            background,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Applies the same geometric transform to every member. `smooth` is used
    /// for continuous planes, `labels` for the trimap.
    pub fn map_geometry(
        &self,
        out_h: usize,
        out_w: usize,
        smooth: impl Fn(&[f64]) -> Vec<f64>,
        labels: impl Fn(&[TrimapLabel]) -> Vec<TrimapLabel>,
    ) -> MattingSample {
        MattingSample {
            image: self.image.map_planes(out_h, out_w, &smooth),
            trimap: self.trimap.map_plane(out_h, out_w, labels),
            ground_truth: self
                .ground_truth
                .as_ref()
                .map(|a| a.map_plane(out_h, out_w, &smooth)),
            foreground: self
                .foreground
                .as_ref()
                .map(|f| f.map_planes(out_h, out_w, &smooth)),
            background: self
                .background
                .as_ref()
                .map(|b| b.map_planes(out_h, out_w, &smooth)),
        }
    }
}

/// `αf + (1 − α)b` clamped to `[0, 1]`; equal layers blend to themselves
/// regardless of rounding.
#[inline]
pub fn blend(a: f64, f: f64, b: f64) -> f64 {
    if f == b {
        f
    } else {
        (a * f + (1.0 - a) * b).clamp(0.0, 1.0)
    }
}

/// `C = αF + (1 − α)B` per pixel and channel.
pub fn composite(fg: &RgbImage, bg: &RgbImage, alpha: &AlphaMatte) -> Result<RgbImage> {
    check_dims(fg.dims(), bg.dims())?;
    check_dims(fg.dims(), alpha.dims())?;
    let n = fg.height * fg.width;
    let mut data = Vec::with_capacity(3 * n);
    for c in 0..3 {
        let (f, b) = (fg.channel(c), bg.channel(c));
        for i in 0..n {
            data.push(blend(alpha.data[i], f[i], b[i]));
        }
    }
    Ok(RgbImage {
        height: fg.height,
        width: fg.width,
        data,
    })
}

/// Square-window binary dilation (side `2·radius + 1`), separable max filter.
pub fn dilate(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut rows = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = mask[y * w + lo..=y * w + hi].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
        }
    }
    out
}

/// Labels the dilated fractional-alpha region Unknown; the rest is
/// Foreground where α = 1 and Background otherwise.
pub fn generate_trimap(alpha: &AlphaMatte, radius: usize) -> Trimap {
    let (h, w) = alpha.dims();
    let seed: Vec<bool> = alpha.data.iter().map(|&a| a > 0.0 && a < 1.0).collect();
    let unknown = dilate(&seed, h, w, radius);
    let labels = unknown
        .iter()
        .zip(&alpha.data)
        .map(|(&u, &a)| {
            if u {
                TrimapLabel::Unknown
            } else if a >= 1.0 {
                TrimapLabel::Foreground
            } else {
                TrimapLabel::Background
            }
        })
        .collect();
    Trimap {
        height: h,
        width: w,
        labels,
    }
}

pub fn unknown_mask(trimap: &Trimap) -> Mask {
    Mask {
        height: trimap.height,
        width: trimap.width,
        data: trimap
            .labels
            .iter()
            .map(|&l| l == TrimapLabel::Unknown)
            .collect(),
    }
}

/// Reflect-pads every member of a sample so that both sides are at least
/// `min_side`, splitting the margin evenly.
pub fn pad_to_at_least(sample: &MattingSample, min_side: usize) -> MattingSample {
    let (h, w) = sample.dims();
    if h >= min_side && w >= min_side {
        return sample.clone();
    }
    let ph = min_side.saturating_sub(h);
    let pw = min_side.saturating_sub(w);
    let (top, left) = (ph / 2, pw / 2);
    let (bottom, right) = (ph - top, pw - left);
    sample.map_geometry(
        h + ph,
        w + pw,
        |p| resample::reflect_pad(p, h, w, top, bottom, left, right),
        |p| resample::reflect_pad(p, h, w, top, bottom, left, right),
    )
}

pub fn crop_sample(
    sample: &MattingSample,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
) -> MattingSample {
    let w = sample.dims().1;
    sample.map_geometry(
        height,
        width,
        |p| resample::crop(p, w, top, left, height, width),
        |p| resample::crop(p, w, top, left, height, width),
    )
}

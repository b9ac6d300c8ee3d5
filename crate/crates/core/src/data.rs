//! Dataset synthesis by alpha compositing, and the training-time crop and
//! augmentation chain.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};
use crate::io::{load_alpha, load_rgb, load_trimap, save_alpha, save_rgb, save_trimap};
use crate::raster::{
    composite, crop_sample, generate_trimap, pad_to_at_least, MattingSample, RgbImage,
    TrimapLabel,
};
use crate::resample::{
    crop, flip_horizontal, resize_bilinear, resize_nearest, warp_bilinear, warp_nearest,
    AffineMap,
};
use crate::seed::{derive_seed, stream_rng, streams};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Inputs of [`synthesize_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub foreground_dir: PathBuf,
    pub alpha_dir: PathBuf,
    pub background_dir: PathBuf,
    pub backgrounds_per_foreground: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Inclusive range of the trimap dilation radius drawn per sample.
    pub trimap_radius: (usize, usize),
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.backgrounds_per_foreground == 0 {
            return Err(MattingError::Config(
                "backgrounds_per_foreground must be at least 1".into(),
            ));
        }
        for (what, dir) in [
            ("foreground", &self.foreground_dir),
            ("alpha", &self.alpha_dir),
            ("background", &self.background_dir),
        ] {
            if !dir.is_dir() {
                return Err(MattingError::Config(format!(
                    "{what} directory {} does not exist",
                    dir.display()
                )));
            }
        }
        let (lo, hi) = self.trimap_radius;
        if lo > hi {
            return Err(MattingError::Config(format!(
                "trimap radius range {lo}..={hi} is empty"
            )));
        }
        Ok(())
    }
}

/// One line of the dataset manifest; paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub name: String,
    pub merged: String,
    pub alpha: String,
    pub fg: String,
    pub bg: String,
    pub trimap: String,
    pub seed: u64,
}

/// `*.png` files of a directory keyed by stem.
pub fn list_png(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| MattingError::io(dir, e))? {
        let path = entry.map_err(|e| MattingError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

/// Scales the background up (never down) until it covers `h × w`, then
/// crops a window at a random offset.
pub fn fit_background(bg: &RgbImage, h: usize, w: usize, rng: &mut impl Rng) -> RgbImage {
    let (bh, bw) = bg.dims();
    let scale = (h as f64 / bh as f64).max(w as f64 / bw as f64).max(1.0);
    let (sh, sw) = (
        ((bh as f64 * scale).ceil() as usize).max(h),
        ((bw as f64 * scale).ceil() as usize).max(w),
    );
    let scaled = bg.map_planes(sh, sw, |p| resize_bilinear(p, bh, bw, sh, sw));
    let top = rng.random_range(0..=sh - h);
    let left = rng.random_range(0..=sw - w);
    scaled.map_planes(h, w, |p| crop(p, sw, top, left, h, w))
}

fn rel(dir: &str, name: &str) -> String {
    format!("{dir}/{name}.png")
}

/// Composites every foreground over `backgrounds_per_foreground` distinct
/// backgrounds and writes `fg/`, `alpha/`, `bg/`, `merged/`, `trimap/` and
/// the manifest under `output_dir`. Output depends only on the inputs and
/// the seed.
pub fn synthesize_dataset(spec: &DatasetSpec) -> Result<Vec<ManifestRecord>> {
    spec.validate()?;
    let fgs = list_png(&spec.foreground_dir)?;
    let alphas = list_png(&spec.alpha_dir)?;
    let bgs: Vec<PathBuf> = list_png(&spec.background_dir)?.into_values().collect();
    if fgs.is_empty() {
        return Err(MattingError::Config(format!(
            "no foreground images in {}",
            spec.foreground_dir.display()
        )));
    }
    if let Some(stem) = fgs.keys().find(|s| !alphas.contains_key(*s)) {
        return Err(MattingError::MissingAlpha { stem: stem.clone() });
    }
    if bgs.len() < spec.backgrounds_per_foreground {
        return Err(MattingError::Config(format!(
            "{} backgrounds available, {} needed per foreground",
            bgs.len(),
            spec.backgrounds_per_foreground
        )));
    }
    let out = &spec.output_dir;
    let jobs: Vec<(usize, &String, &PathBuf)> = fgs
        .iter()
        .enumerate()
        .map(|(i, (stem, path))| (i, stem, path))
        .collect();
    let per_fg: Vec<Result<Vec<ManifestRecord>>> = jobs
        .par_iter()
        .map(|&(i, stem, fg_path)| {
            let fg = load_rgb(fg_path)?;
            let alpha = load_alpha(&alphas[stem])?;
            crate::raster::check_dims(fg.dims(), alpha.dims())?;
            let (h, w) = fg.dims();
            let mut pick = stream_rng(spec.seed, streams::COMPOSE, i as u64);
            let chosen = sample_indices(&mut pick, bgs.len(), spec.backgrounds_per_foreground);
            let mut records = Vec::with_capacity(chosen.len());
            for (k, b) in chosen.into_iter().enumerate() {
                let index = (i * spec.backgrounds_per_foreground + k) as u64;
                let sub_seed = derive_seed(spec.seed, streams::SAMPLE, index);
                let mut rng = stream_rng(sub_seed, streams::SAMPLE, 0);
                let bg = fit_background(&load_rgb(&bgs[b])?, h, w, &mut rng);
                let merged = composite(&fg, &bg, &alpha)?;
                let (lo, hi) = spec.trimap_radius;
                let trimap = generate_trimap(&alpha, rng.random_range(lo..=hi));
                let name = format!("{stem}_{k}");
                let record = ManifestRecord {
                    merged: rel("merged", &name),
                    alpha: rel("alpha", &name),
                    fg: rel("fg", &name),
                    bg: rel("bg", &name),
                    trimap: rel("trimap", &name),
                    seed: sub_seed,
                    name,
                };
                save_rgb(&merged, &out.join(&record.merged))?;
                save_alpha(&alpha, &out.join(&record.alpha))?;
                save_rgb(&fg, &out.join(&record.fg))?;
                save_rgb(&bg, &out.join(&record.bg))?;
                save_trimap(&trimap, &out.join(&record.trimap))?;
                records.push(record);
            }
            Ok(records)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_fg {
        records.extend(r?);
    }
    write_manifest(&out.join(MANIFEST_NAME), &records)?;
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| MattingError::Internal(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| MattingError::io(path, e))?;
    f.write_all(&buf).map_err(|e| MattingError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| MattingError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                MattingError::Config(format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

/// Loads every sample of a synthesized dataset, in manifest order.
pub fn load_dataset(root: &Path) -> Result<Vec<(String, MattingSample)>> {
    let records = read_manifest(&root.join(MANIFEST_NAME))?;
    records
        .par_iter()
        .map(|r| {
            let sample = MattingSample::new(
                load_rgb(&root.join(&r.merged))?,
                load_trimap(&root.join(&r.trimap))?,
                Some(load_alpha(&root.join(&r.alpha))?),
                Some(load_rgb(&root.join(&r.fg))?),
                Some(load_rgb(&root.join(&r.bg))?),
            )?;
            Ok((r.name.clone(), sample))
        })
        .collect()
}

/// Symmetric colour jitter ranges. Hue is a fraction of the colour wheel;
/// saturation and brightness are relative factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterRanges {
    pub hue: f64,
    pub saturation: f64,
    pub brightness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRanges {
    pub rotation_deg: f64,
    /// Maximum shift as a fraction of the side length.
    pub translation: f64,
    pub scale: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub crop_sizes: Vec<usize>,
    pub train_size: usize,
    pub flip_probability: f64,
    pub jitter: JitterRanges,
    pub affine: AffineRanges,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            crop_sizes: vec![512, 640, 800],
            train_size: 512,
            flip_probability: 0.5,
            jitter: JitterRanges {
                hue: 0.1,
                saturation: 0.2,
                brightness: 0.2,
            },
            affine: AffineRanges {
                rotation_deg: 10.0,
                translation: 0.05,
                scale: (0.9, 1.1),
            },
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Single crop size equal to `size`, no flip, no jitter, identity affine.
    pub fn identity(size: usize) -> Self {
        AugmentationConfig {
            crop_sizes: vec![size],
            train_size: size,
            flip_probability: 0.0,
            jitter: JitterRanges {
                hue: 0.0,
                saturation: 0.0,
                brightness: 0.0,
            },
            affine: AffineRanges {
                rotation_deg: 0.0,
                translation: 0.0,
                scale: (1.0, 1.0),
            },
            seed: 0,
        }
    }

    /// The default chain with crop sizes scaled to a smaller training size.
    pub fn scaled(train_size: usize) -> Self {
        let d = AugmentationConfig::default();
        AugmentationConfig {
            crop_sizes: d
                .crop_sizes
                .iter()
                .map(|&c| (c * train_size / d.train_size).max(32))
                .collect(),
            train_size,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MattingError::Config(m));
        if self.crop_sizes.is_empty() {
            return bad("crop_sizes must not be empty".into());
        }
        if let Some(c) = self.crop_sizes.iter().find(|&&c| c < 32) {
            return bad(format!("crop size {c} is below 32"));
        }
        if self.train_size < 32 {
            return bad(format!("train_size {} is below 32", self.train_size));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!(
                "flip_probability {} outside [0, 1]",
                self.flip_probability
            ));
        }
        let j = self.jitter;
        if [j.hue, j.saturation, j.brightness]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("jitter ranges must be finite and non-negative".into());
        }
        let a = self.affine;
        let (lo, hi) = a.scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("affine scale bounds ({lo}, {hi}) are invalid"));
        }
        if !(a.rotation_deg >= 0.0 && a.translation >= 0.0) {
            return bad("affine rotation and translation ranges must be non-negative".into());
        }
        Ok(())
    }
}

/// Uniform in `[−r, r]`; exactly 0 without consuming randomness when r = 0.
fn symmetric(rng: &mut impl Rng, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        rng.random_range(-r..=r)
    }
}

/// Square crop centred on a uniformly chosen Unknown pixel, clamped inside
/// the (reflect-padded if too small) sample.
pub fn crop_unknown_centered(
    sample: &MattingSample,
    cfg: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<MattingSample> {
    if cfg.crop_sizes.is_empty() {
        return Err(MattingError::Config("crop_sizes must not be empty".into()));
    }
    if sample.trimap.count(TrimapLabel::Unknown) == 0 {
        return Err(MattingError::NoTransitionRegion);
    }
    let size = cfg.crop_sizes[rng.random_range(0..cfg.crop_sizes.len())];
    let padded = pad_to_at_least(sample, size);
    let (h, w) = padded.dims();
    let unknown: Vec<usize> = padded
        .trimap
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == TrimapLabel::Unknown)
        .map(|(j, _)| j)
        .collect();
    let j = unknown[rng.random_range(0..unknown.len())];
    let (cy, cx) = (j / w, j % w);
    let top = cy.saturating_sub(size / 2).min(h - size);
    let left = cx.saturating_sub(size / 2).min(w - size);
    Ok(crop_sample(&padded, top, left, size, size))
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Hue shift, saturation and brightness scaling in HSV space.
pub fn jitter_rgb(img: &RgbImage, dh: f64, ds: f64, dv: f64) -> RgbImage {
    img.map_pixels(|px| {
        let [h, s, v] = rgb_to_hsv(px);
        hsv_to_rgb([
            h + dh,
            (s * (1.0 + ds)).clamp(0.0, 1.0),
            (v * (1.0 + dv)).clamp(0.0, 1.0),
        ])
    })
}

pub fn flip_sample(sample: &MattingSample) -> MattingSample {
    let (h, w) = sample.dims();
    sample.map_geometry(
        h,
        w,
        |p| flip_horizontal(p, h, w),
        |p| flip_horizontal(p, h, w),
    )
}

/// Flip, colour jitter, affine warp, then resize to `train_size`.
///
/// The colour jitter is applied with the same parameters to the image and,
/// when present, to the foreground and background layers so that the
/// composition relation between them is kept.
pub fn augment(
    sample: &MattingSample,
    cfg: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<MattingSample> {
    let mut s = sample.clone();
    let flip = cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability);
    if flip {
        s = flip_sample(&s);
    }

    let dh = symmetric(rng, cfg.jitter.hue);
    let ds = symmetric(rng, cfg.jitter.saturation);
    let dv = symmetric(rng, cfg.jitter.brightness);
    if (dh, ds, dv) != (0.0, 0.0, 0.0) {
        s.image = jitter_rgb(&s.image, dh, ds, dv);
        s.foreground = s.foreground.map(|f| jitter_rgb(&f, dh, ds, dv));
        s.background = s.background.map(|b| jitter_rgb(&b, dh, ds, dv));
    }

    let (h, w) = s.dims();
    let rot = symmetric(rng, cfg.affine.rotation_deg);
    let (lo, hi) = cfg.affine.scale;
    let scale = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let tx = symmetric(rng, cfg.affine.translation) * w as f64;
    let ty = symmetric(rng, cfg.affine.translation) * h as f64;
    if (rot, scale, tx, ty) != (0.0, 1.0, 0.0, 0.0) {
        let map = AffineMap::new(rot, scale, [tx, ty]);
        s = s.map_geometry(
            h,
            w,
            |p| warp_bilinear(p, h, w, &map),
            |p| warp_nearest(p, h, w, &map),
        );
    }

    let t = cfg.train_size;
    if (h, w) != (t, t) {
        s = s.map_geometry(
            t,
            t,
            |p| resize_bilinear(p, h, w, t, t),
            |p| resize_nearest(p, h, w, t, t),
        );
    }
    Ok(s)
}

/// Crop followed by augmentation, as used for every training sample.
pub fn training_view(
    sample: &MattingSample,
    cfg: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<MattingSample> {
    let cropped = crop_unknown_centered(sample, cfg, rng)?;
    augment(&cropped, cfg, rng)
}

//! Small synthetic matting scenes for tests, demos and smoke runs.
//!
//! A scene is a soft-edged ellipse of a warm textured foreground over a cool
//! textured background, so the matte can be read off the colours.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::io::{save_alpha, save_rgb};
use crate::raster::{composite, generate_trimap, AlphaMatte, MattingSample, RgbImage};
use crate::seed::{stream_rng, streams};

/// Foreground, background and matte of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLayers {
    pub foreground: RgbImage,
    pub background: RgbImage,
    pub alpha: AlphaMatte,
}

pub fn toy_layers(size: usize, seed: u64) -> ToyLayers {
    let mut rng = stream_rng(seed, streams::SAMPLE, u64::MAX);
    let s = size as f64;
    let (cy, cx) = (s * rng.random_range(0.4..0.6), s * rng.random_range(0.4..0.6));
    let (ry, rx) = (s * rng.random_range(0.2..0.3), s * rng.random_range(0.2..0.3));
    let soft = rng.random_range(0.08..0.16);
    let fg_base = [rng.random_range(0.7..0.95), rng.random_range(0.3..0.5), 0.15];
    let bg_base = [0.1, rng.random_range(0.3..0.5), rng.random_range(0.7..0.95)];
    let (fp, bp) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
    let alpha = AlphaMatte::from_fn(size, size, |y, x| {
        let d = (((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2)).sqrt();
        ((1.0 - d) / soft + 0.5).clamp(0.0, 1.0)
    });
    let foreground = RgbImage::from_fn(size, size, |c, y, x| {
        fg_base[c] + 0.05 * ((x as f64 * 0.7 + y as f64 * 0.3 + fp + c as f64).sin())
    });
    let background = RgbImage::from_fn(size, size, |c, y, x| {
        bg_base[c] + 0.05 * ((y as f64 * 0.5 - x as f64 * 0.4 + bp + c as f64).cos())
    });
    ToyLayers {
        foreground,
        background,
        alpha,
    }
}

/// A composited training sample with a radius-`trimap_radius` trimap.
pub fn toy_sample(size: usize, seed: u64, trimap_radius: usize) -> MattingSample {
    let l = toy_layers(size, seed);
    let image = composite(&l.foreground, &l.background, &l.alpha).expect("matching dims");
    let trimap = generate_trimap(&l.alpha, trimap_radius);
    MattingSample::new(
        image,
        trimap,
        Some(l.alpha),
        Some(l.foreground),
        Some(l.background),
    )
    .expect("matching dims")
}

/// Writes `fg/`, `alpha/` and `bg/` PNG directories with `n_fg` scenes and
/// `n_bg` plain backgrounds under `root`.
pub fn write_toy_corpus(root: &Path, n_fg: usize, n_bg: usize, size: usize, seed: u64) -> Result<()> {
    for i in 0..n_fg {
        let l = toy_layers(size, seed.wrapping_add(i as u64));
        save_rgb(&l.foreground, &root.join("fg").join(format!("fg{i:03}.png")))?;
        save_alpha(&l.alpha, &root.join("alpha").join(format!("fg{i:03}.png")))?;
    }
    for j in 0..n_bg {
        // odd sizes exercise the cover-resize path
        let side = size / 2 + 3 + j;
        let l = toy_layers(side, seed.wrapping_add(1000 + j as u64));
        save_rgb(&l.background, &root.join("bg").join(format!("bg{j:03}.png")))?;
    }
    Ok(())
}

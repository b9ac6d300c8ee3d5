//! 8-bit PNG encoding of the raster types.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb};

use crate::error::{MattingError, Result};
use crate::raster::{AlphaMatte, RgbImage, Trimap};

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| MattingError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| MattingError::io(parent, e))?;
        }
    }
    Ok(())
}

fn save(img: impl FnOnce(&Path) -> image::ImageResult<()>, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    img(path).map_err(|source| MattingError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = px.0[c] as f64 / 255.0;
        }
    }
    RgbImage::new(h, w, data)
}

pub fn load_alpha(path: &Path) -> Result<AlphaMatte> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    AlphaMatte::new(h, w, img.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
}

pub fn load_trimap(path: &Path) -> Result<Trimap> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Trimap::from_u8(h, w, img.as_raw())
}

pub fn rgb_to_buffer(img: &RgbImage) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let (h, w) = img.dims();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let p = img.pixel(y as usize, x as usize);
        Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])])
    })
}

pub fn alpha_to_buffer(alpha: &AlphaMatte) -> GrayImage {
    let (h, w) = alpha.dims();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([to_u8(alpha.get(y as usize, x as usize))])
    })
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    let buf = rgb_to_buffer(img);
    save(|p| buf.save(p), path)
}

pub fn save_alpha(alpha: &AlphaMatte, path: &Path) -> Result<()> {
    let buf = alpha_to_buffer(alpha);
    save(|p| buf.save(p), path)
}

pub fn save_trimap(trimap: &Trimap, path: &Path) -> Result<()> {
    let (h, w) = trimap.dims();
    let buf = GrayImage::from_raw(w as u32, h as u32, trimap.to_u8())
        .ok_or_else(|| MattingError::Internal("trimap raster size".into()))?;
    save(|p| buf.save(p), path)
}

/// Quantises a matte the same way it would be written to disk.
pub fn quantize_alpha(alpha: &AlphaMatte) -> AlphaMatte {
    let (h, w) = alpha.dims();
    AlphaMatte::from_fn(h, w, |y, x| to_u8(alpha.get(y, x)) as f64 / 255.0)
}

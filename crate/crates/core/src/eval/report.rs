//! Report files: JSON and CSV tables, PNG panels and histograms.

use std::path::Path;

use image::{GrayImage, Luma};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::scalar::Scalar;

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&json);
    Ok(format!("{digest:x}")[..16].to_string())
}

/// Report body stamped with the configuration hash and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Stamped<'a, T> {
    pub config_hash: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Comma-separated table; cells must not contain commas.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Grayscale rendering of channel `c`, min-max scaled per image.
pub fn to_gray<S: Scalar>(img: &Image<S>, c: usize) -> GrayImage {
    let vals: Vec<f64> = img.channel(c).into_iter().map(|v| v.as_f64()).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = vals[y as usize * img.width() + x as usize];
        Luma([((v - lo) / range * 255.0).round() as u8])
    })
}

/// Side-by-side panels of channel `c` of each image, separated by a
/// 2-pixel white gap.
pub fn save_panel_png<S: Scalar>(path: &Path, images: &[&Image<S>], c: usize) -> Result<()> {
    let Some(first) = images.first() else {
        return Err(Error::Domain("no images to draw".into()));
    };
    let (h, w) = (first.height() as u32, first.width() as u32);
    let gap = 2;
    let n = images.len() as u32;
    let mut canvas = GrayImage::from_pixel(n * w + (n - 1) * gap, h, Luma([255]));
    for (i, img) in images.iter().enumerate() {
        if (img.height() as u32, img.width() as u32) != (h, w) {
            return Err(Error::Domain("panel images differ in size".into()));
        }
        let tile = to_gray(img, c.min(img.channels() - 1));
        image::imageops::replace(&mut canvas, &tile, (i as u32 * (w + gap)) as i64, 0);
    }
    canvas.save(path)?;
    Ok(())
}

/// Bar chart of `counts`, 16 pixels per bar and 128 pixels tall.
pub fn save_histogram_png(path: &Path, counts: &[usize]) -> Result<()> {
    let (bar, height) = (16u32, 128u32);
    let max = counts.iter().copied().max().unwrap_or(0).max(1);
    let mut canvas = GrayImage::from_pixel((counts.len() as u32 * bar).max(1), height, Luma([255]));
    for (i, &c) in counts.iter().enumerate() {
        let top = height - (c as u64 * height as u64 / max as u64) as u32;
        for x in i as u32 * bar + 1..(i as u32 + 1) * bar - 1 {
            for y in top..height {
                canvas.put_pixel(x, y, Luma([40]));
            }
        }
    }
    canvas.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&(1, "x")).unwrap();
        assert_eq!(a, config_hash(&(1, "x")).unwrap());
        assert_ne!(a, config_hash(&(2, "x")).unwrap());
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn panel_png_has_expected_width() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 5, 2, |y, x, c| (y + x + c) as f64);
        let path = dir.path().join("p.png");
        save_panel_png(&path, &[&img, &img, &img], 0).unwrap();
        let back = image::open(&path).unwrap();
        assert_eq!((back.width(), back.height()), (19, 4));
    }
}

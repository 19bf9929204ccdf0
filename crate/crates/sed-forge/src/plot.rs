//! Grayscale PNG rendering of matrices (event rolls, probabilities, input patterns).

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{FormatError, Result};

/// Row-major `rows x cols` values; row 0 is drawn at the bottom so that low
/// mel bands and the first class sit low in the image.
pub fn render(values: &[f32], rows: usize, cols: usize, range: Option<(f32, f32)>, scale: u32) -> GrayImage {
    assert_eq!(values.len(), rows * cols, "matrix size mismatch");
    let (lo, hi) = range.unwrap_or_else(|| {
        values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scale = scale.max(1);
    let mut img = GrayImage::new(cols as u32 * scale, rows as u32 * scale);
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let g = if v.is_finite() {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            };
            let y0 = (rows - 1 - r) as u32 * scale;
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(c as u32 * scale + dx, y0 + dy, Luma([g]));
                }
            }
        }
    }
    img
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| FormatError::Invalid {
            path: path.to_path_buf(),
            reason: format!("cannot write PNG: {e}"),
        })
}

/// Stacks images vertically with a one-pixel separator row.
pub fn stack(images: &[GrayImage]) -> GrayImage {
    let width = images.iter().map(|i| i.width()).max().unwrap_or(0);
    let height = images.iter().map(|i| i.height() + 1).sum::<u32>().saturating_sub(1);
    let mut out = GrayImage::from_pixel(width, height, Luma([128]));
    let mut y = 0;
    for img in images {
        image::imageops::replace(&mut out, img, 0, y as i64);
        y += img.height() + 1;
    }
    out
}

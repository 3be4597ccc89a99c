//! PNG export of masks and contrast-image montages for visual inspection.

use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::Array3;

use crate::error::{Error, Result};
use crate::sampling::MaskSet;

const GUTTER: usize = 2;

/// Write normalized [0,1] magnitudes (N, Vy, Vz) as one montage, up to
/// `cols` panels per row.
pub fn montage_to_png(path: impl AsRef<Path>, normalized: &Array3<f64>, cols: usize) -> Result<()> {
    let (n, vy, vz) = normalized.dim();
    if n == 0 || cols == 0 {
        return Err(Error::invalid(
            "montage needs at least one panel and column",
        ));
    }
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let width = cols * vz + (cols - 1) * GUTTER;
    let height = rows * vy + (rows - 1) * GUTTER;
    let mut img = GrayImage::new(width as u32, height as u32);
    for ni in 0..n {
        let (row, col) = (ni / cols, ni % cols);
        let oy = row * (vy + GUTTER);
        let oz = col * (vz + GUTTER);
        for iy in 0..vy {
            for iz in 0..vz {
                let v = (normalized[[ni, iy, iz]].clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel((oz + iz) as u32, (oy + iy) as u32, Luma([v]));
            }
        }
    }
    img.save(path.as_ref())
        .map_err(|e| Error::invalid(format!("png write failed: {e}")))?;
    Ok(())
}

/// Write all masks of a set side by side, sampled points white.
pub fn mask_set_to_png(path: impl AsRef<Path>, masks: &MaskSet) -> Result<()> {
    let (vy, vz) = masks.grid();
    let panels = Array3::from_shape_fn((masks.len(), vy, vz), |(ni, iy, iz)| {
        if masks.masks[ni].bits[[iy, iz]] {
            1.0
        } else {
            0.0
        }
    });
    montage_to_png(path, &panels, 5)
}

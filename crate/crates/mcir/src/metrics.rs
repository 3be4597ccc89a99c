//! Evaluation pipeline: joint percentile normalization over pooled magnitude
//! images, then masked SSIM and PSNR against the reference.
//!
//! Metrics run on magnitudes; phase is discarded here and only here. SSIM
//! uses the canonical 11x11 Gaussian window (sigma 1.5) with C1 = 0.01^2 and
//! C2 = 0.03^2 at unit data range, evaluated at every masked center whose
//! window lies fully inside the image.

use std::fmt;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::operators::ContrastImageStack;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Region over which metrics are computed (phantom support in synthetic runs).
#[derive(Debug, Clone)]
pub struct EvalMask {
    pub bits: Array2<bool>,
}

impl EvalMask {
    pub fn new(bits: Array2<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::invalid("evaluation mask is empty"));
        }
        Ok(EvalMask { bits })
    }

    pub fn full(vy: usize, vz: usize) -> Self {
        EvalMask {
            bits: Array2::from_elem((vy, vz), true),
        }
    }
}

/// PSNR with the identical-input case kept distinct from any finite dB value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Identical,
    Db(f64),
}

impl Psnr {
    pub fn db(&self) -> Option<f64> {
        match self {
            Psnr::Identical => None,
            Psnr::Db(v) => Some(*v),
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => write!(f, "identical"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

/// Percentile of pre-sorted data as the order statistic at floor(p/100 *
/// (M-1)). Using an exact order statistic (rather than interpolating between
/// two) makes normalization exactly idempotent: re-normalizing already
/// normalized data with the same percentiles is the identity within clipping.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = p / 100.0 * (sorted.len() as f64 - 1.0);
    sorted[h.floor() as usize]
}

/// Pool magnitudes of all masked voxels of all stacks and return the
/// (p_lo, p_hi) percentile pair used for normalization.
pub fn pooled_percentile_bounds(
    stacks: &[(&ContrastImageStack, Option<&EvalMask>)],
    p_lo: f64,
    p_hi: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::invalid(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got ({p_lo}, {p_hi})"
        )));
    }
    let mut pool = Vec::new();
    for (stack, mask) in stacks {
        let (n, vy, vz) = stack.data.dim();
        if let Some(m) = mask {
            if m.bits.dim() != (vy, vz) {
                return Err(Error::shape(
                    format!("mask on {vy}x{vz}"),
                    format!("{:?}", m.bits.dim()),
                ));
            }
        }
        for ni in 0..n {
            for iy in 0..vy {
                for iz in 0..vz {
                    if mask.is_none_or(|m| m.bits[[iy, iz]]) {
                        pool.push(stack.data[[ni, iy, iz]].norm());
                    }
                }
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::invalid("no voxels selected for normalization"));
    }
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile_sorted(&pool, p_lo);
    let hi = percentile_sorted(&pool, p_hi);
    if hi <= lo {
        return Err(Error::DegenerateNormalization(lo));
    }
    Ok((lo, hi))
}

/// Map magnitudes through the shared bounds and clip into [0, 1].
pub fn normalize_with_bounds(stack: &ContrastImageStack, bounds: (f64, f64)) -> Array3<f64> {
    let (lo, hi) = bounds;
    stack
        .data
        .mapv(|v| ((v.norm() - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Normalize several stacks with one pooled percentile pair (single shared
/// evaluation mask; pass None to pool every voxel).
pub fn joint_percentile_normalize(
    stacks: &[&ContrastImageStack],
    mask: Option<&EvalMask>,
    p_lo: f64,
    p_hi: f64,
) -> Result<Vec<Array3<f64>>> {
    let pairs: Vec<_> = stacks.iter().map(|s| (*s, mask)).collect();
    let bounds = pooled_percentile_bounds(&pairs, p_lo, p_hi)?;
    Ok(stacks
        .iter()
        .map(|s| normalize_with_bounds(s, bounds))
        .collect())
}

/// Peak signal-to-noise ratio over masked voxels of [0,1]-normalized images.
pub fn psnr(reference: &Array2<f64>, test: &Array2<f64>, mask: &EvalMask) -> Result<Psnr> {
    if reference.dim() != test.dim() || reference.dim() != mask.bits.dim() {
        return Err(Error::shape(
            format!("{:?}", reference.dim()),
            format!("{:?} / {:?}", test.dim(), mask.bits.dim()),
        ));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (iy, iz) in ndarray::indices(reference.dim()) {
        if mask.bits[[iy, iz]] {
            sum += (reference[[iy, iz]] - test[[iy, iz]]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("evaluation mask is empty"));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        Ok(Psnr::Identical)
    } else {
        Ok(Psnr::Db(10.0 * (1.0 / mse).log10()))
    }
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as i64;
    let mut w = Array2::zeros((SSIM_WINDOW, SSIM_WINDOW));
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let dy = i as i64 - half;
            let dz = j as i64 - half;
            let v = (-((dy * dy + dz * dz) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[[i, j]] = v;
            total += v;
        }
    }
    w.mapv_inplace(|v| v / total);
    w
}

/// Mean local SSIM over masked window centers. Inputs must be normalized to
/// [0, 1]; windows that would leave the image are skipped.
pub fn ssim(reference: &Array2<f64>, test: &Array2<f64>, mask: &EvalMask) -> Result<f64> {
    let (vy, vz) = reference.dim();
    if test.dim() != (vy, vz) || mask.bits.dim() != (vy, vz) {
        return Err(Error::shape(
            format!("{vy}x{vz}"),
            format!("{:?} / {:?}", test.dim(), mask.bits.dim()),
        ));
    }
    if SSIM_WINDOW > vy || SSIM_WINDOW > vz {
        return Err(Error::invalid(format!(
            "SSIM window {SSIM_WINDOW} larger than image {vy}x{vz}"
        )));
    }
    let half = SSIM_WINDOW / 2;
    let w = gaussian_window();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for cy in half..vy - half {
        for cz in half..vz - half {
            if !mask.bits[[cy, cz]] {
                continue;
            }
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let wv = w[[i, j]];
                    let x = reference[[cy + i - half, cz + j - half]];
                    let y = test[[cy + i - half, cz + j - half]];
                    mu_x += wv * x;
                    mu_y += wv * y;
                    xx += wv * x * x;
                    yy += wv * y * y;
                    xy += wv * x * y;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let val = ((2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2));
            acc += val;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("no masked voxel admits a full SSIM window"));
    }
    Ok(acc / count as f64)
}

/// SSIM and PSNR per contrast plus aggregates over contrasts.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub ssim_per_contrast: Vec<f64>,
    pub psnr_per_contrast: Vec<Psnr>,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    /// Mean/std over contrasts with finite PSNR; None if all were identical.
    pub psnr_mean_db: Option<f64>,
    pub psnr_std_db: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_values(ssim: Vec<f64>, psnr: Vec<Psnr>) -> Self {
        let (ssim_mean, ssim_std) = mean_std(&ssim);
        let dbs: Vec<f64> = psnr.iter().filter_map(|p| p.db()).collect();
        let (psnr_mean_db, psnr_std_db) = if dbs.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&dbs);
            (Some(m), Some(s))
        };
        MetricReport {
            ssim_per_contrast: ssim,
            psnr_per_contrast: psnr,
            ssim_mean,
            ssim_std,
            psnr_mean_db,
            psnr_std_db,
        }
    }

    /// Machine-parsable key=value lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("contrasts={}\n", self.ssim_per_contrast.len()));
        out.push_str(&format!("ssim_mean={:.6}\n", self.ssim_mean));
        out.push_str(&format!("ssim_std={:.6}\n", self.ssim_std));
        match (self.psnr_mean_db, self.psnr_std_db) {
            (Some(m), Some(s)) => {
                out.push_str(&format!("psnr_mean_db={m:.4}\n"));
                out.push_str(&format!("psnr_std_db={s:.4}\n"));
            }
            _ => out.push_str("psnr_mean_db=identical\npsnr_std_db=identical\n"),
        }
        for (i, v) in self.ssim_per_contrast.iter().enumerate() {
            out.push_str(&format!("ssim_contrast_{i}={v:.6}\n"));
        }
        for (i, v) in self.psnr_per_contrast.iter().enumerate() {
            out.push_str(&format!("psnr_db_contrast_{i}={v}\n"));
        }
        out
    }
}

/// Full evaluation of a reconstruction against its reference: pool both
/// stacks for one normalization, then masked SSIM/PSNR per contrast.
pub fn evaluate_stacks(
    reference: &ContrastImageStack,
    test: &ContrastImageStack,
    mask: &EvalMask,
    p_lo: f64,
    p_hi: f64,
) -> Result<MetricReport> {
    if reference.data.dim() != test.data.dim() {
        return Err(Error::shape(
            format!("{:?}", reference.data.dim()),
            format!("{:?}", test.data.dim()),
        ));
    }
    let normalized = joint_percentile_normalize(&[reference, test], Some(mask), p_lo, p_hi)?;
    let (n, _, _) = reference.data.dim();
    let mut ssims = Vec::with_capacity(n);
    let mut psnrs = Vec::with_capacity(n);
    for ni in 0..n {
        let r = normalized[0].index_axis(ndarray::Axis(0), ni).to_owned();
        let t = normalized[1].index_axis(ndarray::Axis(0), ni).to_owned();
        ssims.push(ssim(&r, &t, mask)?);
        psnrs.push(psnr(&r, &t, mask)?);
    }
    Ok(MetricReport::from_values(ssims, psnrs))
}

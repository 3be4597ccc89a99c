//! Variable-density Poisson disk undersampling masks.
//!
//! Masks keep a fully sampled disk at the k-space center and place the
//! remaining samples by Bridson-style dart throwing on the integer k-space
//! lattice, with a local minimum-distance function that grows linearly with
//! the distance from the center. The base radius is calibrated by bisection
//! until the achieved acceleration matches the requested one. Different
//! seeds give complementary patterns across contrasts.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{centered_index, ifft2c};

/// Default growth of the minimum-distance radius from center to k-max.
pub const DEFAULT_RADIUS_GROWTH: f64 = 2.5;

/// Default fully sampled center radius at a 160-wide grid; scaled
/// proportionally for other grid sizes by [`default_center_radius`].
pub const DEFAULT_CENTER_RADIUS_AT_160: f64 = 8.0;

/// Regression bound on the PSF sidelobe-to-mainlobe ratio of generated masks.
pub const PSF_SIDELOBE_REGRESSION_BOUND: f64 = 0.15;

/// Center-disk radius scaled proportionally to the grid size.
pub fn default_center_radius(vy: usize, vz: usize) -> f64 {
    DEFAULT_CENTER_RADIUS_AT_160 * (vy.min(vz) as f64) / 160.0
}

/// Tunables of the variable-density Poisson disk generator.
#[derive(Debug, Clone)]
pub struct PoissonConfig {
    /// Requested acceleration R = grid points / sampled points.
    pub target_r: f64,
    /// Radius of the fully sampled center disk, in k-space index units.
    pub center_radius: f64,
    /// Linear growth of the minimum-distance radius: r(k) = r0 (1 + alpha |k|/|k|max).
    pub alpha: f64,
    /// Relative tolerance on the achieved acceleration.
    pub calib_tol: f64,
    /// Bisection iteration budget for the radius calibration.
    pub max_calib_iters: usize,
    /// Dart-throwing attempts per active point.
    pub candidates_per_point: usize,
}

impl PoissonConfig {
    pub fn new(target_r: f64, center_radius: f64) -> Self {
        PoissonConfig {
            target_r,
            center_radius,
            alpha: DEFAULT_RADIUS_GROWTH,
            calib_tol: 0.1,
            max_calib_iters: 40,
            candidates_per_point: 30,
        }
    }
}

/// One binary undersampling mask on the (ky, kz) lattice.
#[derive(Debug, Clone)]
pub struct SamplingMask {
    pub bits: Array2<bool>,
    /// Index of the contrast this mask belongs to.
    pub contrast: usize,
    pub seed: u64,
    pub center_radius: f64,
    pub target_r: f64,
    /// Calibrated base radius r0 of the minimum-distance law; None for masks
    /// rebuilt from raw bits.
    pub base_radius: Option<f64>,
}

impl SamplingMask {
    /// Wrap raw bits, e.g. read back from a container. No pattern
    /// invariants are checked; generated masks come from [`vd_poisson_mask`].
    pub fn from_bits(
        bits: Array2<bool>,
        contrast: usize,
        seed: u64,
        center_radius: f64,
        target_r: f64,
    ) -> Self {
        SamplingMask {
            bits,
            contrast,
            seed,
            center_radius,
            target_r,
            base_radius: None,
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        self.bits.dim()
    }

    pub fn sampled_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Per-contrast masks sharing one grid and center disk.
#[derive(Debug, Clone)]
pub struct MaskSet {
    pub masks: Vec<SamplingMask>,
}

impl MaskSet {
    pub fn from_masks(masks: Vec<SamplingMask>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::invalid("mask set must hold at least one mask"));
        }
        let grid = masks[0].grid();
        if masks.iter().any(|m| m.grid() != grid) {
            return Err(Error::invalid("masks in a set must share one grid"));
        }
        Ok(MaskSet { masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn grid(&self) -> (usize, usize) {
        self.masks[0].grid()
    }

    /// Fraction of the grid covered by the union of all masks.
    pub fn union_coverage(&self) -> f64 {
        let (vy, vz) = self.grid();
        let mut union = Array2::from_elem((vy, vz), false);
        for m in &self.masks {
            union.zip_mut_with(&m.bits, |u, &b| *u |= b);
        }
        union.iter().filter(|&&b| b).count() as f64 / (vy * vz) as f64
    }
}

fn validate_params(vy: usize, vz: usize, cfg: &PoissonConfig) -> Result<()> {
    if vy < 2 || vz < 2 {
        return Err(Error::invalid("grid must be at least 2x2"));
    }
    if cfg.target_r < 1.0 {
        return Err(Error::invalid(format!(
            "target acceleration must be >= 1, got {}",
            cfg.target_r
        )));
    }
    if cfg.center_radius < 0.0 || cfg.center_radius >= (vy.min(vz) as f64) / 2.0 {
        return Err(Error::invalid(format!(
            "center radius must lie in [0, {}), got {}",
            vy.min(vz) as f64 / 2.0,
            cfg.center_radius
        )));
    }
    if cfg.alpha < 0.0 {
        return Err(Error::invalid("radius growth alpha must be >= 0"));
    }
    Ok(())
}

/// Largest distance from the center index to any grid corner, in index units.
fn max_k_radius(vy: usize, vz: usize) -> f64 {
    let (cy, cz) = (centered_index(vy) as f64, centered_index(vz) as f64);
    let dy = cy.max(vy as f64 - 1.0 - cy);
    let dz = cz.max(vz as f64 - 1.0 - cz);
    (dy * dy + dz * dz).sqrt()
}

/// One dart-throwing pass at a fixed base radius. Deterministic in the seed.
fn generate_at_radius(
    vy: usize,
    vz: usize,
    center_radius: f64,
    alpha: f64,
    r0: f64,
    seed: u64,
    candidates_per_point: usize,
) -> Array2<bool> {
    let (cy, cz) = (centered_index(vy) as f64, centered_index(vz) as f64);
    let kmax = max_k_radius(vy, vz);
    let radius_at = |y: f64, z: f64| -> f64 {
        let d = ((y - cy).powi(2) + (z - cz).powi(2)).sqrt();
        r0 * (1.0 + alpha * d / kmax)
    };

    let mut bits = Array2::from_elem((vy, vz), false);
    let in_center = |iy: usize, iz: usize| -> bool {
        let d = ((iy as f64 - cy).powi(2) + (iz as f64 - cz).powi(2)).sqrt();
        d <= center_radius + 1e-12
    };
    for iy in 0..vy {
        for iz in 0..vz {
            if in_center(iy, iz) {
                bits[[iy, iz]] = true;
            }
        }
    }

    // Lattice spacing is 1, so no pair can ever conflict once radii are <= 1.
    if r0 * (1.0 + alpha) <= 1.0 {
        bits.fill(true);
        return bits;
    }

    // Sampled points outside the center disk; only these carry the
    // minimum-distance constraint.
    let mut outside = Array2::from_elem((vy, vz), false);
    let conflicts = |outside: &Array2<bool>, qy: usize, qz: usize, rq: f64| -> bool {
        let w = rq.ceil() as i64;
        let y0 = (qy as i64 - w).max(0) as usize;
        let y1 = ((qy as i64 + w) as usize).min(vy - 1);
        let z0 = (qz as i64 - w).max(0) as usize;
        let z1 = ((qz as i64 + w) as usize).min(vz - 1);
        for py in y0..=y1 {
            for pz in z0..=z1 {
                if !outside[[py, pz]] {
                    continue;
                }
                let d2 = (py as f64 - qy as f64).powi(2) + (pz as f64 - qz as f64).powi(2);
                let rmin = radius_at(py as f64, pz as f64).min(rq);
                if d2 < rmin * rmin {
                    return true;
                }
            }
        }
        false
    };

    // Seed the active list with the center disk (always nonempty: the exact
    // center index is inside any disk of radius >= 0).
    let mut active: Vec<(usize, usize)> = Vec::new();
    for iy in 0..vy {
        for iz in 0..vz {
            if bits[[iy, iz]] {
                active.push((iy, iz));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !active.is_empty() {
        let pick = rng.random_range(0..active.len());
        let (py, pz) = active[pick];
        let spawn_r = radius_at(py as f64, pz as f64).max(1.0);
        let mut accepted = false;
        for _ in 0..candidates_per_point {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let rr = spawn_r * (1.0 + rng.random::<f64>());
            let qy = (py as f64 + rr * theta.cos()).round();
            let qz = (pz as f64 + rr * theta.sin()).round();
            if qy < 0.0 || qz < 0.0 || qy >= vy as f64 || qz >= vz as f64 {
                continue;
            }
            let (qyu, qzu) = (qy as usize, qz as usize);
            if bits[[qyu, qzu]] {
                continue;
            }
            let rq = radius_at(qy, qz);
            if conflicts(&outside, qyu, qzu, rq) {
                continue;
            }
            bits[[qyu, qzu]] = true;
            outside[[qyu, qzu]] = true;
            active.push((qyu, qzu));
            accepted = true;
            break;
        }
        if !accepted {
            active.swap_remove(pick);
        }
    }
    bits
}

fn achieved_r(total: usize, count: usize) -> f64 {
    total as f64 / count as f64
}

fn within_tol(achieved: f64, target: f64, tol: f64) -> bool {
    achieved <= target * (1.0 + tol) && achieved >= target / (1.0 + tol)
}

/// Generate one variable-density Poisson disk mask, calibrating the base
/// radius by bisection until the achieved acceleration is within the
/// configured tolerance of the target.
pub fn vd_poisson_mask_with(
    vy: usize,
    vz: usize,
    cfg: &PoissonConfig,
    contrast: usize,
    seed: u64,
) -> Result<SamplingMask> {
    validate_params(vy, vz, cfg)?;
    let total = vy * vz;
    let wrap = |bits: Array2<bool>, r0: f64| {
        let mut m = SamplingMask::from_bits(bits, contrast, seed, cfg.center_radius, cfg.target_r);
        m.base_radius = Some(r0);
        m
    };

    // No acceleration requested: calibration degenerates to full sampling.
    if cfg.target_r <= 1.0 {
        return Ok(wrap(Array2::from_elem((vy, vz), true), 0.0));
    }

    let gen = |r0: f64| -> Array2<bool> {
        if r0 <= 0.0 {
            Array2::from_elem((vy, vz), true)
        } else {
            generate_at_radius(
                vy,
                vz,
                cfg.center_radius,
                cfg.alpha,
                r0,
                seed,
                cfg.candidates_per_point,
            )
        }
    };

    // The center disk bounds the achievable acceleration from above.
    let mut center_only = 0usize;
    {
        let (cy, cz) = (centered_index(vy) as f64, centered_index(vz) as f64);
        for iy in 0..vy {
            for iz in 0..vz {
                let d = ((iy as f64 - cy).powi(2) + (iz as f64 - cz).powi(2)).sqrt();
                if d <= cfg.center_radius + 1e-12 {
                    center_only += 1;
                }
            }
        }
    }
    let r_ceiling = achieved_r(total, center_only.max(1));
    if cfg.target_r / (1.0 + cfg.calib_tol) > r_ceiling {
        return Err(Error::MaskCalibration {
            target: cfg.target_r,
            min: 1.0,
            max: r_ceiling,
        });
    }

    // Bracket the target: R grows with r0.
    let mut lo = 0.0_f64;
    let mut lo_r = 1.0_f64;
    let mut hi = 1.0_f64;
    let mut iters = 0usize;
    let (mut hi_bits, mut hi_r);
    loop {
        hi_bits = gen(hi);
        hi_r = achieved_r(total, hi_bits.iter().filter(|&&b| b).count());
        iters += 1;
        if within_tol(hi_r, cfg.target_r, cfg.calib_tol) {
            return Ok(wrap(hi_bits, hi));
        }
        if hi_r > cfg.target_r {
            break;
        }
        lo = hi;
        lo_r = hi_r;
        hi *= 2.0;
        if hi > 4.0 * max_k_radius(vy, vz) || iters >= cfg.max_calib_iters {
            return Err(Error::MaskCalibration {
                target: cfg.target_r,
                min: 1.0,
                max: hi_r.max(lo_r),
            });
        }
    }

    let mut best_bits = hi_bits;
    let mut best_r = hi_r;
    let mut best_r0 = hi;
    while iters < cfg.max_calib_iters {
        let mid = 0.5 * (lo + hi);
        let bits = gen(mid);
        let r = achieved_r(total, bits.iter().filter(|&&b| b).count());
        iters += 1;
        if within_tol(r, cfg.target_r, cfg.calib_tol) {
            return Ok(wrap(bits, mid));
        }
        if (r - cfg.target_r).abs() < (best_r - cfg.target_r).abs() {
            best_bits = bits;
            best_r = r;
            best_r0 = mid;
        }
        if r > cfg.target_r {
            hi = mid;
        } else {
            lo = mid;
            lo_r = r;
        }
    }
    if within_tol(best_r, cfg.target_r, cfg.calib_tol) {
        return Ok(wrap(best_bits, best_r0));
    }
    Err(Error::MaskCalibration {
        target: cfg.target_r,
        min: lo_r.min(best_r),
        max: best_r.max(lo_r),
    })
}

/// Convenience wrapper with default tunables.
pub fn vd_poisson_mask(
    grid: (usize, usize),
    target_r: f64,
    center_radius: f64,
    seed: u64,
) -> Result<SamplingMask> {
    vd_poisson_mask_with(
        grid.0,
        grid.1,
        &PoissonConfig::new(target_r, center_radius),
        0,
        seed,
    )
}

/// N complementary masks from consecutive seeds base_seed..base_seed+N-1.
pub fn complementary_mask_set(
    grid: (usize, usize),
    target_r: f64,
    center_radius: f64,
    n_contrasts: usize,
    base_seed: u64,
) -> Result<MaskSet> {
    complementary_mask_set_with(
        grid.0,
        grid.1,
        &PoissonConfig::new(target_r, center_radius),
        n_contrasts,
        base_seed,
    )
}

pub fn complementary_mask_set_with(
    vy: usize,
    vz: usize,
    cfg: &PoissonConfig,
    n_contrasts: usize,
    base_seed: u64,
) -> Result<MaskSet> {
    if n_contrasts == 0 {
        return Err(Error::invalid("need at least one contrast"));
    }
    let masks = (0..n_contrasts)
        .map(|n| vd_poisson_mask_with(vy, vz, cfg, n, base_seed + n as u64))
        .collect::<Result<Vec<_>>>()?;
    MaskSet::from_masks(masks)
}

/// Whole-mask acceleration: grid points / sampled points.
pub fn acceleration_of(mask: &SamplingMask) -> Result<f64> {
    let count = mask.sampled_count();
    if count == 0 {
        return Err(Error::invalid("mask has no sampled points"));
    }
    let (vy, vz) = mask.grid();
    Ok(achieved_r(vy * vz, count))
}

/// Sidelobe-to-mainlobe ratio of the mask point-spread function.
///
/// The PSF is the centered inverse FFT of the mask; the mainlobe is its
/// magnitude at the center index and sidelobes are taken outside the 3x3
/// neighborhood around it. Lower means more incoherent aliasing.
pub fn psf_sidelobe_ratio(mask: &SamplingMask) -> f64 {
    let (vy, vz) = mask.grid();
    let as_complex = mask.bits.mapv(|b| {
        if b {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let psf = ifft2c(&as_complex);
    let (cy, cz) = (centered_index(vy), centered_index(vz));
    let mainlobe = psf[[cy, cz]].norm();
    let mut sidelobe = 0.0_f64;
    for iy in 0..vy {
        for iz in 0..vz {
            if iy.abs_diff(cy) <= 1 && iz.abs_diff(cz) <= 1 {
                continue;
            }
            sidelobe = sidelobe.max(psf[[iy, iz]].norm());
        }
    }
    sidelobe / mainlobe
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center_distance(iy: usize, iz: usize, vy: usize, vz: usize) -> f64 {
        let (cy, cz) = (centered_index(vy) as f64, centered_index(vz) as f64);
        ((iy as f64 - cy).powi(2) + (iz as f64 - cz).powi(2)).sqrt()
    }

    #[test]
    fn target_r_one_gives_full_mask() {
        let m = vd_poisson_mask((32, 32), 1.0, 3.0, 5).unwrap();
        assert_eq!(m.sampled_count(), 32 * 32);
        assert_eq!(acceleration_of(&m).unwrap(), 1.0);
    }

    #[test]
    fn popcount_within_tolerance_r8() {
        let m = vd_poisson_mask((160, 160), 8.0, 8.0, 7).unwrap();
        let count = m.sampled_count() as f64;
        let nominal = 160.0 * 160.0 / 8.0;
        assert!(count >= nominal * 0.9, "count {count} below {nominal}*0.9");
        assert!(count <= nominal * 1.1, "count {count} above {nominal}*1.1");
        let r = acceleration_of(&m).unwrap();
        assert!((8.0 / 1.1..=8.0 * 1.1).contains(&r), "achieved R {r}");
    }

    #[test]
    fn center_disk_fully_sampled() {
        let m = vd_poisson_mask((96, 96), 6.0, 5.0, 21).unwrap();
        let (vy, vz) = m.grid();
        for iy in 0..vy {
            for iz in 0..vz {
                if center_distance(iy, iz, vy, vz) <= 5.0 {
                    assert!(m.bits[[iy, iz]], "center point ({iy},{iz}) unsampled");
                }
            }
        }
    }

    #[test]
    fn minimum_distance_property() {
        let m = vd_poisson_mask((96, 96), 6.0, 5.0, 3).unwrap();
        let (vy, vz) = m.grid();
        let kmax = max_k_radius(vy, vz);
        let r0 = m.base_radius.expect("generator records base radius");
        // the law must actually constrain the outer k-space (lattice spacing 1)
        assert!(
            r0 * (1.0 + DEFAULT_RADIUS_GROWTH) > 1.0,
            "radius law vacuous with r0 = {r0}"
        );
        let pts: Vec<(usize, usize)> = (0..vy)
            .flat_map(|iy| (0..vz).map(move |iz| (iy, iz)))
            .filter(|&(iy, iz)| {
                m.bits[[iy, iz]] && center_distance(iy, iz, vy, vz) > m.center_radius + 1e-12
            })
            .collect();
        for (a, &(ay, az)) in pts.iter().enumerate() {
            for &(by, bz) in &pts[a + 1..] {
                let d = ((ay as f64 - by as f64).powi(2) + (az as f64 - bz as f64).powi(2)).sqrt();
                let ra =
                    r0 * (1.0 + DEFAULT_RADIUS_GROWTH * center_distance(ay, az, vy, vz) / kmax);
                let rb =
                    r0 * (1.0 + DEFAULT_RADIUS_GROWTH * center_distance(by, bz, vy, vz) / kmax);
                assert!(
                    d >= ra.min(rb) * (1.0 - 1e-9),
                    "pair ({ay},{az})-({by},{bz}) spaced {d} < {}",
                    ra.min(rb)
                );
            }
        }
    }

    #[test]
    fn determinism_same_seed() {
        let a = vd_poisson_mask((96, 96), 8.0, 5.0, 77).unwrap();
        let b = vd_poisson_mask((96, 96), 8.0, 5.0, 77).unwrap();
        assert_eq!(a.bits, b.bits);
    }

    #[test]
    fn different_seeds_differ() {
        let a = vd_poisson_mask((96, 96), 8.0, 5.0, 1).unwrap();
        let b = vd_poisson_mask((96, 96), 8.0, 5.0, 2).unwrap();
        assert_ne!(a.bits, b.bits);
    }

    #[test]
    fn singleton_set_matches_single_mask() {
        let set = complementary_mask_set((64, 64), 4.0, 3.2, 1, 13).unwrap();
        let single = vd_poisson_mask((64, 64), 4.0, 3.2, 13).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.masks[0].bits, single.bits);
    }

    #[test]
    fn union_coverage_exceeds_single() {
        let set = complementary_mask_set((64, 64), 4.0, 3.2, 4, 100).unwrap();
        let union = set.union_coverage();
        for m in &set.masks {
            let single = m.sampled_count() as f64 / (64.0 * 64.0);
            assert!(union > single, "union {union} not above single {single}");
        }
    }

    #[test]
    fn mask_set_determinism() {
        let a = complementary_mask_set((64, 64), 6.0, 3.2, 3, 5).unwrap();
        let b = complementary_mask_set((64, 64), 6.0, 3.2, 3, 5).unwrap();
        for (ma, mb) in a.masks.iter().zip(&b.masks) {
            assert_eq!(ma.bits, mb.bits);
        }
    }

    #[test]
    fn infeasible_target_reports_range() {
        // A center disk covering most of the grid caps the acceleration.
        let err = vd_poisson_mask((32, 32), 20.0, 15.0, 1).unwrap_err();
        match err {
            Error::MaskCalibration { target, min, max } => {
                assert_eq!(target, 20.0);
                assert!(min >= 1.0 && max < 20.0, "range [{min}, {max}]");
            }
            other => panic!("expected MaskCalibration, got {other:?}"),
        }
    }

    #[test]
    fn acceleration_of_half_sampled() {
        let mut bits = Array2::from_elem((8, 8), false);
        for iy in 0..8 {
            for iz in 0..4 {
                bits[[iy, iz]] = true;
            }
        }
        let m = SamplingMask::from_bits(bits, 0, 0, 0.0, 2.0);
        assert_eq!(acceleration_of(&m).unwrap(), 2.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = SamplingMask::from_bits(Array2::from_elem((4, 4), false), 0, 0, 0.0, 1.0);
        assert!(acceleration_of(&m).is_err());
    }

    #[test]
    fn psf_sidelobe_regression() {
        let m = vd_poisson_mask((160, 160), 8.0, 8.0, 9).unwrap();
        let ratio = psf_sidelobe_ratio(&m);
        assert!(
            ratio < PSF_SIDELOBE_REGRESSION_BOUND,
            "psf sidelobe ratio {ratio} above regression bound"
        );
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(vd_poisson_mask((64, 64), 0.5, 3.0, 1).is_err());
        assert!(vd_poisson_mask((64, 64), 4.0, 40.0, 1).is_err());
        assert!(complementary_mask_set((64, 64), 4.0, 3.0, 0, 1).is_err());
    }
}

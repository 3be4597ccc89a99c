//! Synthetic multi-contrast brain phantoms, coil sensitivity maps and
//! measurement noise, so the whole pipeline can be exercised and verified
//! without scanner data.
//!
//! The phantom is a painter's-order stack of ellipses over a small tissue
//! table (WM / GM / CSF). Contrast images follow the ideal inversion-recovery
//! signal m0 * (1 - 2 exp(-TI/T1)), kept signed so tissue null crossings
//! appear exactly as in the acquisition they mimic.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operators::{ContrastImageStack, KSpaceData};

/// Default inversion-time schedule start, in milliseconds.
pub const DEFAULT_TI_FIRST_MS: f64 = 26.0;
/// Default inversion-time spacing, in milliseconds.
pub const DEFAULT_TI_DELTA_MS: f64 = 249.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TissueLabel {
    Background,
    Wm,
    Gm,
    Csf,
}

impl TissueLabel {
    pub fn name(self) -> &'static str {
        match self {
            TissueLabel::Background => "background",
            TissueLabel::Wm => "wm",
            TissueLabel::Gm => "gm",
            TissueLabel::Csf => "csf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "background" => Ok(TissueLabel::Background),
            "wm" => Ok(TissueLabel::Wm),
            "gm" => Ok(TissueLabel::Gm),
            "csf" => Ok(TissueLabel::Csf),
            other => Err(Error::invalid(format!("unknown tissue label '{other}'"))),
        }
    }
}

/// Relaxation and proton-density parameters of one tissue.
#[derive(Debug, Clone, Copy)]
pub struct TissueClass {
    pub label: TissueLabel,
    pub t1_ms: f64,
    pub m0: f64,
}

/// One ellipse in normalized [-1, 1]^2 coordinates (y = row axis).
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub rotation_deg: f64,
    pub tissue: TissueLabel,
}

impl Ellipse {
    pub fn contains(&self, y: f64, z: f64) -> bool {
        let (dy, dz) = (y - self.center.0, z - self.center.1);
        let th = self.rotation_deg.to_radians();
        let (s, c) = th.sin_cos();
        let u = c * dy + s * dz;
        let v = -s * dy + c * dz;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub grid: (usize, usize),
    pub ellipses: Vec<Ellipse>,
    pub tissues: Vec<TissueClass>,
    pub ti_schedule_ms: Vec<f64>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let (vy, vz) = self.grid;
        if vy < 8 || vz < 8 {
            return Err(Error::invalid("phantom grid must be at least 8x8"));
        }
        if self.ti_schedule_ms.is_empty() {
            return Err(Error::invalid("TI schedule must not be empty"));
        }
        if self.ti_schedule_ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("TI schedule must be strictly increasing"));
        }
        if self.ti_schedule_ms.iter().any(|&ti| ti < 0.0) {
            return Err(Error::invalid("TI values must be nonnegative"));
        }
        for t in &self.tissues {
            if t.m0 < 0.0 {
                return Err(Error::invalid("proton density m0 must be nonnegative"));
            }
            match t.label {
                TissueLabel::Background => {
                    if t.m0 != 0.0 {
                        return Err(Error::invalid("background must have m0 = 0"));
                    }
                }
                _ => {
                    if t.t1_ms <= 0.0 {
                        return Err(Error::invalid(format!(
                            "tissue {} must have T1 > 0",
                            t.label.name()
                        )));
                    }
                }
            }
        }
        for e in &self.ellipses {
            if self.tissue(e.tissue).is_none() {
                return Err(Error::invalid(format!(
                    "ellipse references tissue '{}' missing from the table",
                    e.tissue.name()
                )));
            }
            if e.axes.0 <= 0.0 || e.axes.1 <= 0.0 {
                return Err(Error::invalid("ellipse axes must be positive"));
            }
        }
        Ok(())
    }

    pub fn tissue(&self, label: TissueLabel) -> Option<&TissueClass> {
        self.tissues.iter().find(|t| t.label == label)
    }

    pub fn n_contrasts(&self) -> usize {
        self.ti_schedule_ms.len()
    }

    /// Evenly spaced default schedule: 26 ms start, 249.05 ms spacing.
    pub fn default_ti_schedule(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| DEFAULT_TI_FIRST_MS + i as f64 * DEFAULT_TI_DELTA_MS)
            .collect()
    }

    /// Standard three-tissue table at 3T-like values.
    pub fn default_tissues() -> Vec<TissueClass> {
        vec![
            TissueClass {
                label: TissueLabel::Background,
                t1_ms: 1.0,
                m0: 0.0,
            },
            TissueClass {
                label: TissueLabel::Wm,
                t1_ms: 850.0,
                m0: 0.70,
            },
            TissueClass {
                label: TissueLabel::Gm,
                t1_ms: 1350.0,
                m0: 0.82,
            },
            TissueClass {
                label: TissueLabel::Csf,
                t1_ms: 4200.0,
                m0: 1.0,
            },
        ]
    }

    /// Brain-like default geometry: GM shell, WM interior, CSF ventricles and
    /// a pair of deep GM nuclei.
    pub fn default_brain(vy: usize, vz: usize, n_contrasts: usize) -> Self {
        let ellipses = vec![
            Ellipse {
                center: (0.0, 0.0),
                axes: (0.86, 0.68),
                rotation_deg: 0.0,
                tissue: TissueLabel::Gm,
            },
            Ellipse {
                center: (0.02, 0.0),
                axes: (0.72, 0.54),
                rotation_deg: 0.0,
                tissue: TissueLabel::Wm,
            },
            Ellipse {
                center: (-0.08, -0.14),
                axes: (0.30, 0.09),
                rotation_deg: 78.0,
                tissue: TissueLabel::Csf,
            },
            Ellipse {
                center: (-0.08, 0.14),
                axes: (0.30, 0.09),
                rotation_deg: -78.0,
                tissue: TissueLabel::Csf,
            },
            Ellipse {
                center: (0.34, -0.19),
                axes: (0.14, 0.10),
                rotation_deg: 24.0,
                tissue: TissueLabel::Gm,
            },
            Ellipse {
                center: (0.34, 0.19),
                axes: (0.14, 0.10),
                rotation_deg: -24.0,
                tissue: TissueLabel::Gm,
            },
            Ellipse {
                center: (0.14, 0.0),
                axes: (0.11, 0.035),
                rotation_deg: 90.0,
                tissue: TissueLabel::Csf,
            },
        ];
        PhantomSpec {
            grid: (vy, vz),
            ellipses,
            tissues: Self::default_tissues(),
            ti_schedule_ms: Self::default_ti_schedule(n_contrasts),
        }
    }
}

/// Voxel center in normalized [-1, 1] coordinates.
fn voxel_coord(i: usize, v: usize) -> f64 {
    (i as f64 + 0.5) / v as f64 * 2.0 - 1.0
}

/// Paint the label image: each voxel carries the label of the last ellipse
/// containing its center, or background.
pub fn render_tissue_map(spec: &PhantomSpec) -> Result<Array2<TissueLabel>> {
    spec.validate()?;
    let (vy, vz) = spec.grid;
    let mut labels = Array2::from_elem((vy, vz), TissueLabel::Background);
    for e in &spec.ellipses {
        // conservative bounding box in normalized coordinates
        let th = e.rotation_deg.to_radians();
        let ry = (e.axes.0 * th.cos()).abs() + (e.axes.1 * th.sin()).abs();
        let rz = (e.axes.0 * th.sin()).abs() + (e.axes.1 * th.cos()).abs();
        let to_index = |x: f64, v: usize| -> (usize, usize) {
            let lo = ((x - 1e-12 + 1.0) / 2.0 * v as f64 - 0.5).floor().max(0.0) as usize;
            (lo, v)
        };
        let (y_lo, _) = to_index(e.center.0 - ry, vy);
        let (z_lo, _) = to_index(e.center.1 - rz, vz);
        let y_hi = (((e.center.0 + ry + 1.0) / 2.0 * vy as f64 + 0.5).ceil() as usize).min(vy);
        let z_hi = (((e.center.1 + rz + 1.0) / 2.0 * vz as f64 + 0.5).ceil() as usize).min(vz);
        for iy in y_lo..y_hi {
            let y = voxel_coord(iy, vy);
            for iz in z_lo..z_hi {
                if e.contains(y, voxel_coord(iz, vz)) {
                    labels[[iy, iz]] = e.tissue;
                }
            }
        }
    }
    Ok(labels)
}

/// Binary support: everything that is not background.
pub fn support_mask(labels: &Array2<TissueLabel>) -> Array2<bool> {
    labels.mapv(|l| l != TissueLabel::Background)
}

/// Ideal inversion-recovery signal m0 * (1 - 2 exp(-TI/T1)), signed, as a
/// real-valued complex number. Crosses zero at TI = T1 ln 2.
pub fn ir_signal(m0: f64, t1_ms: f64, ti_ms: f64) -> Result<Complex64> {
    if t1_ms <= 0.0 {
        return Err(Error::invalid(format!("T1 must be positive, got {t1_ms}")));
    }
    if ti_ms < 0.0 {
        return Err(Error::invalid(format!(
            "TI must be nonnegative, got {ti_ms}"
        )));
    }
    Ok(Complex64::new(
        m0 * (1.0 - 2.0 * (-ti_ms / t1_ms).exp()),
        0.0,
    ))
}

/// All N contrast images of the phantom; every contrast shares the support.
pub fn synthesize_contrasts(spec: &PhantomSpec) -> Result<ContrastImageStack> {
    let labels = render_tissue_map(spec)?;
    let (vy, vz) = spec.grid;
    let n = spec.n_contrasts();
    // one signal value per (tissue, contrast)
    let mut signal = Vec::with_capacity(spec.tissues.len());
    for t in &spec.tissues {
        let per_ti = spec
            .ti_schedule_ms
            .iter()
            .map(|&ti| {
                if t.label == TissueLabel::Background {
                    Ok(Complex64::new(0.0, 0.0))
                } else {
                    ir_signal(t.m0, t.t1_ms, ti)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        signal.push((t.label, per_ti));
    }
    let lookup = |label: TissueLabel, ni: usize| -> Complex64 {
        signal
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, v)| v[ni])
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    };
    let mut data = Array3::zeros((n, vy, vz));
    for ni in 0..n {
        for iy in 0..vy {
            for iz in 0..vz {
                data[[ni, iy, iz]] = lookup(labels[[iy, iz]], ni);
            }
        }
    }
    Ok(ContrastImageStack::new(data))
}

/// Spec for slice `k` of an `n_slices` stack: ellipse axes shrink with the
/// cross-section of an ellipsoid, so adjacent slices differ smoothly.
pub fn slice_spec(spec: &PhantomSpec, k: usize, n_slices: usize) -> PhantomSpec {
    if n_slices <= 1 {
        return spec.clone();
    }
    let z = (k as f64 + 0.5) / n_slices as f64 * 2.0 - 1.0; // in (-1, 1)
    let scale = (1.0 - (0.55 * z).powi(2)).max(0.05).sqrt();
    let mut out = spec.clone();
    for e in &mut out.ellipses {
        e.axes.0 *= scale;
        e.axes.1 *= scale;
        e.center.0 *= scale;
        e.center.1 *= scale;
    }
    out
}

/// A stacked-2D phantom volume: independent slices of smoothly varying size.
pub fn synthesize_volume(spec: &PhantomSpec, n_slices: usize) -> Result<Vec<ContrastImageStack>> {
    if n_slices == 0 {
        return Err(Error::invalid("volume needs at least one slice"));
    }
    (0..n_slices)
        .map(|k| synthesize_contrasts(&slice_spec(spec, k, n_slices)))
        .collect()
}

/// Complex per-voxel coil sensitivity maps, normalized so that
/// sum_c |S_c|^2 = 1 at every voxel.
#[derive(Debug, Clone)]
pub struct CoilSensitivities {
    pub maps: Array3<Complex64>,
}

impl CoilSensitivities {
    pub fn n_coils(&self) -> usize {
        self.maps.dim().0
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, vy, vz) = self.maps.dim();
        (vy, vz)
    }
}

/// Smooth synthetic coil profiles: Gaussian lobes centered just outside the
/// image border with a gentle linear phase, normalized per voxel.
pub fn make_coil_maps(
    grid: (usize, usize),
    n_coils: usize,
    smoothness: f64,
    seed: u64,
) -> Result<CoilSensitivities> {
    if n_coils == 0 {
        return Err(Error::invalid("coil count must be at least 1"));
    }
    if smoothness <= 0.0 || smoothness.is_nan() {
        return Err(Error::invalid("smoothness must be positive"));
    }
    let (vy, vz) = grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 2.0 * smoothness; // in normalized units, FOV spans [-1, 1]
    let mut maps = Array3::zeros((n_coils, vy, vz));
    for c in 0..n_coils {
        let jitter: f64 = rng.random::<f64>() * 0.3 - 0.15;
        let angle = std::f64::consts::TAU * (c as f64 + jitter) / n_coils as f64;
        let center = (1.35 * angle.cos(), 1.35 * angle.sin());
        let grad_y: f64 = rng.random::<f64>() * 1.6 - 0.8;
        let grad_z: f64 = rng.random::<f64>() * 1.6 - 0.8;
        let phase0: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        for iy in 0..vy {
            let y = voxel_coord(iy, vy);
            for iz in 0..vz {
                let z = voxel_coord(iz, vz);
                let d2 = (y - center.0).powi(2) + (z - center.1).powi(2);
                let mag = (-d2 / (2.0 * sigma * sigma)).exp();
                let phase = grad_y * y + grad_z * z + phase0;
                maps[[c, iy, iz]] = Complex64::from_polar(mag, phase);
            }
        }
    }
    // per-voxel normalization (Gaussians are strictly positive, so this is
    // well defined everywhere, support included)
    for iy in 0..vy {
        for iz in 0..vz {
            let s: f64 = (0..n_coils)
                .map(|c| maps[[c, iy, iz]].norm_sqr())
                .sum::<f64>()
                .sqrt();
            for c in 0..n_coils {
                maps[[c, iy, iz]] /= s;
            }
        }
    }
    Ok(CoilSensitivities { maps })
}

/// Add i.i.d. complex Gaussian noise (std `sigma` per complex sample, i.e.
/// sigma/sqrt(2) per real component) at sampled k-space locations only.
pub fn add_noise(ksp: &KSpaceData, sigma: f64, seed: u64) -> Result<KSpaceData> {
    if sigma < 0.0 {
        return Err(Error::invalid(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    let mut out = ksp.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let (c, n, vy, vz) = out.data.dim();
    let component = sigma / 2.0f64.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ci in 0..c {
        for ni in 0..n {
            let bits = &ksp.masks.masks[ni].bits;
            for iy in 0..vy {
                for iz in 0..vz {
                    if bits[[iy, iz]] {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        out.data[[ci, ni, iy, iz]] +=
                            Complex64::new(re * component, im * component);
                    }
                }
            }
        }
    }
    Ok(out)
}

//! Multiresolution hash-grid encoding of 2D coordinates.
//!
//! Each level holds a table of trainable feature vectors indexed either
//! densely (when the level grid fits the table) or through a spatial hash.
//! A coordinate in [0,1]^2 is encoded per level by bilinear interpolation of
//! the four surrounding corner features; level outputs are concatenated.
//! The backward pass distributes upstream gradients onto the touched corners
//! with the same bilinear weights, so it is exact.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hash constant from the common spatial-hash construction.
const HASH_PRIME_Z: u32 = 2_654_435_761;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    /// Number of resolution levels L.
    pub levels: usize,
    /// Features per level F.
    pub features_per_level: usize,
    /// Table rows per level T; must be a power of two.
    pub table_size: usize,
    /// Coarsest resolution (cells per axis).
    pub base_resolution: usize,
    /// Finest resolution (cells per axis).
    pub max_resolution: usize,
}

impl HashGridConfig {
    /// Defaults scaled to the slice grid. The finest level is kept at half
    /// the grid resolution: the bilinear interpolation then cannot represent
    /// per-voxel oscillations, which is what keeps the network from fitting
    /// measurement noise amplified by the distance weighting.
    pub fn defaults_for_grid(vy: usize, vz: usize) -> Self {
        HashGridConfig {
            levels: 5,
            features_per_level: 2,
            table_size: 1 << 16,
            base_resolution: 16,
            max_resolution: (vy.max(vz) / 2).max(16),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 {
            return Err(Error::invalid(
                "hash grid needs levels >= 1 and features >= 1",
            ));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "table size must be a power of two, got {}",
                self.table_size
            )));
        }
        if self.base_resolution == 0 || self.base_resolution > self.max_resolution {
            return Err(Error::invalid(
                "need 1 <= base_resolution <= max_resolution",
            ));
        }
        Ok(())
    }

    /// Per-level geometric growth factor b.
    pub fn growth_factor(&self) -> f64 {
        if self.levels <= 1 {
            1.0
        } else {
            let span = (self.max_resolution as f64 / self.base_resolution as f64).ln();
            (span / (self.levels as f64 - 1.0)).exp()
        }
    }

    /// Cells per axis at `level`; vertices per axis is this plus one.
    pub fn level_cells(&self, level: usize) -> usize {
        let b = self.growth_factor();
        ((self.base_resolution as f64) * b.powi(level as i32)).round() as usize
    }

    /// Output width of the encoding.
    pub fn encoded_len(&self) -> usize {
        self.levels * self.features_per_level
    }

    /// Table row for an integer corner at `level`: direct row-major indexing
    /// when the level's vertex grid fits in the table, spatial hash otherwise.
    pub fn hash_index(&self, level: usize, iy: usize, iz: usize) -> usize {
        let vertices = self.level_cells(level) + 1;
        if vertices * vertices <= self.table_size {
            iy * vertices + iz
        } else {
            let h = (iy as u32) ^ (iz as u32).wrapping_mul(HASH_PRIME_Z);
            (h as usize) & (self.table_size - 1)
        }
    }
}

/// Trainable feature tables: shape (L, T, F).
#[derive(Debug, Clone)]
pub struct HashGridTables {
    pub features: Array3<f64>,
    pub config: HashGridConfig,
}

impl HashGridTables {
    /// Initialize uniformly in [-1e-4, 1e-4].
    pub fn init(config: HashGridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array3::from_shape_fn(
            (config.levels, config.table_size, config.features_per_level),
            |_| rng.random::<f64>() * 2e-4 - 1e-4,
        );
        Ok(HashGridTables { features, config })
    }

    pub fn zeros(config: HashGridConfig) -> Result<Self> {
        config.validate()?;
        let features = Array3::zeros((config.levels, config.table_size, config.features_per_level));
        Ok(HashGridTables { features, config })
    }
}

#[cfg(debug_assertions)]
fn flag_out_of_range() {
    use std::sync::Once;
    static WARN: Once = Once::new();
    WARN.call_once(|| eprintln!("encode: coordinate outside [0,1]^2 clamped"));
}

struct CellFootprint {
    idx: [usize; 4],
    w: [f64; 4],
}

fn footprint(config: &HashGridConfig, level: usize, y: f64, z: f64) -> CellFootprint {
    let cells = config.level_cells(level);
    let py = y * cells as f64;
    let pz = z * cells as f64;
    let iy = (py.floor() as usize).min(cells - 1);
    let iz = (pz.floor() as usize).min(cells - 1);
    let fy = py - iy as f64;
    let fz = pz - iz as f64;
    CellFootprint {
        idx: [
            config.hash_index(level, iy, iz),
            config.hash_index(level, iy, iz + 1),
            config.hash_index(level, iy + 1, iz),
            config.hash_index(level, iy + 1, iz + 1),
        ],
        w: [
            (1.0 - fy) * (1.0 - fz),
            (1.0 - fy) * fz,
            fy * (1.0 - fz),
            fy * fz,
        ],
    }
}

fn clamp_coord(coord: (f64, f64)) -> (f64, f64) {
    let (y, z) = coord;
    if !(0.0..=1.0).contains(&y) || !(0.0..=1.0).contains(&z) {
        #[cfg(debug_assertions)]
        flag_out_of_range();
    }
    (y.clamp(0.0, 1.0), z.clamp(0.0, 1.0))
}

/// Encode one coordinate into `out` (length L*F): per level, bilinear
/// interpolation of the four corner features.
pub fn encode(coord: (f64, f64), tables: &HashGridTables, out: &mut [f64]) {
    let cfg = &tables.config;
    debug_assert_eq!(out.len(), cfg.encoded_len());
    let (y, z) = clamp_coord(coord);
    let f = cfg.features_per_level;
    for level in 0..cfg.levels {
        let fp = footprint(cfg, level, y, z);
        for fi in 0..f {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += fp.w[k] * tables.features[[level, fp.idx[k], fi]];
            }
            out[level * f + fi] = acc;
        }
    }
}

/// Accumulate d(loss)/d(table entries) for one coordinate given the upstream
/// gradient w.r.t. the encoded vector. Contributions are additive across a
/// batch; hash collisions accumulate rather than average.
pub fn encode_backward(
    coord: (f64, f64),
    upstream: &[f64],
    tables: &HashGridTables,
    grad: &mut Array3<f64>,
) {
    let cfg = &tables.config;
    debug_assert_eq!(upstream.len(), cfg.encoded_len());
    debug_assert_eq!(grad.dim(), tables.features.dim());
    let (y, z) = clamp_coord(coord);
    let f = cfg.features_per_level;
    for level in 0..cfg.levels {
        let fp = footprint(cfg, level, y, z);
        for fi in 0..f {
            let up = upstream[level * f + fi];
            if up == 0.0 {
                continue;
            }
            for k in 0..4 {
                grad[[level, fp.idx[k], fi]] += fp.w[k] * up;
            }
        }
    }
}

//! TOML pipeline configuration. Every section has working defaults so a
//! minimal config file can be just `[phantom]\ngrid = [64, 64]` or even
//! empty; explicit values override.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::HashGridConfig;
use crate::engine::TrainConfig;
use crate::error::{Error, Result};
use crate::phantom::{Ellipse, PhantomSpec, TissueClass, TissueLabel};
use crate::sampling::{default_center_radius, PoissonConfig};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub phantom: PhantomSection,
    #[serde(default)]
    pub coils: CoilSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub encoding: EncodingSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub grid: [usize; 2],
    pub slices: usize,
    pub num_contrasts: usize,
    pub ti_first_ms: f64,
    pub ti_delta_ms: f64,
    /// Explicit schedule wins over (ti_first_ms, ti_delta_ms, num_contrasts).
    pub ti_schedule_ms: Option<Vec<f64>>,
    /// Custom geometry; omitted means the built-in brain layout.
    pub ellipses: Option<Vec<EllipseSection>>,
    pub tissues: Option<Vec<TissueSection>>,
    /// Store generated phantom stacks as complex64 instead of complex128.
    pub store_complex64: bool,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            grid: [64, 64],
            slices: 1,
            num_contrasts: 10,
            ti_first_ms: crate::phantom::DEFAULT_TI_FIRST_MS,
            ti_delta_ms: crate::phantom::DEFAULT_TI_DELTA_MS,
            ti_schedule_ms: None,
            ellipses: None,
            tissues: None,
            store_complex64: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSection {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    #[serde(default)]
    pub rotation_deg: f64,
    pub tissue: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueSection {
    pub label: String,
    pub t1_ms: f64,
    pub m0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilSection {
    pub count: usize,
    pub smoothness: f64,
    pub seed: u64,
}

impl Default for CoilSection {
    fn default() -> Self {
        CoilSection {
            count: 4,
            smoothness: 0.35,
            seed: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub target_r: f64,
    /// Defaults to 8 index units at 160, scaled to the grid.
    pub center_radius: Option<f64>,
    pub alpha: f64,
    pub base_seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            target_r: 8.0,
            center_radius: None,
            alpha: crate::sampling::DEFAULT_RADIUS_GROWTH,
            base_seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Noise std as a fraction of the peak k-space magnitude.
    pub sigma_rel: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            sigma_rel: 0.005,
            seed: 23,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr_tables: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub hidden: usize,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            lr_tables: d.lr_tables,
            lr_mlp: d.lr_mlp,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            seed: d.seed,
            hidden: d.hidden,
            log_every: d.log_every,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingSection {
    pub levels: usize,
    pub features_per_level: usize,
    pub table_size_log2: u32,
    pub base_resolution: usize,
    /// Defaults to half the larger grid dimension (the noise-robust choice).
    pub max_resolution: Option<usize>,
}

impl Default for EncodingSection {
    fn default() -> Self {
        EncodingSection {
            levels: 5,
            features_per_level: 2,
            table_size_log2: 16,
            base_resolution: 16,
            max_resolution: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub p_lo: f64,
    pub p_hi: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            p_lo: 1.0,
            p_hi: 99.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let p = &self.phantom;
        let ti = match &p.ti_schedule_ms {
            Some(s) => s.clone(),
            None => (0..p.num_contrasts)
                .map(|i| p.ti_first_ms + i as f64 * p.ti_delta_ms)
                .collect(),
        };
        let mut spec = PhantomSpec::default_brain(p.grid[0], p.grid[1], ti.len());
        spec.ti_schedule_ms = ti;
        if let Some(tissues) = &p.tissues {
            spec.tissues = tissues
                .iter()
                .map(|t| {
                    Ok(TissueClass {
                        label: TissueLabel::parse(&t.label)?,
                        t1_ms: t.t1_ms,
                        m0: t.m0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(ellipses) = &p.ellipses {
            spec.ellipses = ellipses
                .iter()
                .map(|e| {
                    Ok(Ellipse {
                        center: (e.center[0], e.center[1]),
                        axes: (e.axes[0], e.axes[1]),
                        rotation_deg: e.rotation_deg,
                        tissue: TissueLabel::parse(&e.tissue)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn poisson_config(&self) -> PoissonConfig {
        let [vy, vz] = self.phantom.grid;
        let mut cfg = PoissonConfig::new(
            self.sampling.target_r,
            self.sampling
                .center_radius
                .unwrap_or_else(|| default_center_radius(vy, vz)),
        );
        cfg.alpha = self.sampling.alpha;
        cfg
    }

    pub fn hash_grid_config(&self) -> HashGridConfig {
        let [vy, vz] = self.phantom.grid;
        let e = &self.encoding;
        HashGridConfig {
            levels: e.levels,
            features_per_level: e.features_per_level,
            table_size: 1usize << e.table_size_log2,
            base_resolution: e.base_resolution,
            max_resolution: e.max_resolution.unwrap_or((vy.max(vz) / 2).max(16)),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr_tables: t.lr_tables,
            lr_mlp: t.lr_mlp,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            hidden: t.hidden,
            encoding: Some(self.hash_grid_config()),
            log_every: t.log_every,
        }
    }
}

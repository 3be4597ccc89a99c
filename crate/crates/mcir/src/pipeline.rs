//! End-to-end synthetic pipeline: phantom -> coil maps -> masks -> simulated
//! acquisition -> INR and zero-filled reconstructions -> metric reports and
//! PNG montages. A pipeline run is a pure function of its configuration, so
//! identical configs reproduce identical artifacts bit for bit.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4, ArrayD, Axis, IxDyn};
use num_complex::Complex64;

use crate::config::PipelineConfig;
use crate::container::{write_container, ArrayData};
use crate::engine::{reconstruct_volume, TrainConfig};
use crate::error::{Error, Result};
use crate::export::{mask_set_to_png, montage_to_png};
use crate::metrics::{
    evaluate_stacks, mean_std, normalize_with_bounds, pooled_percentile_bounds, EvalMask,
    MetricReport,
};
use crate::operators::{adjoint_model, forward_model, ContrastImageStack, KSpaceData};
use crate::phantom::{
    add_noise, make_coil_maps, render_tissue_map, slice_spec, support_mask, synthesize_contrasts,
    CoilSensitivities,
};
use crate::sampling::{complementary_mask_set_with, MaskSet, SamplingMask};

/// Metrics for a whole volume with aggregates over both populations
/// (contrasts within slices, and slices within contrasts).
#[derive(Debug, Clone)]
pub struct VolumeReport {
    pub per_slice: Vec<MetricReport>,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub psnr_mean_db: Option<f64>,
    pub psnr_std_db: Option<f64>,
    pub ssim_std_over_slices: f64,
    pub ssim_std_over_contrasts: f64,
}

impl VolumeReport {
    pub fn from_slices(per_slice: Vec<MetricReport>) -> Self {
        let all_ssim: Vec<f64> = per_slice
            .iter()
            .flat_map(|r| r.ssim_per_contrast.iter().copied())
            .collect();
        let all_psnr: Vec<f64> = per_slice
            .iter()
            .flat_map(|r| r.psnr_per_contrast.iter().filter_map(|p| p.db()))
            .collect();
        let (ssim_mean, ssim_std) = mean_std(&all_ssim);
        let (psnr_mean_db, psnr_std_db) = if all_psnr.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&all_psnr);
            (Some(m), Some(s))
        };
        let slice_means: Vec<f64> = per_slice.iter().map(|r| r.ssim_mean).collect();
        let ssim_std_over_slices = mean_std(&slice_means).1;
        let n_contrasts = per_slice.first().map_or(0, |r| r.ssim_per_contrast.len());
        let contrast_means: Vec<f64> = (0..n_contrasts)
            .map(|ni| {
                let vals: Vec<f64> = per_slice.iter().map(|r| r.ssim_per_contrast[ni]).collect();
                mean_std(&vals).0
            })
            .collect();
        let ssim_std_over_contrasts = mean_std(&contrast_means).1;
        VolumeReport {
            per_slice,
            ssim_mean,
            ssim_std,
            psnr_mean_db,
            psnr_std_db,
            ssim_std_over_slices,
            ssim_std_over_contrasts,
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("slices={}\n", self.per_slice.len()));
        out.push_str(&format!("ssim_mean={:.6}\n", self.ssim_mean));
        out.push_str(&format!("ssim_std={:.6}\n", self.ssim_std));
        match (self.psnr_mean_db, self.psnr_std_db) {
            (Some(m), Some(s)) => {
                out.push_str(&format!("psnr_mean_db={m:.4}\n"));
                out.push_str(&format!("psnr_std_db={s:.4}\n"));
            }
            _ => out.push_str("psnr_mean_db=identical\npsnr_std_db=identical\n"),
        }
        out.push_str(&format!(
            "ssim_std_over_slices={:.6}\n",
            self.ssim_std_over_slices
        ));
        out.push_str(&format!(
            "ssim_std_over_contrasts={:.6}\n",
            self.ssim_std_over_contrasts
        ));
        for (k, r) in self.per_slice.iter().enumerate() {
            out.push_str(&format!("slice_{k}_ssim_mean={:.6}\n", r.ssim_mean));
            match r.psnr_mean_db {
                Some(m) => out.push_str(&format!("slice_{k}_psnr_mean_db={m:.4}\n")),
                None => out.push_str(&format!("slice_{k}_psnr_mean_db=identical\n")),
            }
        }
        out
    }
}

/// Side-by-side mean +- std table for any number of (method, report) rows.
pub fn summary_table(rows: &[(&str, &VolumeReport)]) -> String {
    let mut out = String::from("method        ssim             psnr_db\n");
    for (name, report) in rows {
        let psnr = match (report.psnr_mean_db, report.psnr_std_db) {
            (Some(m), Some(s)) => format!("{m:.2} +- {s:.2}"),
            _ => "identical".to_string(),
        };
        out.push_str(&format!(
            "{name:<13} {:.3} +- {:.3}   {psnr}\n",
            report.ssim_mean, report.ssim_std
        ));
    }
    out
}

/// Everything a pipeline run produces, with the reports in memory.
#[derive(Debug)]
pub struct PipelineArtifacts {
    pub out_dir: PathBuf,
    pub report_inr: VolumeReport,
    pub report_zf: VolumeReport,
}

/// Image stacks as container payload, optionally downcast to complex64.
pub fn stacks_to_container(slices: &[ContrastImageStack], downcast: bool) -> ArrayData {
    let arr = stacks_to_array(slices);
    if downcast {
        ArrayData::Complex64(arr.mapv(|v| num_complex::Complex32::new(v.re as f32, v.im as f32)))
    } else {
        ArrayData::Complex128(arr)
    }
}

pub fn stacks_to_array(slices: &[ContrastImageStack]) -> ArrayD<Complex64> {
    let (n, vy, vz) = slices[0].data.dim();
    let mut out = Array4::zeros((slices.len(), n, vy, vz));
    for (s, stack) in slices.iter().enumerate() {
        out.index_axis_mut(Axis(0), s).assign(&stack.data);
    }
    out.into_dyn()
}

pub fn array_to_stacks(arr: &ArrayD<Complex64>) -> Result<Vec<ContrastImageStack>> {
    let four = arr
        .view()
        .into_dimensionality::<ndarray::Ix4>()
        .map_err(|_| Error::shape("(slices, N, Vy, Vz)", format!("{:?}", arr.shape())))?;
    Ok(four
        .outer_iter()
        .map(|s| ContrastImageStack::new(s.to_owned()))
        .collect())
}

pub fn masks_to_array(masks: &MaskSet) -> ArrayD<bool> {
    let (vy, vz) = masks.grid();
    let mut out = Array3::from_elem((masks.len(), vy, vz), false);
    for (n, m) in masks.masks.iter().enumerate() {
        out.index_axis_mut(Axis(0), n).assign(&m.bits);
    }
    out.into_dyn()
}

/// Rebuild a mask set from stored bits; generation metadata is carried by
/// the config, not the container.
pub fn array_to_masks(arr: &ArrayD<bool>, center_radius: f64, target_r: f64) -> Result<MaskSet> {
    let three = arr
        .view()
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|_| Error::shape("(N, Vy, Vz)", format!("{:?}", arr.shape())))?;
    let masks = three
        .outer_iter()
        .enumerate()
        .map(|(n, bits)| {
            SamplingMask::from_bits(bits.to_owned(), n, n as u64, center_radius, target_r)
        })
        .collect();
    MaskSet::from_masks(masks)
}

pub fn coils_to_array(coils: &CoilSensitivities) -> ArrayD<Complex64> {
    coils.maps.clone().into_dyn()
}

pub fn array_to_coils(arr: &ArrayD<Complex64>) -> Result<CoilSensitivities> {
    let three = arr
        .view()
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|_| Error::shape("(C, Vy, Vz)", format!("{:?}", arr.shape())))?;
    Ok(CoilSensitivities {
        maps: three.to_owned(),
    })
}

pub fn kspace_slices_to_array(slices: &[KSpaceData]) -> ArrayD<Complex64> {
    let (c, n, vy, vz) = slices[0].data.dim();
    let mut out = ArrayD::zeros(IxDyn(&[slices.len(), c, n, vy, vz]));
    for (s, ksp) in slices.iter().enumerate() {
        out.index_axis_mut(Axis(0), s)
            .assign(&ksp.data.view().into_dyn());
    }
    out
}

pub fn array_to_kspace_slices(arr: &ArrayD<Complex64>, masks: &MaskSet) -> Result<Vec<KSpaceData>> {
    if arr.ndim() != 5 {
        return Err(Error::shape(
            "(slices, C, N, Vy, Vz)",
            format!("{:?}", arr.shape()),
        ));
    }
    arr.axis_iter(Axis(0))
        .map(|s| {
            let shape = s.shape().to_vec();
            let four = s
                .into_dimensionality::<ndarray::Ix4>()
                .map_err(|_| Error::shape("(C, N, Vy, Vz)", format!("{shape:?}")))?
                .to_owned();
            KSpaceData::new(four, masks.clone())
        })
        .collect()
}

pub fn supports_to_array(supports: &[Array2<bool>]) -> ArrayD<bool> {
    let (vy, vz) = supports[0].dim();
    let mut out = Array3::from_elem((supports.len(), vy, vz), false);
    for (s, sup) in supports.iter().enumerate() {
        out.index_axis_mut(Axis(0), s).assign(sup);
    }
    out.into_dyn()
}

/// Per-slice masked metrics against the reference with one pooled
/// normalization across all slices and contrasts of both volumes.
pub fn volume_metrics(
    gt: &[ContrastImageStack],
    recon: &[ContrastImageStack],
    supports: &[Array2<bool>],
    p_lo: f64,
    p_hi: f64,
) -> Result<VolumeReport> {
    let mut per_slice = Vec::with_capacity(gt.len());
    if gt.len() == 1 {
        let mask = EvalMask::new(supports[0].clone())?;
        per_slice.push(evaluate_stacks(&gt[0], &recon[0], &mask, p_lo, p_hi)?);
        return Ok(VolumeReport::from_slices(per_slice));
    }
    // Pool every slice of both volumes for one normalization, then compute
    // per-slice masked metrics with the shared bounds.
    let masks: Vec<EvalMask> = supports
        .iter()
        .map(|s| EvalMask::new(s.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled: Vec<(&ContrastImageStack, Option<&EvalMask>)> = Vec::new();
    for (s, stack) in gt.iter().enumerate() {
        pooled.push((stack, Some(&masks[s])));
    }
    for (s, stack) in recon.iter().enumerate() {
        pooled.push((stack, Some(&masks[s])));
    }
    let bounds = pooled_percentile_bounds(&pooled, p_lo, p_hi)?;
    for s in 0..gt.len() {
        let r = normalize_with_bounds(&gt[s], bounds);
        let t = normalize_with_bounds(&recon[s], bounds);
        let n = r.dim().0;
        let mut ssims = Vec::with_capacity(n);
        let mut psnrs = Vec::with_capacity(n);
        for ni in 0..n {
            let rp = r.index_axis(Axis(0), ni).to_owned();
            let tp = t.index_axis(Axis(0), ni).to_owned();
            ssims.push(crate::metrics::ssim(&rp, &tp, &masks[s])?);
            psnrs.push(crate::metrics::psnr(&rp, &tp, &masks[s])?);
        }
        per_slice.push(MetricReport::from_values(ssims, psnrs));
    }
    Ok(VolumeReport::from_slices(per_slice))
}

fn write_montages(
    out_dir: &Path,
    tag: &str,
    slices: &[ContrastImageStack],
    bounds: (f64, f64),
) -> Result<()> {
    for (s, stack) in slices.iter().enumerate() {
        let norm = normalize_with_bounds(stack, bounds);
        montage_to_png(
            out_dir.join(format!("montage_{tag}_slice{s}.png")),
            &norm,
            5,
        )?;
    }
    Ok(())
}

/// Run the full synthetic pipeline into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config_used.toml"),
        toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    // phantom
    let spec = cfg.phantom_spec()?;
    let n_slices = cfg.phantom.slices.max(1);
    let mut gt = Vec::with_capacity(n_slices);
    let mut supports = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        let s = slice_spec(&spec, k, n_slices);
        gt.push(synthesize_contrasts(&s)?);
        supports.push(support_mask(&render_tissue_map(&s)?));
    }
    write_container(
        out_dir.join("ground_truth.mcir"),
        &stacks_to_container(&gt, cfg.phantom.store_complex64),
    )?;
    write_container(
        out_dir.join("support.mcir"),
        &ArrayData::Bits(supports_to_array(&supports)),
    )?;

    // coils
    let [vy, vz] = cfg.phantom.grid;
    let coils = make_coil_maps(
        (vy, vz),
        cfg.coils.count,
        cfg.coils.smoothness,
        cfg.coils.seed,
    )?;
    write_container(
        out_dir.join("coils.mcir"),
        &ArrayData::Complex128(coils_to_array(&coils)),
    )?;

    // masks
    let pc = cfg.poisson_config();
    let masks =
        complementary_mask_set_with(vy, vz, &pc, spec.n_contrasts(), cfg.sampling.base_seed)?;
    write_container(
        out_dir.join("masks.mcir"),
        &ArrayData::Bits(masks_to_array(&masks)),
    )?;
    mask_set_to_png(out_dir.join("masks.png"), &masks)?;

    // simulated acquisition
    let clean: Vec<KSpaceData> = gt
        .iter()
        .map(|stack| forward_model(stack, &coils, &masks))
        .collect::<Result<Vec<_>>>()?;
    let peak = clean.iter().map(|k| k.max_abs()).fold(0.0f64, f64::max);
    let sigma = cfg.noise.sigma_rel * peak;
    let acquired: Vec<KSpaceData> = clean
        .iter()
        .enumerate()
        .map(|(s, k)| add_noise(k, sigma, cfg.noise.seed + s as u64))
        .collect::<Result<Vec<_>>>()?;
    write_container(
        out_dir.join("kspace.mcir"),
        &ArrayData::Complex128(kspace_slices_to_array(&acquired)),
    )?;

    // reconstructions
    let weights = crate::operators::distance_weights(vy, vz);
    let train_cfg: TrainConfig = cfg.train_config();
    let results = reconstruct_volume(&acquired, &coils, &masks, &weights, &train_cfg);
    let mut recon_inr = Vec::with_capacity(n_slices);
    let mut traces = Vec::with_capacity(n_slices);
    for (s, r) in results.into_iter().enumerate() {
        match r {
            Ok((stack, trace)) => {
                recon_inr.push(stack);
                traces.push(trace);
            }
            Err(e) => return Err(Error::invalid(format!("slice {s} failed: {e}"))),
        }
    }
    write_container(
        out_dir.join("recon_inr.mcir"),
        &ArrayData::Complex128(stacks_to_array(&recon_inr)),
    )?;
    let epochs = traces[0].len();
    let trace_arr = ArrayD::from_shape_fn(IxDyn(&[n_slices, epochs]), |idx| {
        traces[idx[0]][idx[1]] as f32
    });
    write_container(
        out_dir.join("loss_trace.mcir"),
        &ArrayData::Float32(trace_arr),
    )?;

    let recon_zf: Vec<ContrastImageStack> = acquired
        .iter()
        .map(|k| adjoint_model(k, &coils, &masks))
        .collect::<Result<Vec<_>>>()?;
    write_container(
        out_dir.join("recon_zf.mcir"),
        &ArrayData::Complex128(stacks_to_array(&recon_zf)),
    )?;

    // metrics
    let (p_lo, p_hi) = (cfg.metrics.p_lo, cfg.metrics.p_hi);
    let report_inr = volume_metrics(&gt, &recon_inr, &supports, p_lo, p_hi)?;
    let report_zf = volume_metrics(&gt, &recon_zf, &supports, p_lo, p_hi)?;
    std::fs::write(
        out_dir.join("summary.txt"),
        summary_table(&[("inr", &report_inr), ("zero_filled", &report_zf)]),
    )?;
    std::fs::write(out_dir.join("report_inr.txt"), report_inr.to_key_values())?;
    std::fs::write(out_dir.join("report_zf.txt"), report_zf.to_key_values())?;

    // montages share one window so methods are visually comparable
    let masks_eval: Vec<EvalMask> = supports
        .iter()
        .map(|s| EvalMask::new(s.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled: Vec<(&ContrastImageStack, Option<&EvalMask>)> = Vec::new();
    for set in [&gt, &recon_inr, &recon_zf] {
        for (s, stack) in set.iter().enumerate() {
            pooled.push((stack, Some(&masks_eval[s])));
        }
    }
    let bounds = pooled_percentile_bounds(&pooled, p_lo, p_hi)?;
    write_montages(out_dir, "gt", &gt, bounds)?;
    write_montages(out_dir, "inr", &recon_inr, bounds)?;
    write_montages(out_dir, "zf", &recon_zf, bounds)?;

    Ok(PipelineArtifacts {
        out_dir: out_dir.to_path_buf(),
        report_inr,
        report_zf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_roundtrip() {
        let spec = crate::phantom::PhantomSpec::default_brain(16, 16, 3);
        let gt = crate::phantom::synthesize_volume(&spec, 2).unwrap();
        let arr = stacks_to_array(&gt);
        assert_eq!(arr.shape(), &[2, 3, 16, 16]);
        let back = array_to_stacks(&arr).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].data, gt[0].data);

        let masks = crate::sampling::complementary_mask_set((16, 16), 2.0, 1.0, 3, 4).unwrap();
        let bits = masks_to_array(&masks);
        let back = array_to_masks(&bits, 1.0, 2.0).unwrap();
        for (a, b) in back.masks.iter().zip(&masks.masks) {
            assert_eq!(a.bits, b.bits);
        }
    }

    #[test]
    fn tiny_pipeline_runs_and_reproduces() {
        let text = r#"
[phantom]
grid = [24, 24]
num_contrasts = 2

[coils]
count = 2

[sampling]
target_r = 2.0

[train]
epochs = 8

[encoding]
levels = 2
table_size_log2 = 8
base_resolution = 4
max_resolution = 12
"#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_pipeline(&cfg, dir_a.path()).unwrap();
        let b = run_pipeline(&cfg, dir_b.path()).unwrap();
        assert_eq!(a.report_inr.to_key_values(), b.report_inr.to_key_values());
        assert_eq!(a.report_zf.to_key_values(), b.report_zf.to_key_values());
        for f in [
            "ground_truth.mcir",
            "support.mcir",
            "coils.mcir",
            "masks.mcir",
            "kspace.mcir",
            "recon_inr.mcir",
            "recon_zf.mcir",
            "loss_trace.mcir",
            "masks.png",
            "montage_inr_slice0.png",
        ] {
            let pa = std::fs::read(dir_a.path().join(f)).unwrap();
            let pb = std::fs::read(dir_b.path().join(f)).unwrap();
            assert_eq!(pa, pb, "artifact {f} differs between identical runs");
        }
    }
}

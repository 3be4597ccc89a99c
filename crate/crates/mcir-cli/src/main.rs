//! mcir command line: phantom/mask/simulate/reconstruct/evaluate/export, or
//! the whole pipeline from one config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Axis;

use mcir::config::PipelineConfig;
use mcir::container::{read_container, write_container, ArrayData};
use mcir::engine::{reconstruct_volume, save_model};
use mcir::error::Error;
use mcir::export::{mask_set_to_png, montage_to_png};
use mcir::metrics::joint_percentile_normalize;
use mcir::operators::{adjoint_model, distance_weights, ContrastImageStack};
use mcir::phantom::{add_noise, make_coil_maps, render_tissue_map, slice_spec, support_mask};
use mcir::pipeline::{
    array_to_coils, array_to_kspace_slices, array_to_masks, array_to_stacks, coils_to_array,
    kspace_slices_to_array, masks_to_array, run_pipeline, stacks_to_array, supports_to_array,
};
use mcir::sampling::complementary_mask_set_with;

/// Worker-count environment variable honored when --workers is absent.
const WORKERS_ENV: &str = "MCIR_WORKERS";

#[derive(Parser)]
#[command(
    name = "mcir",
    version,
    about = "Multi-contrast MRI reconstruction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the phantom ground truth, support masks and coil maps.
    Phantom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate complementary undersampling masks (container + PNG).
    Mask {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured acceleration target.
        #[arg(long)]
        r: Option<f64>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the forward model and noise to a phantom volume.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        coils: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Override the configured noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint INR reconstruction of a (multi-slice) k-space container.
    ReconInr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kspace: PathBuf,
        #[arg(long)]
        coils: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        /// Slice-level parallelism (default: MCIR_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write per-slice model checkpoints under OUT/model_slice<k>/.
        #[arg(long)]
        save_models: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-filled adjoint reconstruction (the baseline).
    ReconZf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kspace: PathBuf,
        #[arg(long)]
        coils: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SSIM/PSNR report of a reconstruction against a reference.
    Metrics {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Evaluation mask container; defaults to the nonzero support of the
        /// reference.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-contrast montage PNGs from an image-stack container.
    ExportPng {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full run: phantom -> masks -> simulate -> reconstruct -> evaluate.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_workers(cli_value: Option<usize>) -> Result<(), Error> {
    let from_env = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = cli_value.or(from_env) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn load_config(path: &PathBuf) -> Result<PipelineConfig, Error> {
    PipelineConfig::from_path(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Phantom { config, out } => {
            let cfg = load_config(&config)?;
            let spec = cfg.phantom_spec()?;
            let n_slices = cfg.phantom.slices.max(1);
            let mut stacks = Vec::new();
            let mut supports = Vec::new();
            for k in 0..n_slices {
                let s = slice_spec(&spec, k, n_slices);
                stacks.push(mcir::phantom::synthesize_contrasts(&s)?);
                supports.push(support_mask(&render_tissue_map(&s)?));
            }
            std::fs::create_dir_all(&out)?;
            write_container(
                out.join("ground_truth.mcir"),
                &mcir::pipeline::stacks_to_container(&stacks, cfg.phantom.store_complex64),
            )?;
            write_container(
                out.join("support.mcir"),
                &ArrayData::Bits(supports_to_array(&supports)),
            )?;
            let coils = make_coil_maps(
                (cfg.phantom.grid[0], cfg.phantom.grid[1]),
                cfg.coils.count,
                cfg.coils.smoothness,
                cfg.coils.seed,
            )?;
            write_container(
                out.join("coils.mcir"),
                &ArrayData::Complex128(coils_to_array(&coils)),
            )?;
            println!(
                "wrote ground_truth.mcir support.mcir coils.mcir to {}",
                out.display()
            );
            Ok(())
        }
        Cmd::Mask {
            config,
            r,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let mut pc = cfg.poisson_config();
            if let Some(r) = r {
                pc.target_r = r;
            }
            let base_seed = seed.unwrap_or(cfg.sampling.base_seed);
            let [vy, vz] = cfg.phantom.grid;
            let n = cfg
                .phantom
                .ti_schedule_ms
                .as_ref()
                .map_or(cfg.phantom.num_contrasts, |s| s.len());
            let masks = complementary_mask_set_with(vy, vz, &pc, n, base_seed)?;
            std::fs::create_dir_all(&out)?;
            write_container(
                out.join("masks.mcir"),
                &ArrayData::Bits(masks_to_array(&masks)),
            )?;
            mask_set_to_png(out.join("masks.png"), &masks)?;
            println!("wrote masks.mcir masks.png to {}", out.display());
            Ok(())
        }
        Cmd::Simulate {
            config,
            phantom,
            coils,
            masks,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let stacks = array_to_stacks(&read_container(phantom)?.into_complex_widened()?)?;
            let coils = array_to_coils(&read_container(coils)?.into_complex128()?)?;
            let pc = cfg.poisson_config();
            let mask_set = array_to_masks(
                &read_container(masks)?.into_bits()?,
                pc.center_radius,
                pc.target_r,
            )?;
            let clean: Vec<_> = stacks
                .iter()
                .map(|s| mcir::operators::forward_model(s, &coils, &mask_set))
                .collect::<Result<_, _>>()?;
            let peak = clean
                .iter()
                .map(|k: &mcir::operators::KSpaceData| k.max_abs())
                .fold(0.0f64, f64::max);
            let sigma = cfg.noise.sigma_rel * peak;
            let noise_seed = seed.unwrap_or(cfg.noise.seed);
            let acquired: Vec<_> = clean
                .iter()
                .enumerate()
                .map(|(s, k)| add_noise(k, sigma, noise_seed + s as u64))
                .collect::<Result<_, _>>()?;
            std::fs::create_dir_all(&out)?;
            write_container(
                out.join("kspace.mcir"),
                &ArrayData::Complex128(kspace_slices_to_array(&acquired)),
            )?;
            println!("wrote kspace.mcir to {}", out.display());
            Ok(())
        }
        Cmd::ReconInr {
            config,
            kspace,
            coils,
            masks,
            workers,
            save_models,
            out,
        } => {
            init_workers(workers)?;
            let cfg = load_config(&config)?;
            let coils = array_to_coils(&read_container(coils)?.into_complex128()?)?;
            let pc = cfg.poisson_config();
            let mask_set = array_to_masks(
                &read_container(masks)?.into_bits()?,
                pc.center_radius,
                pc.target_r,
            )?;
            let slices =
                array_to_kspace_slices(&read_container(kspace)?.into_complex128()?, &mask_set)?;
            let (vy, vz) = mask_set.grid();
            let weights = distance_weights(vy, vz);
            let train_cfg = cfg.train_config();
            std::fs::create_dir_all(&out)?;
            let mut recon = Vec::new();
            let mut traces = Vec::new();
            if save_models {
                // sequential path so each trained model can be checkpointed
                for (s, ksp) in slices.iter().enumerate() {
                    let (stack, trace, model) = mcir::engine::reconstruct_slice_with_model(
                        ksp, &coils, &mask_set, &weights, &train_cfg,
                    )?;
                    save_model(&out.join(format!("model_slice{s}")), &model)?;
                    recon.push(stack);
                    traces.push(trace);
                }
            } else {
                for (s, r) in reconstruct_volume(&slices, &coils, &mask_set, &weights, &train_cfg)
                    .into_iter()
                    .enumerate()
                {
                    match r {
                        Ok((stack, trace)) => {
                            recon.push(stack);
                            traces.push(trace);
                        }
                        Err(e) => return Err(Error::invalid(format!("slice {s} failed: {e}"))),
                    }
                }
            }
            write_container(
                out.join("recon_inr.mcir"),
                &ArrayData::Complex128(stacks_to_array(&recon)),
            )?;
            let epochs = traces[0].len();
            let trace_arr =
                ndarray::ArrayD::from_shape_fn(ndarray::IxDyn(&[traces.len(), epochs]), |idx| {
                    traces[idx[0]][idx[1]] as f32
                });
            write_container(out.join("loss_trace.mcir"), &ArrayData::Float32(trace_arr))?;
            println!("wrote recon_inr.mcir loss_trace.mcir to {}", out.display());
            Ok(())
        }
        Cmd::ReconZf {
            config,
            kspace,
            coils,
            masks,
            out,
        } => {
            let cfg = load_config(&config)?;
            let coils = array_to_coils(&read_container(coils)?.into_complex128()?)?;
            let pc = cfg.poisson_config();
            let mask_set = array_to_masks(
                &read_container(masks)?.into_bits()?,
                pc.center_radius,
                pc.target_r,
            )?;
            let slices =
                array_to_kspace_slices(&read_container(kspace)?.into_complex128()?, &mask_set)?;
            let recon: Vec<_> = slices
                .iter()
                .map(|k| adjoint_model(k, &coils, &mask_set))
                .collect::<Result<_, _>>()?;
            std::fs::create_dir_all(&out)?;
            write_container(
                out.join("recon_zf.mcir"),
                &ArrayData::Complex128(stacks_to_array(&recon)),
            )?;
            println!("wrote recon_zf.mcir to {}", out.display());
            Ok(())
        }
        Cmd::Metrics {
            config,
            reference,
            test,
            mask,
            out,
        } => {
            let (p_lo, p_hi) = match config {
                Some(path) => {
                    let cfg = load_config(&path)?;
                    (cfg.metrics.p_lo, cfg.metrics.p_hi)
                }
                None => (1.0, 99.0),
            };
            let gt = array_to_stacks(&read_container(reference)?.into_complex_widened()?)?;
            let rec = array_to_stacks(&read_container(test)?.into_complex_widened()?)?;
            if gt.len() != rec.len() {
                return Err(Error::shape(
                    format!("{} slices", gt.len()),
                    format!("{} slices", rec.len()),
                ));
            }
            let supports: Vec<_> = match mask {
                Some(path) => {
                    let bits = read_container(path)?.into_bits()?;
                    let three = bits
                        .into_dimensionality::<ndarray::Ix3>()
                        .map_err(|_| Error::shape("(S, Vy, Vz) mask", "other rank".to_string()))?;
                    three.axis_iter(Axis(0)).map(|m| m.to_owned()).collect()
                }
                None => gt
                    .iter()
                    .map(|s| {
                        let (_, vy, vz) = s.data.dim();
                        ndarray::Array2::from_shape_fn((vy, vz), |(iy, iz)| {
                            (0..s.data.dim().0).any(|ni| s.data[[ni, iy, iz]].norm() > 0.0)
                        })
                    })
                    .collect(),
            };
            let report = mcir::pipeline::volume_metrics(&gt, &rec, &supports, p_lo, p_hi)?;
            let text = report.to_key_values();
            print!("{text}");
            if let Some(path) = out {
                std::fs::write(path, text)?;
            }
            Ok(())
        }
        Cmd::ExportPng { config, input, out } => {
            let (p_lo, p_hi) = match config {
                Some(path) => {
                    let cfg = load_config(&path)?;
                    (cfg.metrics.p_lo, cfg.metrics.p_hi)
                }
                None => (1.0, 99.0),
            };
            let stacks = array_to_stacks(&read_container(input)?.into_complex_widened()?)?;
            let refs: Vec<&ContrastImageStack> = stacks.iter().collect();
            let normalized = joint_percentile_normalize(&refs, None, p_lo, p_hi)?;
            std::fs::create_dir_all(&out)?;
            for (s, norm) in normalized.iter().enumerate() {
                montage_to_png(out.join(format!("montage_slice{s}.png")), norm, 5)?;
            }
            println!("wrote {} montage(s) to {}", normalized.len(), out.display());
            Ok(())
        }
        Cmd::Pipeline {
            config,
            workers,
            out,
        } => {
            init_workers(workers)?;
            let cfg = load_config(&config)?;
            let artifacts = run_pipeline(&cfg, &out)?;
            println!("pipeline complete: {}", out.display());
            print!("== INR ==\n{}", artifacts.report_inr.to_key_values());
            print!("== zero-filled ==\n{}", artifacts.report_zf.to_key_values());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

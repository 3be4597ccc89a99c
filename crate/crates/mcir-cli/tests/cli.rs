//! End-to-end smoke tests of the mcir binary.

use std::path::Path;
use std::process::{Command, Output};

const TINY_CONFIG: &str = r#"
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

fn mcir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn pipeline_produces_reports_and_montages() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let result = mcir(&[
        "pipeline",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("ssim_mean="));
    for f in [
        "report_inr.txt",
        "report_zf.txt",
        "recon_inr.mcir",
        "masks.png",
        "montage_gt_slice0.png",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn mask_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = mcir(&[
            "mask",
            "--config",
            &config,
            "--r",
            "2.0",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
    }
    let a = std::fs::read(out_a.join("masks.mcir")).unwrap();
    let b = std::fs::read(out_b.join("masks.mcir")).unwrap();
    assert_eq!(a, b, "identical seeds must give identical mask containers");
}

#[test]
fn stepwise_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap().to_owned();
    assert!(mcir(&["phantom", "--config", &config, "--out", &data_s])
        .status
        .success());
    assert!(mcir(&["mask", "--config", &config, "--out", &data_s])
        .status
        .success());
    let gt = data.join("ground_truth.mcir");
    let coils = data.join("coils.mcir");
    let masks = data.join("masks.mcir");
    assert!(mcir(&[
        "simulate",
        "--config",
        &config,
        "--phantom",
        gt.to_str().unwrap(),
        "--coils",
        coils.to_str().unwrap(),
        "--masks",
        masks.to_str().unwrap(),
        "--out",
        &data_s,
    ])
    .status
    .success());
    let kspace = data.join("kspace.mcir");
    assert!(mcir(&[
        "recon-zf",
        "--config",
        &config,
        "--kspace",
        kspace.to_str().unwrap(),
        "--coils",
        coils.to_str().unwrap(),
        "--masks",
        masks.to_str().unwrap(),
        "--out",
        &data_s,
    ])
    .status
    .success());
    let metrics = mcir(&[
        "metrics",
        "--ref",
        gt.to_str().unwrap(),
        "--test",
        data.join("recon_zf.mcir").to_str().unwrap(),
        "--mask",
        data.join("support.mcir").to_str().unwrap(),
    ]);
    assert!(metrics.status.success());
    let text = String::from_utf8_lossy(&metrics.stdout);
    assert!(text.contains("ssim_mean="), "got: {text}");

    // export PNGs from the zero-filled recon
    assert!(mcir(&[
        "export-png",
        "--input",
        data.join("recon_zf.mcir").to_str().unwrap(),
        "--out",
        data.join("png").to_str().unwrap(),
    ])
    .status
    .success());
    assert!(data.join("png/montage_slice0.png").exists());
}

#[test]
fn metrics_of_identical_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap().to_owned();
    assert!(mcir(&["phantom", "--config", &config, "--out", &data_s])
        .status
        .success());
    let gt = data.join("ground_truth.mcir");
    let result = mcir(&[
        "metrics",
        "--ref",
        gt.to_str().unwrap(),
        "--test",
        gt.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let text = String::from_utf8_lossy(&result.stdout);
    assert!(text.contains("psnr_mean_db=identical"), "got: {text}");
    assert!(text.contains("ssim_mean=1.000000"), "got: {text}");
}

#[test]
fn bad_input_fails_with_single_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let bogus = dir.path().join("nope.mcir");
    std::fs::write(&bogus, b"XXXXnot a container").unwrap();
    let result = mcir(&[
        "recon-zf",
        "--config",
        &config,
        "--kspace",
        bogus.to_str().unwrap(),
        "--coils",
        bogus.to_str().unwrap(),
        "--masks",
        bogus.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    let lines: Vec<&str> = stderr.trim().lines().collect();
    assert_eq!(lines.len(), 1, "expected one error line, got: {stderr}");
    assert!(lines[0].starts_with("error: "), "got: {stderr}");
}

#[test]
fn infeasible_mask_target_reports_range() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let result = mcir(&[
        "mask",
        "--config",
        &config,
        "--r",
        "400",
        "--out",
        dir.path().join("m").to_str().unwrap(),
    ]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("achievable range"),
        "calibration error should name the achievable range, got: {stderr}"
    );
}

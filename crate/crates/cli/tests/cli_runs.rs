//! End-to-end runs of the `cee` binary: output formats, reproducibility and
//! exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cee"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("cee-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn density_table_has_the_closed_form_row() {
    let out = tmp("density.csv");
    let status = bin()
        .args([
            "density",
            "--kernel",
            "stable:0.5",
            "--t",
            "1",
            "--r-min",
            "1e-3",
            "--r-max",
            "1e3",
            "--r-points",
            "7",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# "), "manifest header expected");
    assert!(text.contains("# kernel = \"stable:0.5\""));
    // the middle row of the 7-point log grid sits at r = 1, where the
    // closed form is 1/(2π)
    let row: Vec<&str> = text
        .lines()
        .find(|l| l.starts_with('1') && l.contains(','))
        .unwrap()
        .split(',')
        .collect();
    let value: f64 = row[1].parse().unwrap();
    assert!((value - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical_and_manifest_reproduces() {
    let out1 = tmp("mc1.csv");
    let out2 = tmp("mc2.csv");
    let args = |out: &PathBuf| {
        vec![
            "solve-mc".to_string(),
            "--kernel".into(),
            "stable:0.5".into(),
            "--spatial".into(),
            "free-bm:1".into(),
            "--phi".into(),
            "gaussian-bump".into(),
            "--t-grid".into(),
            "0.5,1".into(),
            "--x-grid".into(),
            "0,0.5".into(),
            "--n-paths".into(),
            "2000".into(),
            "--h".into(),
            "0.01".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    assert!(bin().args(args(&out1)).status().unwrap().success());
    assert!(bin()
        .args(args(&out2))
        .env("CEE_WORKERS", "3")
        .status()
        .unwrap()
        .success());
    let a = std::fs::read(&out1).unwrap();
    let mut b = std::fs::read(&out2).unwrap();
    // normalize the only difference: the configured output path in the
    // header echo
    let b_text = String::from_utf8(b.clone()).unwrap().replace("mc2.csv", "mc1.csv");
    b = b_text.into_bytes();
    assert_eq!(a, b, "worker count or rerun changed the bytes");

    // re-running from the manifest reproduces the file exactly
    let manifest = format!("{}.manifest.toml", out1.display());
    let out3 = tmp("mc3.csv");
    assert!(bin()
        .args([
            "solve-mc",
            "--config",
            &manifest,
            "--out",
            out3.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let c_text = std::fs::read_to_string(&out3)
        .unwrap()
        .replace("mc3.csv", "mc1.csv");
    assert_eq!(a, c_text.into_bytes());
}

#[test]
fn compare_passes_on_constant_data() {
    let out = tmp("compare.csv");
    let status = bin()
        .args([
            "compare",
            "--kernel",
            "stable:0.6",
            "--spatial",
            "free-bm:1",
            "--phi",
            "constant:1",
            "--t-grid",
            "0.5",
            "--x-grid",
            "0",
            "--n-paths",
            "4000",
            "--h",
            "0.005",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let data_row = text.lines().last().unwrap();
    assert!(data_row.ends_with("pass"), "row: {data_row}");
    // φ ≡ 1 on a conservative model: the Monte Carlo column is exactly 1
    assert!(data_row.starts_with("0.5,0,1,0,"), "row: {data_row}");
}

#[test]
fn config_errors_exit_2_and_runaway_exits_4() {
    let status = bin()
        .args(["solve-mc", "--kernel", "stable:1.7", "--spatial", "free-bm:1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bin()
        .args(["density", "--kernel", "stable:0.5"]) // missing --t
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let out = tmp("runaway.csv");
    let status = bin()
        .args([
            "solve-mc",
            "--kernel",
            "stable:0.5",
            "--spatial",
            "free-bm:1",
            "--phi",
            "constant:1",
            "--t-grid",
            "1",
            "--x-grid",
            "0",
            "--n-paths",
            "10",
            "--h",
            "1e-6",
            "--max-steps",
            "50",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn tabulated_kernel_loads_from_csv() {
    let table = tmp("nu.csv");
    std::fs::write(
        &table,
        cee_cli::tabulated::stable_table_csv(0.5, 1e-3, 1e3, 80),
    )
    .unwrap();
    let out = tmp("tab-density.csv");
    let status = bin()
        .args([
            "density",
            "--kernel",
            &format!("tabulated:{}", table.display()),
            "--t",
            "1",
            "--r-points",
            "5",
            "--r-min",
            "0.5",
            "--r-max",
            "2",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    // r = 1 row approximates the stable closed form 1/(2π)
    let row = text
        .lines()
        .find(|l| l.starts_with("1,") || l.starts_with("0.99999"))
        .unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.159).abs() < 0.01, "row {row}");

    // malformed metadata is a config error
    std::fs::write(&table, "0.1,1.0\n0.2,0.5\n").unwrap();
    let status = bin()
        .args([
            "density",
            "--kernel",
            &format!("tabulated:{}", table.display()),
            "--t",
            "1",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn residual_subcommand_reports_small_residuals() {
    let out = tmp("residual.csv");
    let status = bin()
        .args([
            "residual",
            "--kind",
            "weak",
            "--kernel",
            "stable:0.5",
            "--spatial",
            "killed-interval",
            "--phi",
            "exp-time:gaussian-bump",
            "--forcing",
            "eigenfunction:1",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4); // header + 3 test functions
    for row in &rows[1..] {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(cols[1].abs() < cols[2], "residual above bound: {row}");
    }
}

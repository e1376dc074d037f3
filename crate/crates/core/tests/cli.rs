use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn example() -> Value {
    serde_json::from_str(include_str!("../config/example.json")).unwrap()
}

fn write_config(dir: &Path, config: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn fluxread(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fluxread"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("FLUXREAD_THREADS", t),
        None => cmd.env_remove("FLUXREAD_THREADS"),
    };
    cmd.output().unwrap()
}

fn run(subcommand: &str, config: &Value, extra: &[&str]) -> (TempDir, Output) {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), config);
    let out = tmp.path().join("out");
    let mut args = vec![subcommand, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = fluxread(&args, None);
    (tmp, output)
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn assert_ok(output: &Output) {
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn spectrum_minimum_sits_at_half_flux() {
    let (tmp, output) = run("spectrum", &example(), &[]);
    assert_ok(&output);
    let (header, rows) = read_table(&tmp.path().join("out/spectrum.csv"));
    assert_eq!(rows.len(), 101);
    let phi = column(&header, &rows, "phi_ext");
    let f01 = column(&header, &rows, "f01");
    let lowest = (0..f01.len()).min_by(|&a, &b| f01[a].total_cmp(&f01[b])).unwrap();
    assert!((phi[lowest] - PI).abs() < 1e-9, "{}", phi[lowest]);
}

#[test]
fn classify_counts_each_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("shots.csv");
    std::fs::write(&input, "m1,m2,m3,iq1,iq2,iq3\n0,1,0,0,0,0\n0,1,1,0,0,0\n0,0,0,0,0,0\n").unwrap();
    let (out, output) = run("classify", &example(), &["--input", input.to_str().unwrap()]);
    assert_ok(&output);
    let (header, rows) = read_table(&out.path().join("out/classify.csv"));
    assert_eq!(header, ["correct", "assignment_error", "transition_error", "other", "total"]);
    assert_eq!(rows, [["1", "1", "1", "0", "3"]]);
}

#[test]
fn postselect_reads_shot_records() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("shots.csv");
    std::fs::write(&input, "m1,m2,m3,iq1,iq2,iq3\n0,0,0,-3,-3,-3\n0,1,1,-0.4,1,1\n1,1,1,0.2,2,2\n0,0,0,-2,-2,-2\n").unwrap();
    let mut config = example();
    config["postselect"]["gaps"] = json!({ "min": 0.0, "max": 2.0, "points": 3 });
    let (out, output) = run("postselect", &config, &["--input", input.to_str().unwrap()]);
    assert_ok(&output);
    let (header, rows) = read_table(&out.path().join("out/postselect.csv"));
    assert_eq!(column(&header, &rows, "retained"), [1.0, 0.5, 0.5]);
    assert_eq!(column(&header, &rows, "error"), [0.5, 0.0, 0.0]);
}

#[test]
fn fit_kappa_reads_contrast_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("contrast.csv");
    let kappa: f64 = 3.5;
    let k = 2.0 * PI * kappa;
    let mut text = String::from("t,contrast_sq\n");
    for i in 0..=40 {
        let t = 0.04 * i as f64;
        let n = if t <= 1.0 {
            (1.0 - (-0.5 * k * t).exp()).powi(2)
        } else {
            (1.0 - (-0.5 * k).exp()).powi(2) * (-k * (t - 1.0)).exp()
        };
        text.push_str(&format!("{t},{}\n", 2.0 * n));
    }
    std::fs::write(&input, text).unwrap();
    let (out, output) = run("fit-kappa", &example(), &["--input", input.to_str().unwrap()]);
    assert_ok(&output);
    let (header, rows) = read_table(&out.path().join("out/fit_kappa.csv"));
    let fitted = column(&header, &rows, "kappa")[0];
    assert!((fitted - kappa).abs() < 1e-4 * kappa, "{fitted}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (_tmp, output) = run("spectra", &example(), &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_parameter_names_its_field() {
    let mut config = example();
    config["device"]["e_c"] = json!(-1.0);
    let (_tmp, output) = run("spectrum", &config, &[]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("device.e_c"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &example());
    let out = tmp.path().join("out");
    let output = fluxread(
        &["spectrum", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some("abc"),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn data_commands_need_an_input_file() {
    for subcommand in ["classify", "postselect", "fit-kappa"] {
        let (_tmp, output) = run(subcommand, &example(), &[]);
        assert_eq!(output.status.code(), Some(2), "{subcommand}");
    }
}

#[test]
fn randomized_commands_need_a_seed() {
    let (_tmp, output) = run("simulate-readout", &example(), &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn chi_on_a_reduced_grid() {
    let mut config = example();
    config["chi"]["phi"] = json!({ "min": PI, "max": 1.1 * PI, "points": 3 });
    let (tmp, output) = run("chi", &config, &[]);
    assert_ok(&output);
    let (header, rows) = read_table(&tmp.path().join("out/chi.csv"));
    assert_eq!(header, ["phi_ext", "f01", "chi", "status"]);
    let chi = column(&header, &rows, "chi");
    assert!((chi[0] - 0.5577).abs() < 1e-3, "{}", chi[0]);
}

#[test]
fn compensated_trajectory_holds_the_frequency() {
    let (tmp, output) = run("compensate", &example(), &[]);
    assert_ok(&output);
    let (header, rows) = read_table(&tmp.path().join("out/trajectory.csv"));
    assert_eq!(header, ["t", "phi_ext", "n_bar", "f01_shifted"]);
    let f = column(&header, &rows, "f01_shifted");
    for v in &f {
        assert!((v - f[0]).abs() < 1e-6, "{v} vs {}", f[0]);
    }
    let n = column(&header, &rows, "n_bar");
    assert!(n.iter().cloned().fold(0.0, f64::max) > 9.0);
}

#[test]
fn ramsey_on_a_reduced_grid() {
    let mut config = example();
    config["ramsey"]["drive_offset"] = json!({ "min": -2.0, "max": 2.0, "points": 5 });
    config["ramsey"]["delays"] = json!({ "min": 0.0, "max": 1.0, "points": 3 });
    let (tmp, output) = run("ramsey", &config, &[]);
    assert_ok(&output);
    let (header, rows) = read_table(&tmp.path().join("out/ramsey.csv"));
    assert_eq!(header, ["delay", "drive_frequency", "probability"]);
    assert_eq!(rows.len(), 15);
    assert!(column(&header, &rows, "probability").iter().all(|p| (0.0..=1.0).contains(p)));
}

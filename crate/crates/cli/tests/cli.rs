use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const PAIR: &str = r#"
n_particles = 2
epsilon = 0.05
lambda = 1.0
energies = [0.5, 2.0]
seed = 42
replicas = 2
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn billiards(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billiards"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_epsilon_is_named() {
    let tmp = TempDir::new().unwrap();
    let text = PAIR.replace("epsilon = 0.05\n", "");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = billiards(&["simulate"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
}

#[test]
fn epsilon_above_half_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &PAIR.replace("0.05", "0.6"));
    let o = billiards(&["simulate"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"));
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_billiards"))
        .arg("limit")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PAIR);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(billiards(&["simulate"], &cfg, &a).status.success());
    assert!(billiards(&["simulate", "--threads", "1"], &cfg, &b)
        .status
        .success());
    for name in ["paths.csv", "collisions.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let rows = read_csv(&a.join("paths.csv"));
    assert_eq!(rows[0][..2], ["0".to_string(), "0".to_string()]);
    assert!(rows.iter().any(|r| r[0] == "1"));
}

#[test]
fn manifest_reproduces_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PAIR);
    let first = tmp.path().join("first");
    assert!(billiards(
        &["simulate", "--seed", "7", "--replicas", "3"],
        &cfg,
        &first
    )
    .status
    .success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["replicas"], 3);
    assert_eq!(manifest["command"], "simulate");
    let files: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["paths.csv", "collisions.csv"]);
    assert_eq!(manifest["outputs"][0]["schema"], "replica,time,e_1,e_2");

    let rerun_cfg = write_config(
        tmp.path(),
        "rerun.toml",
        manifest["config_toml"].as_str().unwrap(),
    );
    let second = tmp.path().join("second");
    assert!(billiards(&["simulate"], &rerun_cfg, &second)
        .status
        .success());
    for name in files {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap()
        );
    }
}

#[test]
fn kernel_rejects_zero_time() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!("{PAIR}kernel_times = [0.0]\n"),
    );
    let out = tmp.path().join("out");
    let o = billiards(&["kernel"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel_times"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn kernel_table_shape() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!("{PAIR}grid = 10\nkernel_times = [0.5, 2.0]\n"),
    );
    let out = tmp.path().join("out");
    assert!(billiards(&["kernel"], &cfg, &out).status.success());
    let rows = read_csv(&out.join("kernel.csv"));
    assert_eq!(rows.len(), 2 * 10 * 2);
    let atoms: Vec<f64> = rows
        .iter()
        .map(|r| r[5].parse().unwrap())
        .filter(|a| *a > 0.0)
        .collect();
    assert_eq!(atoms.len(), 2);
    // speed 1, t = 0.5: no-flip mass e^{-λ t}
    assert!((atoms[0] - (-0.5f64).exp()).abs() < 1e-15);
}

#[test]
fn limit_two_state_curve() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!("{PAIR}times = [0.1, 0.5, 1.0]\n"),
    );
    let out = tmp.path().join("out");
    assert!(billiards(&["limit"], &cfg, &out).status.success());
    for t in [0.1f64, 0.5, 1.0] {
        let rows = read_csv(&out.join(format!("limit_t{t}.csv")));
        assert_eq!(rows.len(), 2);
        let swapped = rows.iter().find(|r| r[1] == "2").unwrap();
        let p: f64 = swapped[3].parse().unwrap();
        assert!(
            (p - (1.0 - (-2.0 * t).exp()) / 2.0).abs() < 1e-10,
            "t={t}: {p}"
        );
    }
}

#[test]
fn doeblin_alpha_positive_at_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!("{PAIR}doeblin_t0 = [2.0]\ngrid = 40\n"),
    );
    let out = tmp.path().join("out");
    assert!(billiards(&["doeblin"], &cfg, &out).status.success());
    let rows = read_csv(&out.join("doeblin.csv"));
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r[2].parse::<f64>().unwrap() > 0.0, "{r:?}");
    }
}

#[test]
fn compare_degenerate_cases_are_exact() {
    let tmp = TempDir::new().unwrap();
    let text = "n_particles = 3\nepsilon = 0.05\nlambda = 1.0\nenergies = [1.0, 1.0, 1.0]\n\
                replicas = 50\ntimes = [0.0, 0.5]\nepsilon_ladder = [0.08, 0.04]\n";
    let cfg = write_config(tmp.path(), "c.toml", text);
    let out = tmp.path().join("out");
    assert!(billiards(&["compare"], &cfg, &out).status.success());
    for r in read_csv(&out.join("compare.csv")) {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }

    let cfg = write_config(
        tmp.path(),
        "d.toml",
        &text.replace("[1.0, 1.0, 1.0]", "[0.5, 1.0, 2.0]"),
    );
    let out = tmp.path().join("out2");
    assert!(billiards(&["compare"], &cfg, &out).status.success());
    for r in read_csv(&out.join("compare.csv"))
        .iter()
        .filter(|r| r[1] == "0")
    {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
}

#[test]
fn compare_cap_suggests_gillespie() {
    let tmp = TempDir::new().unwrap();
    let text = "n_particles = 4\nepsilon = 0.05\nlambda = 1.0\nenergies = [0.5, 1.0, 2.0, 3.0]\n\
                replicas = 20\ntimes = [0.25]\nepsilon_ladder = [0.08]\nstate_cap = 10\n";
    let cfg = write_config(tmp.path(), "c.toml", text);
    let out = tmp.path().join("out");
    let o = billiards(&["compare"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--gillespie"), "{}", stderr(&o));
    assert!(billiards(&["compare", "--gillespie"], &cfg, &out)
        .status
        .success());
    assert_eq!(read_csv(&out.join("compare.csv")).len(), 1);
}

#[test]
fn numerical_failure_leaves_no_outputs() {
    let tmp = TempDir::new().unwrap();
    // two replicas cannot support a rate fit
    let cfg = write_config(tmp.path(), "c.toml", PAIR);
    let out = tmp.path().join("out");
    let o = billiards(&["rates"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn rates_and_recollisions_tables() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{PAIR}epsilon_ladder = [0.08]\nlambdas = [1.0, 2.0]\n");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    let o = billiards(&["rates", "--replicas", "400"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("rates.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let v: Vec<f64> = r[2..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] < v[0] && v[0] < v[2], "{r:?}");
    }

    let out = tmp.path().join("rec");
    assert!(billiards(&["recollisions", "--replicas", "50"], &cfg, &out)
        .status
        .success());
    let labels: Vec<String> = read_csv(&out.join("recollisions.csv"))
        .into_iter()
        .map(|r| r[1].clone())
        .collect();
    assert_eq!(labels, ["2.000000", "1.414214"]);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gaugenoise(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaugenoise"))
        .args(args)
        .env("GAUGENOISE_OUTPUT_ROOT", root)
        .env("GAUGENOISE_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn column(csv: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(files_under(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}

const SMALL: &str = "initial_state = \"u1_vacuum\"\n[model]\nkind = \"u1\"\nsites = 2\n\
    [grid]\nkind = \"uniform\"\nt_max = 3.0\npoints = 31\n[output]\ndir = \"out\"\nentropy = false\n";

#[test]
fn malformed_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "initial_state = \"u1_vacuum\"\n[model]\nkind = \"qed\"\n");
    let out = gaugenoise(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());

    let cfg = write_config(tmp.path(), "typo.toml", &format!("{SMALL}\n[noise]\ngama = 0.1\n"));
    let out = gaugenoise(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(files_under(tmp.path()).len(), 2);
}

#[test]
fn noiseless_run_keeps_gauge_invariance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ideal.toml", &format!("{SMALL}[noise]\ngamma = 0.0\n"));
    let out = gaugenoise(&["run", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().next().unwrap());
    let eps = column(&csv, "violation");
    assert_eq!(eps.len(), 31);
    assert!(eps.iter().all(|e| e.abs() < 1e-12));
    let fid = column(&csv, "fidelity");
    assert!((fid[0] - 1.0).abs() < 1e-12);
}

#[test]
fn sidecar_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL}[noise]\ngamma = 0.1\nbeta = 1.2\n[protection]\nkind = \"linear\"\nsequence = \"staggered\"\nv = 10.0\n"
    );
    let cfg = write_config(tmp.path(), "noisy.toml", &body);
    let first = tmp.path().join("first");
    let out = gaugenoise(&["run", cfg.to_str().unwrap()], &first);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_a = PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().next().unwrap());
    let sidecar = csv_a.with_extension("meta.toml");
    assert!(sidecar.exists());

    let second = tmp.path().join("second");
    let out = gaugenoise(&["run", sidecar.to_str().unwrap()], &second);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_b = PathBuf::from(String::from_utf8(out.stdout).unwrap().lines().next().unwrap());
    assert_ne!(csv_a, csv_b);
    for name in ["violation", "condensate", "fidelity"] {
        let (a, b) = (column(&csv_a, name), column(&csv_b, name));
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9), "{name}");
    }
}

#[test]
fn sweep_writes_one_csv_per_point_and_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "initial_state = \"u1_vacuum\"\n[model]\nkind = \"u1\"\nsites = 2\n\
        [noise]\ngamma = [0.025, 0.05, 0.1]\nbeta = 1.0\n\
        [grid]\nkind = \"log\"\nt_min = 0.001\nt_max = 5.5\npoints = 200\n[output]\ndir = \"sweep\"\nentropy = false\n";
    let cfg = write_config(tmp.path(), "sweep.toml", body);
    let out = gaugenoise(&["sweep", cfg.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("sweep");
    let csvs: Vec<_> = files_under(&dir)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && !p.ends_with("index.csv"))
        .collect();
    assert_eq!(csvs.len(), 3);
    let index = dir.join("index.csv");
    assert_eq!(fs::read_to_string(&index).unwrap().lines().count(), 4);

    let out = gaugenoise(&["fit-scaling", index.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("gamma"));
}

#[test]
fn tables_command_prints_all_three_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gaugenoise(&["tables"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("\n# ").count() + usize::from(text.starts_with("# ")), 3);
    assert!(text.contains("(0,0,0,0)"));
}

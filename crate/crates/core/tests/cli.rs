use std::path::Path;
use std::process::{Command, Output};

use lossy_condensate::config::parse_config;
use lossy_condensate::persist::{file_sha256, read_csv, Dataset, FailureRecord, RunManifest};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lossy-bec"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
scenario = "single_drain"

[physics]
gamma = 0.3

[numerics]
n_sites = 256
t_max = 10.0
snapshot_times = [5.0, 10.0]

[ensemble]
n_traj = 8
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn lists_every_scenario() {
    let o = cli(&["list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in [
        "single_drain",
        "two_drain",
        "critical_scan",
        "scattering_scan",
        "gamma_sweep",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(name)),
            "{name} missing from\n{text}"
        );
    }
}

#[test]
fn validate_prints_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = cli(&["validate", &cfg, "--seed", "99", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = parse_config(&stdout(&o)).unwrap();
    assert_eq!(resolved.ensemble.base_seed, 99);
    assert_eq!(resolved.ensemble.workers, 2);
    assert_eq!(resolved.numerics.snapshot_times, vec![0.0, 5.0, 10.0]);
}

#[test]
fn validate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = \"single_drain\"\n[numerics]\ndt = 1.0\n",
    );
    let o = cli(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stability bound"));
    let o = cli(&["validate", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_datasets_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("runs");
    let o = cli(&[
        "run",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run_dir = stdout(&o).lines().next().unwrap().to_string();
    let run_dir = Path::new(&run_dir);
    assert!(run_dir.starts_with(&out));

    let m = RunManifest::read(&run_dir.join("manifest.json")).unwrap();
    assert_eq!(m.scenario, "single_drain");
    assert_eq!(m.base_seed, 5);
    assert_eq!((m.n_completed, m.n_aborted), (8, 0));
    assert!(run_dir
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .ends_with(&m.config_hash[..12]));
    for f in &m.files {
        assert_eq!(
            file_sha256(&run_dir.join(&f.path)).unwrap(),
            f.sha256,
            "{}",
            f.path
        );
    }
    let names: Vec<&str> = m.files.iter().map(|f| f.dataset.as_str()).collect();
    for name in ["density", "phase", "velocity", "wedge"] {
        assert!(names.contains(&name), "{name} missing");
    }

    // the recorded config reproduces the hash
    let recorded =
        parse_config(&std::fs::read_to_string(run_dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(recorded.hash().unwrap(), m.config_hash);

    let density = Dataset::read_binary(&run_dir.join("density.bin")).unwrap();
    assert_eq!(density.shape, vec![3, 256]);
    assert_eq!(density.config_hash, m.config_hash);
    let (header, rows) = read_csv(&run_dir.join("density.csv")).unwrap();
    assert_eq!(header.len(), 257);
    for (r, row) in rows.iter().enumerate() {
        assert_eq!(&row[1..], &density.data[r * 256..(r + 1) * 256]);
    }
}

#[test]
fn same_seed_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut digests = Vec::new();
    for (i, workers) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        let o = cli(&[
            "run",
            &cfg,
            "--out-dir",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(o.status.success());
        let run_dir = stdout(&o).lines().next().unwrap().to_string();
        let bytes = Dataset::read_binary(&Path::new(&run_dir).join("density.bin")).unwrap();
        digests.push(bytes.data);
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn failures_leave_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = \"single_drain\"\n[numerics]\ndt = 1.0\n",
    );
    let out = dir.path().join("runs");
    let o = cli(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let record: FailureRecord =
        serde_json::from_str(&std::fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(record.kind, "stability_bound");
    assert_eq!(record.scenario, None);
    let line: FailureRecord =
        serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(line, record);
}

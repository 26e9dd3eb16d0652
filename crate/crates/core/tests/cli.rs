use lifshits::records::{read_jsonl_file, validate_record};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lifshits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifshits")).args(args).env("SOURCE_DATE_EPOCH", "0").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = lifshits(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_eta1.csv")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] =
    ["--override", "experiment.side=4", "--override", "experiment.n_realizations=6", "--override", "experiment.log_energies.count=6"];

#[test]
fn fit_recovers_the_fixture_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["fit", "--input", s(&fixture()), "--out-dir", s(dir.path())]);
    assert!(stdout.contains("η̂ = 1.000000"), "{stdout}");
    let recs = read_jsonl_file(&dir.path().join("results.jsonl")).unwrap();
    assert_eq!(recs.len(), 1);
    assert!((recs[0].payload["eta_hat"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("eta_hat,"));
    assert!(dir.path().join("config.lock").exists());
}

fn preset_config(name: &str, dir: &Path) -> String {
    let out = dir.join(format!("lock-{name}"));
    ok(&["fit", "--input", s(&fixture()), "--preset", name, "--out-dir", s(&out)]);
    let lock: toml::Table = std::fs::read_to_string(out.join("config.lock")).unwrap().parse().unwrap();
    toml::to_string(lock["config"].as_table().unwrap()).unwrap()
}

#[test]
fn unknown_config_key_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = preset_config("qm-poisson", dir.path()).replace("[potential]", "[potential]\ncolour = 2");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = lifshits(&["ids", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().find(|l| l.starts_with('{')).expect("error record on stderr");
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"], "config");
    assert!(v["message"].as_str().unwrap().contains("unknown field `colour`"), "{line}");
    assert!(out.join("error.json").exists());

    let o = lifshits(&["ids", "--preset", "qm-poisson", "--override", "stats.colour=2", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert_eq!(lifshits(&["ids", "--preset", "no-such-preset", "--out-dir", s(&out)]).status.code(), Some(1));
    assert_eq!(lifshits(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn plot_data_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["plot-data", "--kind", "phase", "--out-dir", s(dir.path())]);
    let phase = std::fs::read_to_string(dir.path().join("plot_phase.csv")).unwrap();
    assert_eq!(phase.lines().count(), 1 + 81);

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    for (kind, file) in [("loglog", "plot_loglog.csv"), ("chains", "plot_chains.csv")] {
        ok(&["plot-data", "--kind", kind, "--input", s(&empty), "--out-dir", s(dir.path())]);
        assert_eq!(std::fs::read_to_string(dir.path().join(file)).unwrap().lines().count(), 1, "{kind}");
    }
    assert_eq!(lifshits(&["plot-data", "--kind", "loglog", "--out-dir", s(dir.path())]).status.code(), Some(1));
}

fn validate_dir(dir: &Path) -> usize {
    let text = std::fs::read_to_string(dir.join("results.jsonl")).unwrap();
    for line in text.lines() {
        validate_record(&serde_json::from_str(line).unwrap()).unwrap_or_else(|e| panic!("{e}: {line}"));
    }
    text.lines().count()
}

#[test]
fn every_subcommand_writes_valid_records() {
    let root = tempfile::tempdir().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("sample-measure", vec![]),
        ("sample-potential", vec![]),
        ("eigs", vec![]),
        ("ids", vec![]),
        ("regime", vec![]),
        ("stat-tests", vec![]),
        ("bench", vec!["--override", "experiment.bench_sides=[2, 4]"]),
    ];
    for (cmd, extra) in runs {
        let out = root.path().join(cmd);
        let mut args = vec![cmd, "--preset", "qm-poisson", "--out-dir", s(&out)];
        args.extend(SMALL);
        args.extend(extra);
        ok(&args);
        assert!(validate_dir(&out) > 0, "{cmd} wrote no records");
        assert!(out.join("config.lock").exists() && out.join("summary.csv").exists(), "{cmd}");
    }
    let out = root.path().join("temple");
    ok(&["bounds", "--preset", "temple-qm", "--override", "bounds.n_realizations=3", "--out-dir", s(&out)]);
    assert_eq!(validate_dir(&out), 4);
}

#[test]
fn locked_config_reproduces_the_run() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let mut args = vec!["ids", "--preset", "qm-poisson", "--out-dir", s(&a)];
    args.extend(SMALL);
    ok(&args);
    let lock: toml::Table = std::fs::read_to_string(a.join("config.lock")).unwrap().parse().unwrap();
    let cfg = toml::to_string(lock["config"].as_table().unwrap()).unwrap();
    let path = root.path().join("again.toml");
    std::fs::write(&path, cfg).unwrap();
    let b = root.path().join("b");
    ok(&["ids", "--config", s(&path), "--out-dir", s(&b)]);
    let ra = read_jsonl_file(&a.join("results.jsonl")).unwrap();
    let rb = read_jsonl_file(&b.join("results.jsonl")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(ra[0].config_hash, lock["config_hash"].as_str().unwrap());
}

#[test]
fn reduced_regime_run_is_thread_independent() {
    let root = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for threads in ["1", "2"] {
        let out = root.path().join(threads);
        let mut args = vec!["regime", "--preset", "cl-poisson", "--threads", threads, "--out-dir", s(&out)];
        args.extend(SMALL);
        ok(&args);
        files.push(std::fs::read(out.join("results.jsonl")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

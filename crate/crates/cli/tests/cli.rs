use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HARD: &str = include_str!("../../../configs/rdm-hard.toml");

fn raymimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raymimo")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = raymimo(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn setup(dir: &Path, text: &str) -> (PathBuf, PathBuf) {
    let cfg = dir.join("c.toml");
    fs::write(&cfg, text).unwrap();
    let ds = dir.join("ds");
    ok(&["generate", "--config", p(&cfg), "--out", p(&ds)]);
    (cfg, ds)
}

fn data_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect()
}

#[test]
fn nonpositive_interval_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, HARD.replace("sampling_interval = 0.5", "sampling_interval = 0.0")).unwrap();
    let out = raymimo(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("ds"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset.sampling_interval"));
}

#[test]
fn unknown_field_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, HARD.replace("trials = 100", "trials = 100\ntrails = 3")).unwrap();
    let out = raymimo(&["validate", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("estimation"));
}

#[test]
fn usage_error_is_two() {
    assert_eq!(raymimo(&["generate"]).status.code(), Some(2));
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ds) = setup(dir.path(), HARD);
    let again = dir.path().join("again");
    ok(&["generate", "--config", p(&cfg), "--out", p(&again)]);
    for f in [
        "manifest.toml",
        "provenance.toml",
        "episode_000001/rays.txt",
        "episode_000001/scenes.jsonl",
    ] {
        assert_eq!(fs::read(ds.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    assert!(ok(&["validate", "--dataset", p(&ds)]).starts_with("dataset ok"));
}

#[test]
fn labels_stay_in_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ds) = setup(dir.path(), HARD);
    let out = dir.path().join("labels");
    ok(&["label", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&out)]);
    let text = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert!(text.starts_with("# raymimo"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    for r in rows {
        let pair: usize = r[2].parse().unwrap();
        assert!(pair < 256);
        assert_eq!(
            pair,
            r[4].parse::<usize>().unwrap() * 32 + r[3].parse::<usize>().unwrap()
        );
    }
}

#[test]
fn estimate_writes_one_row_per_snr_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ds) = setup(dir.path(), HARD);
    let out = dir.path().join("est");
    ok(&["estimate", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&out)]);
    let text = fs::read_to_string(out.join("nmse.csv")).unwrap();
    let rows = data_rows(&text);
    for id in ["ls-1bit", "ls-unquantized"] {
        assert_eq!(rows.iter().filter(|r| r[2] == id).count(), 5, "{id}");
    }
    assert!(rows.iter().all(|r| r[3] == "rdm-hard:planar"));
}

#[test]
fn spherical_without_anchors_is_synthesis_error() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, ds) = setup(dir.path(), &HARD.replace("anchor_distance = 50.0\n", ""));
    let out = raymimo(&[
        "synthesize",
        "--config",
        p(&cfg),
        "--dataset",
        p(&ds),
        "--out",
        p(&dir.path().join("s")),
        "--regime",
        "spherical",
    ]);
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing_anchor"), "{err}");
    assert!(err.contains("anchor_distance"), "{err}");
}

#[test]
fn missing_manifest_is_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = raymimo(&["summary", "--dataset", p(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest_missing"));
}

#[test]
fn summary_reports_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ds) = setup(dir.path(), HARD);
    let text = ok(&["summary", "--dataset", p(&ds)]);
    assert!(text.contains("rdm-hard"), "{text}");
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for e in fs::read_dir(root).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            ok(&["validate", "--config", p(&path)]);
        }
    }
}

#[test]
fn wideband_rays_without_delay_is_synthesis_error() {
    let dir = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let rays = fs::read_to_string(configs.join("rays-example.txt")).unwrap();
    fs::write(dir.path().join("rays-example.txt"), rays.replace("4.4e-8", "-")).unwrap();
    let text = fs::read_to_string(configs.join("rays-example.toml")).unwrap();
    let (cfg, ds) = setup(dir.path(), &text);
    let out = raymimo(&[
        "synthesize",
        "--config",
        p(&cfg),
        "--dataset",
        p(&ds),
        "--out",
        p(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing_delay") && err.contains("scene 1"), "{err}");
}

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raymimo::dataset::{
    channel_tensor_bytes, export_channel_tensor, read_channel_tensor, read_dataset, write_dataset, DatasetManifest,
    Dtype, ReceiverType, TensorOptions,
};
use raymimo::model::{ArrayConfig, Episode, EpisodeKind, Pose, RayPath, Scene};
use raymimo::synthesis::{Regime, Spreading, Subcarriers};

fn fixture(episodes: usize, scenes: usize, anchored: bool, seed: u64) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes as u64)
        .map(|id| Episode {
            id,
            sampling_interval: 0.5,
            kind: EpisodeKind::Trajectory,
            start_time: Some(6.0 * id as f64),
            scenes: (0..scenes as u64)
                .map(|s| {
                    let n = if rng.random_bool(0.1) {
                        0
                    } else {
                        rng.random_range(1..=3)
                    };
                    let rays = (0..n)
                        .map(|_| {
                            let r = RayPath::new(
                                Complex64::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)),
                                rng.random_range(0.0..360.0),
                                rng.random_range(-90.0..=90.0),
                                rng.random_range(0.0..360.0),
                                rng.random_range(-90.0..=90.0),
                            )
                            .with_delay(rng.random_range(0.0..1e-6));
                            if anchored {
                                r.with_anchors(
                                    [rng.random_range(50.0..60.0), 1.0, 3.0],
                                    [rng.random_range(50.0..60.0), -1.0, 2.0],
                                )
                            } else {
                                r
                            }
                        })
                        .collect();
                    Scene::new(
                        s,
                        rays,
                        Pose::new([0.0, 0.0, 10.0], 0.0),
                        Pose::new([rng.random_range(0.0..100.0), 5.0, 1.5], rng.random_range(0.0..360.0)),
                    )
                })
                .collect(),
        })
        .collect()
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn table_row(
    name: &str,
    rtype: ReceiverType,
    episodes: usize,
    scenes: usize,
    anchored: bool,
) -> (DatasetManifest, Vec<Episode>) {
    let eps = fixture(episodes, scenes, anchored, episodes as u64);
    let manifest = DatasetManifest::describe(name, 60e9, rtype, 6.0, &eps);
    (manifest, eps)
}

#[test]
fn mobile_row_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, eps) = table_row("s011-shape", ReceiverType::Mobile, 76, 20, false);
    write_dataset(dir.path(), &manifest, &eps).unwrap();
    let loaded = read_dataset(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.episodes, eps);
    assert_eq!(loaded.manifest.episodes, 76);
    assert_eq!(loaded.manifest.scenes_per_episode, 20);
    assert_eq!(loaded.manifest.sampling_interval, 0.5);
    assert!(loaded.report.notes.is_empty());
}

#[test]
fn fixed_row_round_trips_with_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, eps) = table_row("s012-shape", ReceiverType::Fixed, 105, 20, true);
    write_dataset(dir.path(), &manifest, &eps).unwrap();
    let loaded = read_dataset(dir.path()).unwrap();
    assert_eq!(loaded.episodes, eps);
    assert_eq!(loaded.manifest.receiver_type, ReceiverType::Fixed);
    assert_eq!(loaded.manifest.episodes, 105);
    let rays = fs::read_to_string(dir.path().join("episode_000000/rays.txt")).unwrap();
    assert!(rays
        .lines()
        .filter(|l| !l.starts_with('#'))
        .all(|l| l.split_whitespace().count() == 16));
}

#[test]
fn writes_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (manifest, eps) = table_row("twice", ReceiverType::Mobile, 4, 5, true);
    write_dataset(a.path(), &manifest, &eps).unwrap();
    write_dataset(b.path(), &manifest, &eps).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    // rewriting in place drops stale episode directories
    write_dataset(a.path(), &manifest, &eps[..2]).unwrap();
    assert_eq!(read_dataset(a.path()).unwrap().episodes.len(), 2);
}

#[test]
fn missing_delay_column_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, eps) = table_row("broken", ReceiverType::Mobile, 1, 3, false);
    write_dataset(dir.path(), &manifest, &eps).unwrap();
    let path = dir.path().join("episode_000000/rays.txt");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let victim = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let cut: Vec<&str> = lines[victim].split_whitespace().take(9).collect();
    lines[victim] = cut.join(" ");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert_eq!(err.code(), "parse_error");
    assert!(err.to_string().contains(&format!(":{}", victim + 1)), "{err}");
}

#[test]
fn missing_manifest_and_version_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap_err().code(), "manifest_missing");
    let (manifest, eps) = table_row("v", ReceiverType::Mobile, 1, 1, false);
    write_dataset(dir.path(), &manifest, &eps).unwrap();
    let mp = dir.path().join("manifest.toml");
    let text = fs::read_to_string(&mp)
        .unwrap()
        .replace("raymimo-dataset/1", "raymimo-dataset/0");
    fs::write(&mp, text).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap_err().code(), "version_mismatch");
}

#[test]
fn empty_dataset_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = table_row("e", ReceiverType::Mobile, 1, 1, false);
    assert_eq!(
        write_dataset(dir.path(), &manifest, &[]).unwrap_err().code(),
        "empty_dataset"
    );
}

#[test]
fn tensor_size_formula_is_exact() {
    let tx = ArrayConfig::ula(4, 60e9).unwrap();
    let rx = ArrayConfig::ula(2, 60e9).unwrap();
    for (e, s) in [(76, 20), (105, 20)] {
        let eps = fixture(e, s, true, 3);
        for (dtype, width) in [(Dtype::Complex64, 8), (Dtype::Complex128, 16)] {
            for (regime, k) in [(Regime::Planar, 1), (Regime::Spherical, 3)] {
                let opts = TensorOptions {
                    regime,
                    subcarriers: Subcarriers {
                        count: k,
                        spacing: 240e3,
                    },
                    spreading: Spreading::None,
                    dtype,
                };
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("h.bin");
                let header = export_channel_tensor(&path, &eps, &tx, &rx, &opts).unwrap();
                assert_eq!(header.shape, [e, s, k, 2, 4]);
                let t = read_channel_tensor(&path).unwrap();
                let size = fs::metadata(&path).unwrap().len() as usize;
                assert_eq!(size, t.header_bytes + width * e * s * k * 2 * 4);
                let valid = eps
                    .iter()
                    .flat_map(|ep| &ep.scenes)
                    .filter(|sc| sc.has_channel())
                    .count();
                assert_eq!(t.mask.iter().filter(|&&m| m).count(), valid);
            }
        }
    }
}

#[test]
fn tensor_masks_and_zero_blocks() {
    let tx = ArrayConfig::ula(2, 60e9).unwrap();
    let rx = ArrayConfig::ula(2, 60e9).unwrap();
    let mut eps = fixture(1, 2, false, 5);
    eps[0].scenes[0].rays = vec![RayPath::new(Complex64::new(1.0, 0.0), 0.0, 0.0, 0.0, 0.0)];
    eps[0].scenes[1].rays.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.bin");
    let opts = TensorOptions {
        dtype: Dtype::Complex128,
        ..TensorOptions::narrowband(Regime::Planar)
    };
    export_channel_tensor(&path, &eps, &tx, &rx, &opts).unwrap();
    let t = read_channel_tensor(&path).unwrap();
    assert_eq!(t.mask, vec![true, false]);
    assert!(t.data[t.index(0, 1, 0, 0, 0)..].iter().all(|z| z.norm() == 0.0));
    assert!(t.data[t.index(0, 0, 0, 0, 0)].norm() > 0.0);

    let one = fixture(1, 1, false, 6);
    let (h, bytes) = channel_tensor_bytes(&one, &tx, &rx, &TensorOptions::narrowband(Regime::Planar)).unwrap();
    assert_eq!(h.element_count(), 4);
    let again = channel_tensor_bytes(&one, &tx, &rx, &TensorOptions::narrowband(Regime::Planar)).unwrap();
    assert_eq!(bytes, again.1);
}

#[test]
fn synthesis_errors_carry_location() {
    let tx = ArrayConfig::ula(2, 60e9).unwrap();
    let rx = ArrayConfig::ula(2, 60e9).unwrap();
    let eps = fixture(2, 3, false, 8);
    let err = channel_tensor_bytes(&eps, &tx, &rx, &TensorOptions::narrowband(Regime::Spherical)).unwrap_err();
    assert_eq!(err.code(), "missing_anchor");
    assert!(err.to_string().contains("episode"), "{err}");
}

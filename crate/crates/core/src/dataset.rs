//! On-disk episodic dataset and channel tensor export.
//!
//! Layout of a dataset root:
//!
//! ```text
//! manifest.toml
//! episode_000000/
//!     episode.toml    id, sampling interval, kind, start time
//!     scenes.jsonl    one JSON object per scene: index, poses, features
//!     rays.txt        one ray per line, whitespace separated
//! episode_000001/
//! ...
//! ```
//!
//! Ray lines carry `episode scene path gain_re gain_im aod_az aod_el aoa_az
//! aoa_el delay`, optionally followed by the six anchor coordinates
//! `tx_x tx_y tx_z rx_x rx_y rx_z`: 10 or 16 fields. A delay of `-` means
//! the delay is unknown. Lines starting with `#` are comments.
//!
//! Channel tensors are a single binary file:
//!
//! ```text
//! magic     8 bytes   "RMTENSOR"
//! json_len  u64 LE
//! header    json_len bytes of UTF-8 JSON (shape, dtype, regime, version, ...)
//! mask      E*S bytes, 1 = scene synthesized, 0 = no channel / padding
//! payload   E*S*K*N_rx*N_tx complex values, row-major in that order,
//!           interleaved (re, im), little-endian IEEE-754
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_episode, ArrayConfig, Episode, EpisodeKind, FeatureValue, Pose, RayPath, Scene, Violation,
};
use crate::synthesis::{synthesize_scene, Regime, Spreading, Subcarriers, SynthesisError};
use crate::TOOLKIT_VERSION;

pub const FORMAT_VERSION: &str = "raymimo-dataset/1";
pub const TENSOR_FORMAT: &str = "raymimo-tensor/1";
pub const TENSOR_MAGIC: &[u8; 8] = b"RMTENSOR";

const MANIFEST_FILE: &str = "manifest.toml";
const EPISODE_FILE: &str = "episode.toml";
const SCENES_FILE: &str = "scenes.jsonl";
const RAYS_FILE: &str = "rays.txt";
const RAYS_HEADER: &str =
    "# episode scene path gain_re gain_im aod_az aod_el aoa_az aoa_el delay [tx_x tx_y tx_z rx_x rx_y rx_z]";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no manifest at {0}")]
    ManifestMissing(PathBuf),
    #[error("format version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("dataset contains no episodes")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("episode {episode}, scene {scene}: {source}")]
    Synthesis {
        episode: u64,
        scene: u64,
        source: SynthesisError,
    },
    #[error("malformed tensor file: {0}")]
    Tensor(String),
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::ManifestMissing(_) => "manifest_missing",
            DatasetError::VersionMismatch { .. } => "version_mismatch",
            DatasetError::Parse { .. } => "parse_error",
            DatasetError::Io { .. } => "io_error",
            DatasetError::EmptyDataset => "empty_dataset",
            DatasetError::Invalid(_) => "invalid_dataset",
            DatasetError::Synthesis { source, .. } => source.code(),
            DatasetError::Tensor(_) => "malformed_tensor",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverType {
    Fixed,
    Mobile,
}

/// Dataset-level metadata. Keys on disk follow the dataset catalogue columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    #[serde(rename = "dataset_name")]
    pub name: String,
    #[serde(rename = "frequency_hz")]
    pub carrier_frequency: f64,
    #[serde(rename = "number_of_receivers", default, skip_serializing_if = "Option::is_none")]
    pub receivers: Option<u32>,
    pub receiver_type: ReceiverType,
    /// Seconds.
    #[serde(rename = "time_between_scenes_s")]
    pub sampling_interval: f64,
    /// Seconds.
    #[serde(rename = "time_between_episodes_s")]
    pub episode_spacing: f64,
    #[serde(rename = "number_of_episodes")]
    pub episodes: usize,
    #[serde(rename = "number_of_scenes_per_episode")]
    pub scenes_per_episode: usize,
    #[serde(
        rename = "number_of_valid_channels",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub valid_channels: Option<usize>,
}

impl DatasetManifest {
    /// Manifest whose counts are taken from `episodes`. `scenes_per_episode`
    /// is the longest episode.
    pub fn describe(
        name: impl Into<String>,
        carrier_frequency: f64,
        receiver_type: ReceiverType,
        episode_spacing: f64,
        episodes: &[Episode],
    ) -> Self {
        DatasetManifest {
            format_version: FORMAT_VERSION.to_string(),
            name: name.into(),
            carrier_frequency,
            receivers: None,
            receiver_type,
            sampling_interval: episodes.first().map_or(0.0, |e| e.sampling_interval),
            episode_spacing,
            episodes: episodes.len(),
            scenes_per_episode: episodes.iter().map(|e| e.scenes.len()).max().unwrap_or(0),
            valid_channels: Some(
                episodes
                    .iter()
                    .flat_map(|e| &e.scenes)
                    .filter(|s| s.has_channel())
                    .count(),
            ),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.format_version.is_empty() {
            return Err(DatasetError::Invalid("format_version is empty".into()));
        }
        if self.episodes < 1 || self.scenes_per_episode < 1 {
            return Err(DatasetError::Invalid(
                "number_of_episodes and number_of_scenes_per_episode must be >= 1".into(),
            ));
        }
        if !(self.carrier_frequency.is_finite() && self.carrier_frequency > 0.0) {
            return Err(DatasetError::Invalid("frequency_hz must be positive".into()));
        }
        if !(self.sampling_interval.is_finite() && self.sampling_interval > 0.0) {
            return Err(DatasetError::Invalid("time_between_scenes_s must be positive".into()));
        }
        if !(self.episode_spacing.is_finite() && self.episode_spacing >= 0.0) {
            return Err(DatasetError::Invalid("time_between_episodes_s must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRecord {
    id: u64,
    sampling_interval: f64,
    kind: EpisodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneRecord {
    index: u64,
    tx_pose: Pose,
    rx_pose: Pose,
    #[serde(default)]
    features: BTreeMap<String, FeatureValue>,
}

/// Problems found while loading that do not prevent loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    /// `(episode id, violation)`; scene indices are inside the violation.
    pub violations: Vec<(u64, Violation)>,
    /// Manifest/content disagreements.
    pub notes: Vec<String>,
}

impl LoadReport {
    pub fn flagged_scenes(&self) -> usize {
        self.violations.iter().filter(|(_, v)| v.is_flag()).count()
    }

    pub fn errors(&self) -> impl Iterator<Item = &(u64, Violation)> {
        self.violations.iter().filter(|(_, v)| !v.is_flag())
    }

    pub fn is_clean(&self) -> bool {
        self.errors().next().is_none() && self.notes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub episodes: Vec<Episode>,
    pub report: LoadReport,
}

fn episode_dir(root: &Path, id: u64) -> PathBuf {
    root.join(format!("episode_{id:06}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

/// One ray line, without trailing newline.
pub fn format_ray_line(episode: u64, scene: u64, path: usize, ray: &RayPath) -> String {
    let mut s = format!(
        "{episode} {scene} {path} {} {} {} {} {} {} {}",
        ray.gain.re,
        ray.gain.im,
        ray.aod_az,
        ray.aod_el,
        ray.aoa_az,
        ray.aoa_el,
        fmt_opt(ray.delay)
    );
    if let (Some(t), Some(r)) = (ray.tx_anchor, ray.rx_anchor) {
        for v in t.iter().chain(r.iter()) {
            write!(s, " {v}").unwrap();
        }
    }
    s
}

/// A parsed ray line: `(episode, scene, path index, ray)`.
pub type RayRecord = (u64, u64, usize, RayPath);

/// Parses one ray line. Errors carry a message only; callers add file/line.
pub fn parse_ray_line(line: &str) -> Result<RayRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 10 && fields.len() != 16 {
        return Err(format!("expected 10 or 16 fields, found {}", fields.len()));
    }
    let int = |i: usize, name: &str| -> Result<u64, String> {
        fields[i]
            .parse::<u64>()
            .map_err(|_| format!("field {} ({name}): not an integer: {:?}", i + 1, fields[i]))
    };
    let num = |i: usize, name: &str| -> Result<f64, String> {
        let v = fields[i]
            .parse::<f64>()
            .map_err(|_| format!("field {} ({name}): not a number: {:?}", i + 1, fields[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("field {} ({name}): not finite", i + 1))
        }
    };
    let delay = if fields[9] == "-" { None } else { Some(num(9, "delay")?) };
    let mut ray = RayPath::new(
        Complex64::new(num(3, "gain_re")?, num(4, "gain_im")?),
        num(5, "aod_az")?,
        num(6, "aod_el")?,
        num(7, "aoa_az")?,
        num(8, "aoa_el")?,
    );
    ray.delay = delay;
    if fields.len() == 16 {
        let a: Vec<f64> = (10..16).map(|i| num(i, "anchor")).collect::<Result<_, _>>()?;
        ray = ray.with_anchors([a[0], a[1], a[2]], [a[3], a[4], a[5]]);
    }
    Ok((int(0, "episode")?, int(1, "scene")?, int(2, "path")? as usize, ray))
}

/// Reads every ray record of a ray file, in file order.
pub fn read_ray_file(path: &Path) -> Result<Vec<RayRecord>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(parse_ray_line(t).map_err(|m| parse_err(path, i + 1, m))?);
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_episode(root: &Path, ep: &Episode) -> Result<(), DatasetError> {
    let dir = episode_dir(root, ep.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let rec = EpisodeRecord {
        id: ep.id,
        sampling_interval: ep.sampling_interval,
        kind: ep.kind,
        start_time: ep.start_time,
    };
    let toml = toml::to_string(&rec).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    write_file(&dir.join(EPISODE_FILE), toml.as_bytes())?;

    let mut scenes = String::new();
    let mut rays = String::from(RAYS_HEADER);
    rays.push('\n');
    for sc in &ep.scenes {
        let rec = SceneRecord {
            index: sc.index,
            tx_pose: sc.tx_pose,
            rx_pose: sc.rx_pose,
            features: sc.features.clone(),
        };
        scenes.push_str(&serde_json::to_string(&rec).map_err(|e| DatasetError::Invalid(e.to_string()))?);
        scenes.push('\n');
        for (p, ray) in sc.rays.iter().enumerate() {
            rays.push_str(&format_ray_line(ep.id, sc.index, p, ray));
            rays.push('\n');
        }
    }
    write_file(&dir.join(SCENES_FILE), scenes.as_bytes())?;
    write_file(&dir.join(RAYS_FILE), rays.as_bytes())
}

/// Writes `manifest` and `episodes` under `root`. Output depends only on
/// the inputs; previously written episode directories under `root` are
/// removed first.
pub fn write_dataset(root: &Path, manifest: &DatasetManifest, episodes: &[Episode]) -> Result<(), DatasetError> {
    if episodes.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    manifest.validate()?;
    let mut ids = std::collections::BTreeSet::new();
    for ep in episodes {
        if !ids.insert(ep.id) {
            return Err(DatasetError::Invalid(format!("duplicate episode id {}", ep.id)));
        }
        if let Some(v) = validate_episode(ep).into_iter().find(|v| !v.is_flag()) {
            return Err(DatasetError::Invalid(format!(
                "episode {} scene {:?}: {} ({})",
                ep.id, v.scene, v.code, v.detail
            )));
        }
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with("episode_") && entry.path().is_dir() {
            fs::remove_dir_all(entry.path()).map_err(io_err(&entry.path()))?;
        }
    }
    let toml = toml::to_string(manifest).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    write_file(&root.join(MANIFEST_FILE), toml.as_bytes())?;
    episodes.iter().try_for_each(|ep| write_episode(root, ep))
}

fn read_manifest(root: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(DatasetError::ManifestMissing(path));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    // check the version before the full schema so old layouts fail clearly
    let raw: toml::Table = toml::from_str(&text).map_err(|e| parse_err(&path, 0, e.to_string()))?;
    let found = raw.get("format_version").and_then(|v| v.as_str()).unwrap_or("");
    if found != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: found.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| parse_err(&path, 0, e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

fn read_episode(dir: &Path) -> Result<Episode, DatasetError> {
    let epath = dir.join(EPISODE_FILE);
    let text = fs::read_to_string(&epath).map_err(io_err(&epath))?;
    let rec: EpisodeRecord = toml::from_str(&text).map_err(|e| parse_err(&epath, 0, e.to_string()))?;

    let spath = dir.join(SCENES_FILE);
    let text = fs::read_to_string(&spath).map_err(io_err(&spath))?;
    let mut scenes = Vec::new();
    let mut by_index = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sr: SceneRecord = serde_json::from_str(line).map_err(|e| parse_err(&spath, i + 1, e.to_string()))?;
        if by_index.insert(sr.index, scenes.len()).is_some() {
            return Err(parse_err(&spath, i + 1, format!("duplicate scene index {}", sr.index)));
        }
        scenes.push(Scene {
            index: sr.index,
            rays: Vec::new(),
            tx_pose: sr.tx_pose,
            rx_pose: sr.rx_pose,
            features: sr.features,
        });
    }

    let rpath = dir.join(RAYS_FILE);
    let file = fs::File::open(&rpath).map_err(io_err(&rpath))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&rpath))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let (ep, sc, p, ray) = parse_ray_line(t).map_err(|m| parse_err(&rpath, lineno, m))?;
        if ep != rec.id {
            return Err(parse_err(
                &rpath,
                lineno,
                format!("episode {ep} in file of episode {}", rec.id),
            ));
        }
        let slot = *by_index
            .get(&sc)
            .ok_or_else(|| parse_err(&rpath, lineno, format!("unknown scene {sc}")))?;
        let scene = &mut scenes[slot];
        if p != scene.rays.len() {
            return Err(parse_err(
                &rpath,
                lineno,
                format!("path index {p} out of order (expected {})", scene.rays.len()),
            ));
        }
        scene.rays.push(ray);
    }
    Ok(Episode {
        id: rec.id,
        scenes,
        sampling_interval: rec.sampling_interval,
        kind: rec.kind,
        start_time: rec.start_time,
    })
}

/// Loads and validates a dataset. Episode-level problems end up in the
/// load report; structural problems are errors.
pub fn read_dataset(root: &Path) -> Result<LoadedDataset, DatasetError> {
    let manifest = read_manifest(root)?;
    let mut dirs: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_prefix("episode_").and_then(|s| s.parse::<u64>().ok()) {
            if entry.path().is_dir() {
                dirs.push((id, entry.path()));
            }
        }
    }
    dirs.sort();
    let episodes: Vec<Episode> = dirs
        .par_iter()
        .map(|(_, d)| read_episode(d))
        .collect::<Result<_, _>>()?;
    if episodes.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }

    let mut report = LoadReport::default();
    for ep in &episodes {
        report
            .violations
            .extend(validate_episode(ep).into_iter().map(|v| (ep.id, v)));
    }
    if manifest.episodes != episodes.len() {
        report.notes.push(format!(
            "manifest lists {} episodes, found {}",
            manifest.episodes,
            episodes.len()
        ));
    }
    if let Some(ep) = episodes.iter().find(|e| e.scenes.len() > manifest.scenes_per_episode) {
        report.notes.push(format!(
            "episode {} has {} scenes, manifest allows {}",
            ep.id,
            ep.scenes.len(),
            manifest.scenes_per_episode
        ));
    }
    if let Some(v) = manifest.valid_channels {
        let found = episodes
            .iter()
            .flat_map(|e| &e.scenes)
            .filter(|s| s.has_channel())
            .count();
        if v != found {
            report
                .notes
                .push(format!("manifest lists {v} valid channels, found {found}"));
        }
    }
    Ok(LoadedDataset {
        manifest,
        episodes,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    Complex64,
    Complex128,
}

impl Dtype {
    /// Bytes per complex value.
    pub fn width(&self) -> usize {
        match self {
            Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorOptions {
    pub regime: Regime,
    pub subcarriers: Subcarriers,
    pub spreading: Spreading,
    pub dtype: Dtype,
}

impl TensorOptions {
    pub fn narrowband(regime: Regime) -> Self {
        TensorOptions {
            regime,
            subcarriers: Subcarriers::narrowband(),
            spreading: Spreading::None,
            dtype: Dtype::Complex64,
        }
    }
}

/// Self-describing header of a tensor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub format: String,
    /// `[E, S, K, N_rx, N_tx]`.
    pub shape: [usize; 5],
    pub dtype: Dtype,
    pub regime: Regime,
    pub spreading: Spreading,
    pub subcarrier_spacing: f64,
    pub episode_ids: Vec<u64>,
    pub layout: String,
    pub toolkit_version: String,
}

impl TensorHeader {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn mask_len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }
}

/// Channel tensor read back from disk. Values are widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub header: TensorHeader,
    /// Bytes of header region: magic, length, JSON, mask.
    pub header_bytes: usize,
    pub mask: Vec<bool>,
    pub data: Vec<Complex64>,
}

impl ChannelTensor {
    /// Row-major index of `(episode slot, scene slot, k, m, n)`.
    pub fn index(&self, e: usize, s: usize, k: usize, m: usize, n: usize) -> usize {
        let [_, ss, kk, nr, nt] = self.header.shape;
        (((e * ss + s) * kk + k) * nr + m) * nt + n
    }
}

/// Synthesizes every scene under `opts` and writes the tensor to `path`.
/// Scenes without rays (and padding of shorter episodes) are stored as zero
/// blocks with mask 0. Returns the header that was written.
pub fn export_channel_tensor(
    path: &Path,
    episodes: &[Episode],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    opts: &TensorOptions,
) -> Result<TensorHeader, DatasetError> {
    let bytes = channel_tensor_bytes(episodes, tx, rx, opts)?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes.1).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(bytes.0)
}

/// Serialized tensor file contents, without touching the filesystem.
pub fn channel_tensor_bytes(
    episodes: &[Episode],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    opts: &TensorOptions,
) -> Result<(TensorHeader, Vec<u8>), DatasetError> {
    let t = synthesize_tensor(episodes, tx, rx, opts)?;
    let bytes = t.encode()?;
    Ok((t.header, bytes))
}

/// Synthesized channels ahead of serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedTensor {
    pub header: TensorHeader,
    /// One `K * N_rx * N_tx` block per `(episode, scene)` slot; `None` where
    /// the scene has no channel or the episode is shorter.
    pub blocks: Vec<Option<Vec<Complex64>>>,
}

impl SynthesizedTensor {
    pub fn valid_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_some()).count()
    }

    /// File contents: magic, header length, JSON header, mask, payload.
    pub fn encode(&self) -> Result<Vec<u8>, DatasetError> {
        let header = &self.header;
        let [_, _, k, nr, nt] = header.shape;
        let json = serde_json::to_vec(header).map_err(|e| DatasetError::Invalid(e.to_string()))?;
        let block_len = k * nr * nt;
        let width = header.dtype.width();
        let mut out = Vec::with_capacity(16 + json.len() + self.blocks.len() + header.element_count() * width);
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend(self.blocks.iter().map(|b| u8::from(b.is_some())));
        let zero = vec![Complex64::new(0.0, 0.0); block_len];
        for block in &self.blocks {
            for z in block.as_ref().unwrap_or(&zero) {
                match header.dtype {
                    Dtype::Complex64 => {
                        out.extend_from_slice(&(z.re as f32).to_le_bytes());
                        out.extend_from_slice(&(z.im as f32).to_le_bytes());
                    }
                    Dtype::Complex128 => {
                        out.extend_from_slice(&z.re.to_le_bytes());
                        out.extend_from_slice(&z.im.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Synthesizes every scene under `opts`, in parallel across scenes.
pub fn synthesize_tensor(
    episodes: &[Episode],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    opts: &TensorOptions,
) -> Result<SynthesizedTensor, DatasetError> {
    if episodes.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let e = episodes.len();
    let s = episodes.iter().map(|ep| ep.scenes.len()).max().unwrap_or(0);
    let k = opts.subcarriers.count;
    let (nr, nt) = (rx.n_elements(), tx.n_elements());
    let header = TensorHeader {
        format: TENSOR_FORMAT.to_string(),
        shape: [e, s, k, nr, nt],
        dtype: opts.dtype,
        regime: opts.regime,
        spreading: opts.spreading,
        subcarrier_spacing: if k > 1 { opts.subcarriers.spacing } else { 0.0 },
        episode_ids: episodes.iter().map(|ep| ep.id).collect(),
        layout: "row-major [episode, scene, subcarrier, rx, tx]; interleaved re/im; little-endian".into(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
    };

    let jobs: Vec<(usize, usize, &Episode, &Scene)> = episodes
        .iter()
        .enumerate()
        .flat_map(|(ei, ep)| ep.scenes.iter().enumerate().map(move |(si, sc)| (ei, si, ep, sc)))
        .collect();
    let done: Vec<(usize, Option<Vec<Complex64>>)> = jobs
        .par_iter()
        .map(|&(ei, si, ep, sc)| {
            let slot = ei * s + si;
            if !sc.has_channel() {
                return Ok((slot, None));
            }
            let set =
                synthesize_scene(sc, tx, rx, opts.regime, opts.subcarriers, opts.spreading).map_err(|source| {
                    DatasetError::Synthesis {
                        episode: ep.id,
                        scene: sc.index,
                        source,
                    }
                })?;
            let mut block = Vec::with_capacity(k * nr * nt);
            for h in set.subcarriers() {
                let m = h.as_matrix();
                for r in 0..nr {
                    for c in 0..nt {
                        block.push(m[(r, c)]);
                    }
                }
            }
            Ok((slot, Some(block)))
        })
        .collect::<Result<_, DatasetError>>()?;
    let mut blocks = vec![None; e * s];
    for (slot, block) in done {
        blocks[slot] = block;
    }
    Ok(SynthesizedTensor { header, blocks })
}

/// Reads a tensor file written by [`export_channel_tensor`].
pub fn read_channel_tensor(path: &Path) -> Result<ChannelTensor, DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 16 || &bytes[..8] != TENSOR_MAGIC {
        return Err(DatasetError::Tensor("bad magic".into()));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let json_end = 16usize
        .checked_add(json_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| DatasetError::Tensor("truncated header".into()))?;
    let header: TensorHeader =
        serde_json::from_slice(&bytes[16..json_end]).map_err(|e| DatasetError::Tensor(e.to_string()))?;
    if header.format != TENSOR_FORMAT {
        return Err(DatasetError::VersionMismatch {
            found: header.format.clone(),
            expected: TENSOR_FORMAT.to_string(),
        });
    }
    let header_bytes = json_end + header.mask_len();
    let expected = header_bytes + header.element_count() * header.dtype.width();
    if bytes.len() != expected {
        return Err(DatasetError::Tensor(format!(
            "file has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mask = bytes[json_end..header_bytes].iter().map(|&b| b != 0).collect();
    let payload = &bytes[header_bytes..];
    let data = match header.dtype {
        Dtype::Complex64 => payload
            .chunks_exact(8)
            .map(|c| {
                Complex64::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
                )
            })
            .collect(),
        Dtype::Complex128 => payload
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect(),
    };
    Ok(ChannelTensor {
        header,
        header_bytes,
        mask,
        data,
    })
}

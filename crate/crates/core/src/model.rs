//! Shared domain types: rays, arrays, poses, channels and the episodic
//! dataset structure, plus the invariant checks every other module relies on.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

/// Cartesian point in meters.
pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dataset contains no episodes")]
    EmptyDataset,
    #[error("invalid array configuration: {0}")]
    InvalidArray(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::EmptyDataset => "empty_dataset",
            ModelError::InvalidArray(_) => "invalid_array",
            ModelError::InvalidChannel(_) => "invalid_channel",
        }
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// One multipath component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    /// Complex linear amplitude.
    pub gain: Complex64,
    pub aod_az: f64,
    pub aod_el: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    /// Propagation delay in seconds. Absent when the source did not report it.
    pub delay: Option<f64>,
    /// First interaction point seen from the transmitter.
    pub tx_anchor: Option<Point3>,
    /// Last interaction point seen from the receiver.
    pub rx_anchor: Option<Point3>,
}

impl RayPath {
    pub fn new(gain: Complex64, aod_az: f64, aod_el: f64, aoa_az: f64, aoa_el: f64) -> Self {
        RayPath {
            gain,
            aod_az,
            aod_el,
            aoa_az,
            aoa_el,
            delay: None,
            tx_anchor: None,
            rx_anchor: None,
        }
    }

    pub fn with_delay(mut self, delay: f64) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn with_anchors(mut self, tx_anchor: Point3, rx_anchor: Point3) -> Self {
        self.tx_anchor = Some(tx_anchor);
        self.rx_anchor = Some(rx_anchor);
        self
    }

    pub fn has_anchors(&self) -> bool {
        self.tx_anchor.is_some() && self.rx_anchor.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrayKind {
    /// Uniform linear array along the local x axis.
    Ula { elements: usize },
    /// Uniform planar array: columns along local x, rows along local y.
    Upa { rows: usize, cols: usize },
}

/// Antenna array geometry. Element `r * cols + c` of a UPA sits at local
/// offset `(c * spacing, r * spacing)`; element 0 is the array reference
/// point and coincides with the mounting pose position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    #[serde(flatten)]
    pub kind: ArrayKind,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
}

impl ArrayConfig {
    pub fn new(kind: ArrayKind, spacing: f64, carrier_frequency: f64) -> Result<Self, ModelError> {
        let cfg = ArrayConfig {
            kind,
            spacing,
            carrier_frequency,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Half-wavelength ULA.
    pub fn ula(elements: usize, carrier_frequency: f64) -> Result<Self, ModelError> {
        let spacing = SPEED_OF_LIGHT / carrier_frequency / 2.0;
        Self::new(ArrayKind::Ula { elements }, spacing, carrier_frequency)
    }

    /// Half-wavelength UPA.
    pub fn upa(rows: usize, cols: usize, carrier_frequency: f64) -> Result<Self, ModelError> {
        let spacing = SPEED_OF_LIGHT / carrier_frequency / 2.0;
        Self::new(ArrayKind::Upa { rows, cols }, spacing, carrier_frequency)
    }

    pub fn with_spacing(self, spacing: f64) -> Result<Self, ModelError> {
        Self::new(self.kind, spacing, self.carrier_frequency)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = match self.kind {
            ArrayKind::Ula { elements } => elements,
            ArrayKind::Upa { rows, cols } => rows.min(cols),
        };
        if n < 1 {
            return Err(ModelError::InvalidArray("element count must be >= 1".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(ModelError::InvalidArray(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !(self.carrier_frequency.is_finite() && self.carrier_frequency > 0.0) {
            return Err(ModelError::InvalidArray(format!(
                "carrier frequency must be positive, got {}",
                self.carrier_frequency
            )));
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        match self.kind {
            ArrayKind::Ula { elements } => elements,
            ArrayKind::Upa { rows, cols } => rows * cols,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Element offsets `(x, y)` in the array's local frame, meters.
    pub fn local_offsets(&self) -> Vec<[f64; 2]> {
        let d = self.spacing;
        match self.kind {
            ArrayKind::Ula { elements } => (0..elements).map(|n| [n as f64 * d, 0.0]).collect(),
            ArrayKind::Upa { rows, cols } => (0..rows)
                .flat_map(|r| (0..cols).map(move |c| [c as f64 * d, r as f64 * d]))
                .collect(),
        }
    }

    /// Global element positions for an array mounted at `pose`.
    pub fn element_positions(&self, pose: &Pose) -> Vec<Point3> {
        let (s, c) = pose.heading.to_radians().sin_cos();
        let p = pose.position;
        self.local_offsets()
            .into_iter()
            .map(|[x, y]| [p[0] + c * x - s * y, p[1] + s * x + c * y, p[2]])
            .collect()
    }

    /// Centroid of the element positions.
    pub fn phase_center(&self, pose: &Pose) -> Point3 {
        let pts = self.element_positions(pose);
        let n = pts.len() as f64;
        let mut acc = [0.0; 3];
        for p in &pts {
            for i in 0..3 {
                acc[i] += p[i];
            }
        }
        acc.map(|v| v / n)
    }
}

/// Mounting pose: position plus yaw. Pitch and roll are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3,
    /// Degrees counterclockwise from +x, in `[0, 360)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Point3, heading: f64) -> Self {
        Pose {
            position,
            heading: wrap_degrees(heading),
        }
    }

    pub fn origin() -> Self {
        Pose::new([0.0; 3], 0.0)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::origin()
    }
}

/// Complex `N_rx x N_tx` channel with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(DMatrix<Complex64>);

impl ChannelMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, ModelError> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(ModelError::InvalidChannel("empty matrix".into()));
        }
        if entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ModelError::InvalidChannel("non-finite entry".into()));
        }
        Ok(ChannelMatrix(entries))
    }

    pub fn zeros(n_rx: usize, n_tx: usize) -> Self {
        ChannelMatrix(DMatrix::zeros(n_rx, n_tx))
    }

    pub fn n_rx(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Per-subcarrier channels of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    subcarriers: Vec<ChannelMatrix>,
    subcarrier_spacing: Option<f64>,
}

impl ChannelSet {
    pub fn narrowband(h: ChannelMatrix) -> Self {
        ChannelSet {
            subcarriers: vec![h],
            subcarrier_spacing: None,
        }
    }

    pub fn new(subcarriers: Vec<ChannelMatrix>, subcarrier_spacing: Option<f64>) -> Result<Self, ModelError> {
        let first = subcarriers
            .first()
            .ok_or_else(|| ModelError::InvalidChannel("channel set needs K >= 1".into()))?;
        if subcarriers.iter().any(|h| h.shape() != first.shape()) {
            return Err(ModelError::InvalidChannel("subcarrier shapes differ".into()));
        }
        if (subcarriers.len() > 1) != subcarrier_spacing.is_some() {
            return Err(ModelError::InvalidChannel(
                "subcarrier spacing must be present iff K > 1".into(),
            ));
        }
        Ok(ChannelSet {
            subcarriers,
            subcarrier_spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subcarriers.is_empty()
    }

    pub fn subcarriers(&self) -> &[ChannelMatrix] {
        &self.subcarriers
    }

    pub fn subcarrier_spacing(&self) -> Option<f64> {
        self.subcarrier_spacing
    }

    pub fn shape(&self) -> (usize, usize) {
        self.subcarriers[0].shape()
    }
}

/// Opaque context record attached to a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Vector(Vec<f64>),
    Text(String),
}

/// Snapshot of the world at one sampling instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub index: u64,
    /// Empty when the scene has no valid channel.
    pub rays: Vec<RayPath>,
    pub tx_pose: Pose,
    pub rx_pose: Pose,
    #[serde(default)]
    pub features: BTreeMap<String, FeatureValue>,
}

impl Scene {
    pub fn new(index: u64, rays: Vec<RayPath>, tx_pose: Pose, rx_pose: Pose) -> Self {
        let mut features = BTreeMap::new();
        features.insert(
            "rx_position".to_string(),
            FeatureValue::Vector(rx_pose.position.to_vec()),
        );
        Scene {
            index,
            rays,
            tx_pose,
            rx_pose,
            features,
        }
    }

    pub fn has_channel(&self) -> bool {
        !self.rays.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeKind {
    Trajectory,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: u64,
    pub scenes: Vec<Scene>,
    /// Time between consecutive scenes, seconds.
    pub sampling_interval: f64,
    pub kind: EpisodeKind,
    /// Episode start on the dataset clock, seconds.
    #[serde(default)]
    pub start_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    AngleOutOfRange,
    NegativeDelay,
    NonFiniteValue,
    UnpairedAnchor,
    HeadingOutOfRange,
    /// Informational: the scene carries no rays.
    NoValidChannel,
    ScenesOutOfOrder,
    NonPositiveInterval,
    SnapshotLength,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::AngleOutOfRange => "angle_out_of_range",
            ViolationCode::NegativeDelay => "negative_delay",
            ViolationCode::NonFiniteValue => "non_finite_value",
            ViolationCode::UnpairedAnchor => "unpaired_anchor",
            ViolationCode::HeadingOutOfRange => "heading_out_of_range",
            ViolationCode::NoValidChannel => "no_valid_channel",
            ViolationCode::ScenesOutOfOrder => "scenes_out_of_order",
            ViolationCode::NonPositiveInterval => "non_positive_interval",
            ViolationCode::SnapshotLength => "snapshot_length",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Scene index, for episode-level checks.
    pub scene: Option<u64>,
    /// Ray position within the scene, for per-ray checks.
    pub ray: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Violation {
            code,
            scene: None,
            ray: None,
            detail: detail.into(),
        }
    }

    fn on_ray(mut self, ray: usize) -> Self {
        self.ray = Some(ray);
        self
    }

    /// Flags describe the data but do not make it invalid.
    pub fn is_flag(&self) -> bool {
        self.code == ViolationCode::NoValidChannel
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code)?;
        if let Some(s) = self.scene {
            write!(f, " scene {s}")?;
        }
        if let Some(r) = self.ray {
            write!(f, " ray {r}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

fn check_azimuth(out: &mut Vec<Violation>, ray: usize, name: &str, v: f64) {
    if !v.is_finite() {
        out.push(Violation::new(ViolationCode::NonFiniteValue, format!("{name} = {v}")).on_ray(ray));
    } else if !(0.0..360.0).contains(&v) {
        out.push(Violation::new(ViolationCode::AngleOutOfRange, format!("{name} = {v} not in [0, 360)")).on_ray(ray));
    }
}

fn check_elevation(out: &mut Vec<Violation>, ray: usize, name: &str, v: f64) {
    if !v.is_finite() {
        out.push(Violation::new(ViolationCode::NonFiniteValue, format!("{name} = {v}")).on_ray(ray));
    } else if !(-90.0..=90.0).contains(&v) {
        out.push(Violation::new(ViolationCode::AngleOutOfRange, format!("{name} = {v} not in [-90, 90]")).on_ray(ray));
    }
}

fn check_pose(out: &mut Vec<Violation>, name: &str, pose: &Pose) {
    if pose.position.iter().any(|v| !v.is_finite()) || !pose.heading.is_finite() {
        out.push(Violation::new(ViolationCode::NonFiniteValue, format!("{name} pose")));
    } else if !(0.0..360.0).contains(&pose.heading) {
        out.push(Violation::new(
            ViolationCode::HeadingOutOfRange,
            format!("{name} heading = {} not in [0, 360)", pose.heading),
        ));
    }
}

/// Every invariant violation of `scene`. An empty result means valid; a
/// scene with no rays is valid but carries a `no_valid_channel` flag.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    check_pose(&mut out, "tx", &scene.tx_pose);
    check_pose(&mut out, "rx", &scene.rx_pose);
    if scene.rays.is_empty() {
        out.push(Violation::new(ViolationCode::NoValidChannel, "scene has no rays"));
    }
    for (i, ray) in scene.rays.iter().enumerate() {
        if !(ray.gain.re.is_finite() && ray.gain.im.is_finite()) {
            out.push(Violation::new(ViolationCode::NonFiniteValue, "gain").on_ray(i));
        }
        check_azimuth(&mut out, i, "aod_az", ray.aod_az);
        check_elevation(&mut out, i, "aod_el", ray.aod_el);
        check_azimuth(&mut out, i, "aoa_az", ray.aoa_az);
        check_elevation(&mut out, i, "aoa_el", ray.aoa_el);
        if let Some(d) = ray.delay {
            if !d.is_finite() {
                out.push(Violation::new(ViolationCode::NonFiniteValue, "delay").on_ray(i));
            } else if d < 0.0 {
                out.push(Violation::new(ViolationCode::NegativeDelay, format!("delay = {d}")).on_ray(i));
            }
        }
        if ray.tx_anchor.is_some() != ray.rx_anchor.is_some() {
            out.push(Violation::new(ViolationCode::UnpairedAnchor, "only one anchor present").on_ray(i));
        }
        for a in ray.tx_anchor.iter().chain(ray.rx_anchor.iter()) {
            if a.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new(ViolationCode::NonFiniteValue, "anchor").on_ray(i));
            }
        }
    }
    out
}

/// Scene-level violations of every scene plus episode-level checks.
pub fn validate_episode(episode: &Episode) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(episode.sampling_interval.is_finite() && episode.sampling_interval > 0.0) {
        out.push(Violation::new(
            ViolationCode::NonPositiveInterval,
            format!("sampling interval = {}", episode.sampling_interval),
        ));
    }
    if episode.kind == EpisodeKind::Snapshot && episode.scenes.len() != 1 {
        out.push(Violation::new(
            ViolationCode::SnapshotLength,
            format!("snapshot episode has {} scenes", episode.scenes.len()),
        ));
    }
    for pair in episode.scenes.windows(2) {
        if pair[1].index <= pair[0].index {
            let mut v = Violation::new(
                ViolationCode::ScenesOutOfOrder,
                format!("scene {} follows scene {}", pair[1].index, pair[0].index),
            );
            v.scene = Some(pair[1].index);
            out.push(v);
        }
    }
    for scene in &episode.scenes {
        for mut v in validate_scene(scene) {
            v.scene = Some(scene.index);
            out.push(v);
        }
    }
    out
}

/// Inclusive range of observed values; `min == max` when uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Span<T> {
    fn of(mut values: impl Iterator<Item = T>) -> Option<Self> {
        let first = values.next()?;
        Some(values.fold(Span { min: first, max: first }, |s, v| Span {
            min: if v < s.min { v } else { s.min },
            max: if v > s.max { v } else { s.max },
        }))
    }

    pub fn is_uniform(&self) -> bool {
        self.min == self.max
    }
}

impl<T: fmt::Display + PartialOrd + Copy> fmt::Display for Span<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_uniform() {
            write!(f, "{}", self.min)
        } else {
            write!(f, "{}..{}", self.min, self.max)
        }
    }
}

/// Dataset characteristics in the layout of the dataset catalogue table:
/// episodes, scenes per episode, valid channels, scene spacing and
/// episode spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub episodes: usize,
    pub scenes_per_episode: Span<usize>,
    pub total_scenes: usize,
    pub valid_channels: usize,
    /// Seconds.
    pub sampling_interval: Span<f64>,
    /// Seconds between consecutive episode starts, when start times are known.
    pub episode_spacing: Option<Span<f64>>,
}

pub fn dataset_summary(episodes: &[Episode]) -> Result<SummaryRecord, ModelError> {
    if episodes.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let scenes_per_episode = Span::of(episodes.iter().map(|e| e.scenes.len())).unwrap();
    let sampling_interval = Span::of(episodes.iter().map(|e| e.sampling_interval)).unwrap();
    let total_scenes = episodes.iter().map(|e| e.scenes.len()).sum();
    let valid_channels = episodes
        .iter()
        .flat_map(|e| e.scenes.iter())
        .filter(|s| s.has_channel())
        .count();
    let starts: Option<Vec<f64>> = episodes.iter().map(|e| e.start_time).collect();
    let episode_spacing = starts.and_then(|s| Span::of(s.windows(2).map(|w| w[1] - w[0])));
    Ok(SummaryRecord {
        episodes: episodes.len(),
        scenes_per_episode,
        total_scenes,
        valid_channels,
        sampling_interval,
        episode_spacing,
    })
}

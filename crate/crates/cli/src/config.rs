//! Experiment configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use raymimo::beams::{DEFAULT_K_NN, DEFAULT_RX_BEAMS, DEFAULT_TRAIN_FRACTION, DEFAULT_TX_BEAMS};
use raymimo::dataset::{Dtype, ReceiverType};
use raymimo::model::{ArrayConfig, ArrayKind, EpisodeKind, Pose};
use raymimo::rdm::{ElevationMode, RdmGeoSpec, Region, Variant};
use raymimo::synthesis::{Regime, Spreading, Subcarriers};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub source: SourceSection,
    pub arrays: ArraysSection,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub beams: BeamsSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    /// Hz.
    pub carrier_frequency: f64,
    pub receiver_type: ReceiverType,
    pub receivers: Option<u32>,
    pub episodes: usize,
    pub scenes_per_episode: usize,
    /// Seconds between scenes.
    pub sampling_interval: f64,
    /// Seconds between episode starts.
    #[serde(default)]
    pub episode_spacing: f64,
    #[serde(default = "trajectory")]
    pub kind: EpisodeKind,
    pub seed: u64,
}

fn trajectory() -> EpisodeKind {
    EpisodeKind::Trajectory
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSection {
    Rdm {
        variant: Variant,
        paths: usize,
        #[serde(default)]
        nominal_angles: Vec<[f64; 4]>,
        spread: Option<f64>,
        #[serde(default)]
        elevation: ElevationMode,
        max_delay: Option<f64>,
        rx_region: Option<Region>,
        tx_pose: Option<Pose>,
        #[serde(default)]
        rx_heading: f64,
    },
    Rays {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default)]
        tx_pose: Pose,
        #[serde(default)]
        rx_pose: Pose,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysSection {
    pub tx: ArraySpec,
    pub rx: ArraySpec,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ArraySpec {
    #[serde(flatten)]
    pub kind: ArrayKind,
    /// Meters; half a wavelength when absent.
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(default = "planar")]
    pub regime: Regime,
    #[serde(default = "one")]
    pub subcarriers: usize,
    /// Hz.
    #[serde(default)]
    pub subcarrier_spacing: f64,
    #[serde(default)]
    pub dtype: Dtype,
    #[serde(default)]
    pub spreading: Spreading,
    /// Meters from the array phase centers at which `generate` places
    /// interaction points along each ray.
    pub anchor_distance: Option<f64>,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            regime: Regime::Planar,
            subcarriers: 1,
            subcarrier_spacing: 0.0,
            dtype: Dtype::default(),
            spreading: Spreading::None,
            anchor_distance: None,
        }
    }
}

fn planar() -> Regime {
    Regime::Planar
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamsSection {
    pub tx_beams: usize,
    pub rx_beams: usize,
    pub k_nn: usize,
    pub train_fraction: f64,
    pub k_values: Vec<usize>,
}

impl Default for BeamsSection {
    fn default() -> Self {
        BeamsSection {
            tx_beams: DEFAULT_TX_BEAMS,
            rx_beams: DEFAULT_RX_BEAMS,
            k_nn: DEFAULT_K_NN,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            k_values: vec![1, 2, 3, 4, 5, 10, 20, 50, 100, 256],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub snr_grid_db: Vec<f64>,
    /// Pilot count; four per transmit antenna when absent.
    pub pilots: Option<usize>,
    pub trials: usize,
    /// Use at most this many valid channels, in dataset order.
    pub max_channels: Option<usize>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            pilots: None,
            trials: 1000,
            max_channels: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Timed repetitions per regime; the median is reported.
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { repeats: 3 }
    }
}

/// A parsed config plus what provenance needs to know about it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub sha256: String,
    pub dir: PathBuf,
}

fn field(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = fs::read(path).map_err(|e| field("<file>", format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| field("<file>", "config is not UTF-8"))?;
    let de = toml::Deserializer::parse(&text).map_err(|e| field("<file>", e.to_string()))?;
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        field(&p, e.into_inner().message().to_string())
    })?;
    config.validate()?;
    Ok(Loaded {
        config,
        sha256: hex::encode(Sha256::digest(&bytes)),
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(path, format!("must be > 0, got {v}")))
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        if d.name.trim().is_empty() {
            return Err(field("dataset.name", "must not be empty"));
        }
        positive("dataset.carrier_frequency", d.carrier_frequency)?;
        positive("dataset.sampling_interval", d.sampling_interval)?;
        if !(d.episode_spacing.is_finite() && d.episode_spacing >= 0.0) {
            return Err(field("dataset.episode_spacing", "must be >= 0"));
        }
        if d.episodes < 1 {
            return Err(field("dataset.episodes", "must be >= 1"));
        }
        if d.scenes_per_episode < 1 {
            return Err(field("dataset.scenes_per_episode", "must be >= 1"));
        }
        if d.kind == EpisodeKind::Snapshot && d.scenes_per_episode != 1 {
            return Err(field(
                "dataset.scenes_per_episode",
                "snapshot episodes hold exactly one scene",
            ));
        }
        self.tx_array()?;
        self.rx_array()?;
        if let SourceSection::Rdm { .. } = self.source {
            self.rdm_spec()?.validate().map_err(|e| field("source", e.0))?;
        }
        let s = &self.synthesis;
        if s.subcarriers < 1 {
            return Err(field("synthesis.subcarriers", "must be >= 1"));
        }
        if s.subcarriers > 1 {
            positive("synthesis.subcarrier_spacing", s.subcarrier_spacing)?;
        }
        if let Some(a) = s.anchor_distance {
            positive("synthesis.anchor_distance", a)?;
        }
        let b = &self.beams;
        if b.tx_beams < 1 {
            return Err(field("beams.tx_beams", "must be >= 1"));
        }
        if b.rx_beams < 1 {
            return Err(field("beams.rx_beams", "must be >= 1"));
        }
        if b.k_nn < 1 {
            return Err(field("beams.k_nn", "must be >= 1"));
        }
        if !(b.train_fraction > 0.0 && b.train_fraction < 1.0) {
            return Err(field("beams.train_fraction", "must lie in (0, 1)"));
        }
        if b.k_values.is_empty() || b.k_values.contains(&0) {
            return Err(field("beams.k_values", "must be a non-empty list of positive integers"));
        }
        let e = &self.estimation;
        if e.snr_grid_db.is_empty() || e.snr_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(field(
                "estimation.snr_grid_db",
                "must be a non-empty list of finite values",
            ));
        }
        if e.trials < 1 {
            return Err(field("estimation.trials", "must be >= 1"));
        }
        if e.pilots == Some(0) {
            return Err(field("estimation.pilots", "must be >= 1"));
        }
        if e.max_channels == Some(0) {
            return Err(field("estimation.max_channels", "must be >= 1"));
        }
        if self.bench.repeats < 1 {
            return Err(field("bench.repeats", "must be >= 1"));
        }
        Ok(())
    }

    fn array(&self, path: &str, spec: &ArraySpec) -> Result<ArrayConfig, CliError> {
        let fc = self.dataset.carrier_frequency;
        let half = raymimo::SPEED_OF_LIGHT / fc / 2.0;
        ArrayConfig::new(spec.kind, spec.spacing.unwrap_or(half), fc).map_err(|e| field(path, e.to_string()))
    }

    pub fn tx_array(&self) -> Result<ArrayConfig, CliError> {
        self.array("arrays.tx", &self.arrays.tx)
    }

    pub fn rx_array(&self) -> Result<ArrayConfig, CliError> {
        self.array("arrays.rx", &self.arrays.rx)
    }

    pub fn rdm_spec(&self) -> Result<RdmGeoSpec, CliError> {
        let SourceSection::Rdm {
            variant,
            paths,
            nominal_angles,
            spread,
            elevation,
            max_delay,
            rx_region,
            tx_pose,
            rx_heading,
        } = &self.source
        else {
            return Err(field("source.kind", "not an rdm source"));
        };
        let base = RdmGeoSpec::hard(*paths, self.dataset.seed);
        Ok(RdmGeoSpec {
            variant: *variant,
            paths: *paths,
            nominal_angles: nominal_angles.clone(),
            spread: spread.unwrap_or(base.spread),
            elevation: *elevation,
            max_delay: max_delay.unwrap_or(base.max_delay),
            rx_region: rx_region.unwrap_or(base.rx_region),
            tx_pose: tx_pose
                .map(|p| Pose::new(p.position, p.heading))
                .unwrap_or(base.tx_pose),
            rx_heading: *rx_heading,
            ..base
        })
    }

    pub fn subcarriers(&self) -> Subcarriers {
        Subcarriers {
            count: self.synthesis.subcarriers,
            spacing: self.synthesis.subcarrier_spacing,
        }
    }
}

//! Random-parameter geometric scenes.
//!
//! `Hard` draws every angle uniformly over its full range; `Easy` jitters
//! per-path nominal angles by a uniform spread. Gains are i.i.d. CN(0, 1)
//! and delays uniform on `[0, max_delay]`. Scene `i` of a batch is drawn
//! from sub-stream `i` of the seed (see [`crate::rng`]), which makes batches
//! prefix-stable and lets them be generated in parallel.
//!
//! Per-path draw order: gain (re, im), aod_az, aod_el, aoa_az, aoa_el,
//! delay. The receiver position is drawn after all paths.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{wrap_degrees, Point3, Pose, RayPath, Scene};
use crate::rng::{complex_gaussian, substream, unit_uniform};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid random-scene spec: {0}")]
pub struct RdmError(pub String);

impl RdmError {
    pub fn code(&self) -> &'static str {
        "invalid_spec"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hard,
    Easy,
}

/// How `Hard` scenes treat elevations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElevationMode {
    /// `el = 180 u - 90` with `u` uniform on `[0, 1)`.
    #[default]
    Uniform,
    /// Azimuth-only randomization, elevations fixed at 0.
    Zero,
}

/// Axis-aligned box for receiver placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Point3,
    pub max: Point3,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            min: [0.0, 0.0, 1.5],
            max: [100.0, 100.0, 1.5],
        }
    }
}

fn default_spread() -> f64 {
    3.0
}

fn default_max_delay() -> f64 {
    100e-9
}

fn default_tx_pose() -> Pose {
    Pose::new([0.0, 0.0, 10.0], 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmGeoSpec {
    pub variant: Variant,
    /// Number of paths per scene.
    pub paths: usize,
    /// Per-path `[aod_az, aod_el, aoa_az, aoa_el]` in degrees (`Easy` only).
    #[serde(default)]
    pub nominal_angles: Vec<[f64; 4]>,
    /// Full width of the `Easy` jitter window, degrees.
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub elevation: ElevationMode,
    /// Seconds.
    #[serde(default = "default_max_delay")]
    pub max_delay: f64,
    pub seed: u64,
    #[serde(default)]
    pub rx_region: Region,
    #[serde(default = "default_tx_pose")]
    pub tx_pose: Pose,
    /// Receiver yaw, degrees.
    #[serde(default)]
    pub rx_heading: f64,
}

impl RdmGeoSpec {
    pub fn hard(paths: usize, seed: u64) -> Self {
        RdmGeoSpec {
            variant: Variant::Hard,
            paths,
            nominal_angles: Vec::new(),
            spread: default_spread(),
            elevation: ElevationMode::Uniform,
            max_delay: default_max_delay(),
            seed,
            rx_region: Region::default(),
            tx_pose: default_tx_pose(),
            rx_heading: 0.0,
        }
    }

    pub fn easy(nominal_angles: Vec<[f64; 4]>, seed: u64) -> Self {
        RdmGeoSpec {
            variant: Variant::Easy,
            paths: nominal_angles.len(),
            nominal_angles,
            ..Self::hard(0, seed)
        }
    }

    pub fn validate(&self) -> Result<(), RdmError> {
        if self.paths < 1 {
            return Err(RdmError("paths must be >= 1".into()));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(RdmError(format!("spread must be positive, got {}", self.spread)));
        }
        if !(self.max_delay.is_finite() && self.max_delay >= 0.0) {
            return Err(RdmError(format!("max_delay must be >= 0, got {}", self.max_delay)));
        }
        if (0..3).any(|i| {
            self.rx_region.min[i]
                .partial_cmp(&self.rx_region.max[i])
                .is_none_or(|o| o.is_gt())
        }) {
            return Err(RdmError("rx_region min must not exceed max".into()));
        }
        if self.variant == Variant::Easy {
            if self.nominal_angles.len() != self.paths {
                return Err(RdmError(format!(
                    "easy variant needs {} nominal angle tuples, got {}",
                    self.paths,
                    self.nominal_angles.len()
                )));
            }
            let half = self.spread / 2.0;
            for (i, a) in self.nominal_angles.iter().enumerate() {
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(RdmError(format!("nominal angles of path {i} are not finite")));
                }
                if a[1].abs() + half > 90.0 || a[3].abs() + half > 90.0 {
                    return Err(RdmError(format!(
                        "nominal elevations of path {i} leave [-90, 90] under the spread"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `lo + u * width`, kept strictly below `lo + width`.
fn uniform_window<R: Rng + ?Sized>(rng: &mut R, lo: f64, width: f64) -> f64 {
    let hi = lo + width;
    let x = lo + unit_uniform(rng) * width;
    if x >= hi {
        hi.next_down()
    } else {
        x
    }
}

fn draw_scene(spec: &RdmGeoSpec, index: u64) -> Scene {
    let mut rng = substream(spec.seed, index);
    let half = spec.spread / 2.0;
    let mut rays = Vec::with_capacity(spec.paths);
    for l in 0..spec.paths {
        let gain = complex_gaussian(&mut rng, 1.0);
        let [aod_az, aod_el, aoa_az, aoa_el] = match spec.variant {
            Variant::Hard => {
                let el = |rng: &mut _| match spec.elevation {
                    ElevationMode::Uniform => 180.0 * unit_uniform(rng) - 90.0,
                    ElevationMode::Zero => 0.0,
                };
                // draw order is part of the stream contract
                let aod_az = 360.0 * unit_uniform(&mut rng);
                let aod_el = el(&mut rng);
                let aoa_az = 360.0 * unit_uniform(&mut rng);
                let aoa_el = el(&mut rng);
                [wrap_degrees(aod_az), aod_el, wrap_degrees(aoa_az), aoa_el]
            }
            Variant::Easy => {
                let n = spec.nominal_angles[l];
                let aod_az = uniform_window(&mut rng, n[0] - half, spec.spread);
                let aod_el = uniform_window(&mut rng, n[1] - half, spec.spread);
                let aoa_az = uniform_window(&mut rng, n[2] - half, spec.spread);
                let aoa_el = uniform_window(&mut rng, n[3] - half, spec.spread);
                [wrap_degrees(aod_az), aod_el, wrap_degrees(aoa_az), aoa_el]
            }
        };
        let delay = unit_uniform(&mut rng) * spec.max_delay;
        rays.push(RayPath::new(gain, aod_az, aod_el, aoa_az, aoa_el).with_delay(delay));
    }
    let r = spec.rx_region;
    let position = [0, 1, 2].map(|i| r.min[i] + unit_uniform(&mut rng) * (r.max[i] - r.min[i]));
    Scene::new(index, rays, spec.tx_pose, Pose::new(position, spec.rx_heading))
}

/// One scene: the first scene of the seed's stream.
pub fn sample_rdm_scene(spec: &RdmGeoSpec) -> Result<Scene, RdmError> {
    spec.validate()?;
    Ok(draw_scene(spec, 0))
}

/// `n` scenes; element `i` depends only on `(seed, i)`.
pub fn sample_rdm_batch(spec: &RdmGeoSpec, n: usize) -> Result<Vec<Scene>, RdmError> {
    spec.validate()?;
    if n == 0 {
        return Err(RdmError("batch size must be >= 1".into()));
    }
    Ok((0..n as u64).into_par_iter().map(|i| draw_scene(spec, i)).collect())
}

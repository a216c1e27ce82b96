//! Channel synthesis from ray descriptions.
//!
//! The planar regime evaluates
//! `H = sqrt(N_rx N_tx) * sum_l alpha_l a_rx(aoa_l) a_tx(aod_l)^H`
//! with steering vectors from [`crate::geometry`]. The spherical regime
//! replaces the plane-wave phase with exact element-to-anchor distances.
//! Both accumulate paths with Neumaier compensation so the result is
//! insensitive to path order.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_pose, steering_vector};
use crate::model::{wrap_degrees, ArrayConfig, ChannelMatrix, ChannelSet, ModelError, Point3, Scene};
use crate::numeric::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("scene has no rays")]
    NoValidChannel,
    #[error("ray {ray} has no delay")]
    MissingDelay { ray: usize },
    #[error("ray {ray} has no interaction-point anchors")]
    MissingAnchor { ray: usize },
    #[error("ray {ray}: anchor coincides with an array element")]
    DegenerateGeometry { ray: usize },
    #[error("invalid subcarrier layout: {0}")]
    InvalidSubcarriers(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SynthesisError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthesisError::NoValidChannel => "no_valid_channel",
            SynthesisError::MissingDelay { .. } => "missing_delay",
            SynthesisError::MissingAnchor { .. } => "missing_anchor",
            SynthesisError::DegenerateGeometry { .. } => "degenerate_geometry",
            SynthesisError::InvalidSubcarriers(_) => "invalid_subcarriers",
            SynthesisError::Model(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Planar,
    Spherical,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Planar => "planar",
            Regime::Spherical => "spherical",
        }
    }
}

/// Amplitude-spreading exponent of the spherical regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spreading {
    /// Phase-only divergence from the planar model.
    #[default]
    None,
    /// Scale each element pair by `d_ref / (r + s)`.
    PathLength,
}

/// Subcarrier layout: `count` tones spaced `spacing` Hz, centered on the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subcarriers {
    pub count: usize,
    pub spacing: f64,
}

impl Subcarriers {
    pub fn narrowband() -> Self {
        Subcarriers { count: 1, spacing: 0.0 }
    }

    fn validate(&self) -> Result<(), SynthesisError> {
        if self.count == 0 {
            return Err(SynthesisError::InvalidSubcarriers("K must be >= 1".into()));
        }
        if self.count > 1 && !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(SynthesisError::InvalidSubcarriers(format!(
                "subcarrier spacing must be positive, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Baseband offset of tone `k`, Hz: `(k - (K - 1) / 2) * spacing`.
    pub fn offset(&self, k: usize) -> f64 {
        (k as f64 - (self.count as f64 - 1.0) / 2.0) * self.spacing
    }

    fn spacing_field(&self) -> Option<f64> {
        (self.count > 1).then_some(self.spacing)
    }
}

fn delay_rotation(offset: f64, delay: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * offset * delay)
}

fn delays(scene: &Scene) -> Result<Vec<f64>, SynthesisError> {
    scene
        .rays
        .iter()
        .enumerate()
        .map(|(i, r)| r.delay.ok_or(SynthesisError::MissingDelay { ray: i }))
        .collect()
}

struct PlanarTerms {
    rx: Vec<DVector<Complex64>>,
    tx_conj: Vec<DVector<Complex64>>,
}

impl PlanarTerms {
    fn new(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig) -> Self {
        PlanarTerms {
            rx: scene
                .rays
                .iter()
                .map(|r| steering_vector(rx, r.aoa_az, r.aoa_el).into_vector())
                .collect(),
            tx_conj: scene
                .rays
                .iter()
                .map(|r| steering_vector(tx, r.aod_az, r.aod_el).into_vector().map(|z| z.conj()))
                .collect(),
        }
    }

    fn combine(&self, weights: &[Complex64]) -> DMatrix<Complex64> {
        let nr = self.rx[0].len();
        let nt = self.tx_conj[0].len();
        DMatrix::from_fn(nr, nt, |m, n| {
            let mut acc = CompensatedSum::default();
            for (l, w) in weights.iter().enumerate() {
                acc.add(*w * self.rx[l][m] * self.tx_conj[l][n]);
            }
            acc.value()
        })
    }
}

fn array_gain(tx: &ArrayConfig, rx: &ArrayConfig) -> f64 {
    ((rx.n_elements() * tx.n_elements()) as f64).sqrt()
}

/// Narrowband planar-wave channel. Ray angles must already be in the array
/// frames (see [`crate::geometry::apply_pose`]).
pub fn geometric_channel(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig) -> Result<ChannelMatrix, SynthesisError> {
    if scene.rays.is_empty() {
        return Err(SynthesisError::NoValidChannel);
    }
    let g = array_gain(tx, rx);
    let weights: Vec<Complex64> = scene.rays.iter().map(|r| r.gain * g).collect();
    Ok(ChannelMatrix::new(PlanarTerms::new(scene, tx, rx).combine(&weights))?)
}

/// Per-subcarrier planar channels; path `l` on tone `k` is weighted by
/// `alpha_l * exp(-j 2 pi f_k tau_l)` with centered offsets `f_k`.
pub fn ofdm_channel(
    scene: &Scene,
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    subcarriers: Subcarriers,
) -> Result<ChannelSet, SynthesisError> {
    subcarriers.validate()?;
    if scene.rays.is_empty() {
        return Err(SynthesisError::NoValidChannel);
    }
    let taus = delays(scene)?;
    let g = array_gain(tx, rx);
    let terms = PlanarTerms::new(scene, tx, rx);
    let mut mats = Vec::with_capacity(subcarriers.count);
    for k in 0..subcarriers.count {
        let f = subcarriers.offset(k);
        let weights: Vec<Complex64> = scene
            .rays
            .iter()
            .zip(&taus)
            .map(|(r, &tau)| r.gain * g * delay_rotation(f, tau))
            .collect();
        mats.push(ChannelMatrix::new(terms.combine(&weights))?);
    }
    Ok(ChannelSet::new(mats, subcarriers.spacing_field())?)
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Per-path distances from each element to its anchor, relative to element 0.
struct SphericalTerms {
    /// `(s_n - s_0)` for every tx element.
    tx_excess: Vec<Vec<f64>>,
    /// `(r_m - r_0)` for every rx element.
    rx_excess: Vec<Vec<f64>>,
    /// `s_n` and `r_m` themselves, for amplitude spreading.
    tx_dist: Vec<Vec<f64>>,
    rx_dist: Vec<Vec<f64>>,
    wavelength: f64,
}

impl SphericalTerms {
    fn new(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig) -> Result<Self, SynthesisError> {
        if scene.rays.is_empty() {
            return Err(SynthesisError::NoValidChannel);
        }
        let tx_pos = tx.element_positions(&scene.tx_pose);
        let rx_pos = rx.element_positions(&scene.rx_pose);
        let wavelength = rx.wavelength();
        let tol = 1e-9 * wavelength;
        let mut terms = SphericalTerms {
            tx_excess: Vec::new(),
            rx_excess: Vec::new(),
            tx_dist: Vec::new(),
            rx_dist: Vec::new(),
            wavelength,
        };
        for (i, ray) in scene.rays.iter().enumerate() {
            let (Some(ta), Some(ra)) = (ray.tx_anchor, ray.rx_anchor) else {
                return Err(SynthesisError::MissingAnchor { ray: i });
            };
            let s: Vec<f64> = tx_pos.iter().map(|p| distance(p, &ta)).collect();
            let r: Vec<f64> = rx_pos.iter().map(|p| distance(p, &ra)).collect();
            if s.iter().chain(r.iter()).any(|&d| d <= tol) {
                return Err(SynthesisError::DegenerateGeometry { ray: i });
            }
            terms.tx_excess.push(s.iter().map(|d| d - s[0]).collect());
            terms.rx_excess.push(r.iter().map(|d| d - r[0]).collect());
            terms.tx_dist.push(s);
            terms.rx_dist.push(r);
        }
        Ok(terms)
    }

    fn combine(&self, weights: &[Complex64], spreading: Spreading) -> DMatrix<Complex64> {
        let nr = self.rx_excess[0].len();
        let nt = self.tx_excess[0].len();
        let k = -2.0 * PI / self.wavelength;
        DMatrix::from_fn(nr, nt, |m, n| {
            let mut acc = CompensatedSum::default();
            for (l, w) in weights.iter().enumerate() {
                let phase = k * (self.rx_excess[l][m] + self.tx_excess[l][n]);
                let amp = match spreading {
                    Spreading::None => 1.0,
                    Spreading::PathLength => {
                        let d_ref = self.rx_dist[l][0] + self.tx_dist[l][0];
                        d_ref / (self.rx_dist[l][m] + self.tx_dist[l][n])
                    }
                };
                acc.add(*w * Complex64::from_polar(amp, phase));
            }
            acc.value()
        })
    }
}

/// Element-wise spherical-wavefront channel.
///
/// `H[m, n] = sum_l alpha_l (d_ref / (r_lm + s_ln))^rho exp(-j 2 pi (r_lm + s_ln - d_ref) / lambda)`
/// where `s_ln` is the distance from tx element `n` to the path's tx anchor,
/// `r_lm` the distance from the rx anchor to rx element `m`, and `d_ref` the
/// same sum for the two reference elements (element 0 of each array).
/// Element positions follow from the array configs and the scene poses.
pub fn spherical_channel(
    scene: &Scene,
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    spreading: Spreading,
) -> Result<ChannelMatrix, SynthesisError> {
    let terms = SphericalTerms::new(scene, tx, rx)?;
    let weights: Vec<Complex64> = scene.rays.iter().map(|r| r.gain).collect();
    Ok(ChannelMatrix::new(terms.combine(&weights, spreading))?)
}

/// Spherical regime across subcarriers, with the same per-path delay
/// rotation as [`ofdm_channel`].
pub fn spherical_ofdm_channel(
    scene: &Scene,
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    subcarriers: Subcarriers,
    spreading: Spreading,
) -> Result<ChannelSet, SynthesisError> {
    subcarriers.validate()?;
    let terms = SphericalTerms::new(scene, tx, rx)?;
    if subcarriers.count == 1 {
        let weights: Vec<Complex64> = scene.rays.iter().map(|r| r.gain).collect();
        return Ok(ChannelSet::narrowband(ChannelMatrix::new(
            terms.combine(&weights, spreading),
        )?));
    }
    let taus = delays(scene)?;
    let mut mats = Vec::with_capacity(subcarriers.count);
    for k in 0..subcarriers.count {
        let f = subcarriers.offset(k);
        let weights: Vec<Complex64> = scene
            .rays
            .iter()
            .zip(&taus)
            .map(|(r, &tau)| r.gain * delay_rotation(f, tau))
            .collect();
        mats.push(ChannelMatrix::new(terms.combine(&weights, spreading))?);
    }
    Ok(ChannelSet::new(mats, subcarriers.spacing_field())?)
}

/// Synthesizes one scene under `regime`. Planar synthesis applies the pose
/// correction first; the spherical regime takes orientation from the
/// element positions directly.
pub fn synthesize_scene(
    scene: &Scene,
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    regime: Regime,
    subcarriers: Subcarriers,
    spreading: Spreading,
) -> Result<ChannelSet, SynthesisError> {
    match regime {
        Regime::Planar => {
            let local = apply_pose(scene);
            if subcarriers.count == 1 {
                subcarriers.validate()?;
                Ok(ChannelSet::narrowband(geometric_channel(&local, tx, rx)?))
            } else {
                ofdm_channel(&local, tx, rx, subcarriers)
            }
        }
        Regime::Spherical => spherical_ofdm_channel(scene, tx, rx, subcarriers, spreading),
    }
}

/// Azimuth and elevation (degrees) of direction `v`.
pub fn direction_angles(v: [f64; 3]) -> (f64, f64) {
    let az = wrap_degrees(v[1].atan2(v[0]).to_degrees());
    let el = v[2].atan2(v[0].hypot(v[1])).to_degrees();
    (az, el)
}

/// Unit vector for azimuth/elevation in degrees.
pub fn direction_vector(az: f64, el: f64) -> [f64; 3] {
    let (saz, caz) = az.to_radians().sin_cos();
    let (sel, cel) = el.to_radians().sin_cos();
    [cel * caz, cel * saz, sel]
}

/// Replaces every ray's global angles with those implied by its anchors:
/// departure from the tx phase center toward the tx anchor, arrival as the
/// propagation direction from the rx anchor toward the rx phase center.
///
/// Measuring from the phase centers (element centroids) keeps the residual
/// curvature term of a plane-wave fit as small as possible.
pub fn angles_from_anchors(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig) -> Result<Scene, SynthesisError> {
    let tc = tx.phase_center(&scene.tx_pose);
    let rc = rx.phase_center(&scene.rx_pose);
    let mut out = scene.clone();
    for (i, ray) in out.rays.iter_mut().enumerate() {
        let (Some(ta), Some(ra)) = (ray.tx_anchor, ray.rx_anchor) else {
            return Err(SynthesisError::MissingAnchor { ray: i });
        };
        (ray.aod_az, ray.aod_el) = direction_angles([ta[0] - tc[0], ta[1] - tc[1], ta[2] - tc[2]]);
        (ray.aoa_az, ray.aoa_el) = direction_angles([rc[0] - ra[0], rc[1] - ra[1], rc[2] - ra[2]]);
    }
    Ok(out)
}

/// Places each ray's anchors `distance` meters from the array phase centers
/// along its global departure and (reversed) arrival directions.
pub fn place_anchors(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig, distance: f64) -> Scene {
    let tc = tx.phase_center(&scene.tx_pose);
    let rc = rx.phase_center(&scene.rx_pose);
    let mut out = scene.clone();
    for ray in &mut out.rays {
        let u = direction_vector(ray.aod_az, ray.aod_el);
        let v = direction_vector(ray.aoa_az, ray.aoa_el);
        ray.tx_anchor = Some([0, 1, 2].map(|i| tc[i] + distance * u[i]));
        ray.rx_anchor = Some([0, 1, 2].map(|i| rc[i] - distance * v[i]));
    }
    out
}

/// `||a - b||_F / ||b||_F`.
pub fn relative_gap(a: &ChannelMatrix, b: &ChannelMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix())
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
        / b.frobenius_norm()
}

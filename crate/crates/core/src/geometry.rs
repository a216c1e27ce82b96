//! Steering vectors and the yaw correction that expresses ray angles in the
//! frame of an array mounted on a rotating platform.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::model::{wrap_degrees, ArrayConfig, ArrayKind, Scene};

/// Unit-norm array response.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(DVector<Complex64>);

impl SteeringVector {
    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Plane-wave response of `array` to direction `(az, el)` in the array's
/// local frame, degrees.
///
/// ULA entry `n` is `exp(-j 2 pi (d / lambda) n cos(el) cos(az)) / sqrt(N)`.
/// A UPA multiplies in the analogous row term `cos(el) sin(az)` along local y.
pub fn steering_vector(array: &ArrayConfig, az: f64, el: f64) -> SteeringVector {
    let (saz, caz) = az.to_radians().sin_cos();
    let cel = el.to_radians().cos();
    let k = 2.0 * PI * array.spacing / array.wavelength();
    let ux = k * cel * caz;
    let uy = k * cel * saz;
    let n = array.n_elements();
    let norm = 1.0 / (n as f64).sqrt();
    let entries = match array.kind {
        ArrayKind::Ula { elements } => DVector::from_iterator(
            elements,
            (0..elements).map(|i| Complex64::from_polar(norm, -ux * i as f64)),
        ),
        ArrayKind::Upa { rows, cols } => DVector::from_iterator(
            n,
            (0..rows)
                .flat_map(|r| (0..cols).map(move |c| Complex64::from_polar(norm, -(ux * c as f64 + uy * r as f64)))),
        ),
    };
    SteeringVector(entries)
}

/// Azimuth `raw_az` (global frame) expressed in the frame of an array whose
/// platform has yaw `heading`: `(raw_az - heading) mod 360`.
pub fn correct_orientation(raw_az: f64, heading: f64) -> f64 {
    wrap_degrees(wrap_degrees(raw_az) - wrap_degrees(heading))
}

/// Rotates every departure azimuth by the transmit heading and every arrival
/// azimuth by the receive heading. Elevations and all other fields are kept.
pub fn apply_pose(scene: &Scene) -> Scene {
    let mut out = scene.clone();
    let (ht, hr) = (scene.tx_pose.heading, scene.rx_pose.heading);
    for ray in &mut out.rays {
        ray.aod_az = correct_orientation(ray.aod_az, ht);
        ray.aoa_az = correct_orientation(ray.aoa_az, hr);
    }
    out
}

/// Rotates a whole scene about the vertical axis: all azimuths and both
/// headings advance by `delta` degrees. Positions are left untouched.
pub fn rotate_scene(scene: &Scene, delta: f64) -> Scene {
    let mut out = scene.clone();
    for ray in &mut out.rays {
        ray.aod_az = wrap_degrees(ray.aod_az + delta);
        ray.aoa_az = wrap_degrees(ray.aoa_az + delta);
    }
    out.tx_pose.heading = wrap_degrees(scene.tx_pose.heading + delta);
    out.rx_pose.heading = wrap_degrees(scene.rx_pose.heading + delta);
    out
}

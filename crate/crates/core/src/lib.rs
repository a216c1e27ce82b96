//! Synthesis of MIMO channel matrices from per-path ray descriptions,
//! episodic paired datasets, and scoring for codebook beam selection and
//! 1-bit quantized channel estimation.
//!
//! Three channel regimes are supported:
//!
//! * planar-wave geometric channel built from gains and angles
//!   ([`synthesis::geometric_channel`], [`synthesis::ofdm_channel`]),
//! * element-wise spherical wavefronts from per-path interaction points
//!   ([`synthesis::spherical_channel`]),
//! * random-parameter scenes in two difficulty variants ([`rdm`]).
//!
//! Angle convention used throughout: azimuth is measured counterclockwise
//! from the global +x axis in the horizontal plane, elevation from the
//! horizontal plane, positive upward. All angles are in degrees.
//! Departure angles point from the transmit array toward the first
//! interaction point; arrival angles give the propagation direction of the
//! wave as it reaches the receive array (from the last interaction point
//! toward the receiver).

pub mod beams;
pub mod dataset;
pub mod estimation;
pub mod geometry;
pub mod model;
mod numeric;
pub mod rdm;
pub mod rng;
pub mod synthesis;

pub use num_complex::Complex64;

/// Toolkit version stamped into every artifact header.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

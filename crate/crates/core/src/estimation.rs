//! 1-bit measurement model, a least-squares baseline estimator and NMSE
//! scoring.
//!
//! Measurements are `Y = Q(H P + W)` with `W` i.i.d. CN(0, sigma^2) and
//! `Q(z) = (sgn(Re z) + j sgn(Im z)) / sqrt(2)`, `sgn(0) = +1`.
//! SNR is defined per received sample: `sigma^2 = P_sig / 10^(snr / 10)`
//! with `P_sig = ||H P||_F^2 / (N_rx N_p)`.

use std::f64::consts::PI;
use std::io;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ChannelMatrix;
use crate::rng::{complex_gaussian, substream};

/// Relative Tikhonov term added to the pilot Gram matrix, scaled by its mean
/// eigenvalue.
pub const RIDGE: f64 = 1e-12;

/// Stream index reserved for pilot generation; noise uses streams below it.
pub const PILOT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("pilot Gram matrix is ill-conditioned")]
    IllConditioned,
    #[error("NMSE is undefined for an all-zero reference channel")]
    UndefinedNmse,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid pilot plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl EstimationError {
    pub fn code(&self) -> &'static str {
        match self {
            EstimationError::IllConditioned => "ill_conditioned",
            EstimationError::UndefinedNmse => "undefined_nmse",
            EstimationError::ShapeMismatch(_) => "shape_mismatch",
            EstimationError::InvalidPlan(_) => "invalid_plan",
            EstimationError::Csv(_) | EstimationError::Io(_) => "io_error",
        }
    }
}

/// Transmit pilots (`N_tx x N_p`, unit-norm columns) and the SNR grid they
/// are evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pilots: DMatrix<Complex64>,
    snr_grid_db: Vec<f64>,
}

impl PilotPlan {
    pub fn new(pilots: DMatrix<Complex64>, snr_grid_db: Vec<f64>) -> Result<Self, EstimationError> {
        if pilots.ncols() == 0 || pilots.nrows() == 0 {
            return Err(EstimationError::InvalidPlan("need N_tx >= 1 and N_p >= 1".into()));
        }
        for (p, col) in pilots.column_iter().enumerate() {
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs().is_nan() || (norm - 1.0).abs() > 1e-9 {
                return Err(EstimationError::InvalidPlan(format!("pilot {p} has norm {norm}")));
            }
        }
        if snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(EstimationError::InvalidPlan("SNR grid must be finite".into()));
        }
        Ok(PilotPlan { pilots, snr_grid_db })
    }

    /// DFT pilots: column `p` has entries `exp(-j 2 pi n p / M) / sqrt(N_tx)`
    /// with `M = max(N_p, N_tx)`, so the rows are orthogonal whenever
    /// `N_p >= N_tx`.
    pub fn dft(n_tx: usize, n_p: usize, snr_grid_db: Vec<f64>) -> Result<Self, EstimationError> {
        if n_tx == 0 || n_p == 0 {
            return Err(EstimationError::InvalidPlan("need N_tx >= 1 and N_p >= 1".into()));
        }
        let m = n_p.max(n_tx);
        let norm = 1.0 / (n_tx as f64).sqrt();
        let pilots = DMatrix::from_fn(n_tx, n_p, |n, p| {
            Complex64::from_polar(norm, -2.0 * PI * ((n * p) % m) as f64 / m as f64)
        });
        Self::new(pilots, snr_grid_db)
    }

    /// QPSK pilots: every entry `(+-1 +- j) / sqrt(2 N_tx)` with signs drawn
    /// from stream [`PILOT_STREAM`] of `seed`. Column energy is spread over
    /// all antennas, so `H P` stays dense even for sparse channels.
    pub fn qpsk(n_tx: usize, n_p: usize, seed: u64, snr_grid_db: Vec<f64>) -> Result<Self, EstimationError> {
        if n_tx == 0 || n_p == 0 {
            return Err(EstimationError::InvalidPlan("need N_tx >= 1 and N_p >= 1".into()));
        }
        let mut rng = substream(seed, PILOT_STREAM);
        let a = 1.0 / (2.0 * n_tx as f64).sqrt();
        let mut sign = || if rng.random::<bool>() { a } else { -a };
        // column-major draw order
        let pilots = DMatrix::from_fn(n_tx, n_p, |_, _| Complex64::new(sign(), sign()));
        Self::new(pilots, snr_grid_db)
    }

    pub fn pilots(&self) -> &DMatrix<Complex64> {
        &self.pilots
    }

    pub fn snr_grid_db(&self) -> &[f64] {
        &self.snr_grid_db
    }

    pub fn n_tx(&self) -> usize {
        self.pilots.nrows()
    }

    pub fn n_pilots(&self) -> usize {
        self.pilots.ncols()
    }

    /// Noise variance giving `snr_db` on channel `h`.
    pub fn noise_variance(&self, h: &ChannelMatrix, snr_db: f64) -> Result<f64, EstimationError> {
        let rx = self.received(h)?;
        let p_sig = rx.iter().map(|z| z.norm_sqr()).sum::<f64>() / rx.len() as f64;
        Ok(p_sig / 10f64.powf(snr_db / 10.0))
    }

    fn received(&self, h: &ChannelMatrix) -> Result<DMatrix<Complex64>, EstimationError> {
        if h.n_tx() != self.n_tx() {
            return Err(EstimationError::ShapeMismatch(format!(
                "channel has {} tx antennas, pilots {}",
                h.n_tx(),
                self.n_tx()
            )));
        }
        Ok(h.as_matrix() * &self.pilots)
    }
}

/// Receiver output for one pilot block.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `N_rx x N_p`.
    pub samples: DMatrix<Complex64>,
    pub quantized: bool,
    /// Mean per-sample power ahead of the quantizer, as an AGC reports it.
    pub input_power: f64,
}

/// 1-bit quantizer with unit-modulus output.
#[inline]
pub fn quantize(z: Complex64) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sgn = |x: f64| if x >= 0.0 { s } else { -s };
    Complex64::new(sgn(z.re), sgn(z.im))
}

fn measure(
    h: &ChannelMatrix,
    plan: &PilotPlan,
    noise_variance: f64,
    seed: u64,
    stream: u64,
    quantized: bool,
) -> Result<Observation, EstimationError> {
    let mut r = plan.received(h)?;
    if noise_variance > 0.0 {
        let mut rng = substream(seed, stream);
        // noise is drawn row by row: (rx 0, pilot 0), (rx 0, pilot 1), ...
        for m in 0..r.nrows() {
            for p in 0..r.ncols() {
                r[(m, p)] += complex_gaussian(&mut rng, noise_variance);
            }
        }
    }
    let input_power = r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64;
    let samples = if quantized { r.map(quantize) } else { r };
    Ok(Observation {
        samples,
        quantized,
        input_power,
    })
}

/// `Y = Q(H P + W)` with seeded noise.
pub fn one_bit_measure(
    h: &ChannelMatrix,
    plan: &PilotPlan,
    noise_variance: f64,
    seed: u64,
) -> Result<Observation, EstimationError> {
    measure(h, plan, noise_variance, seed, 0, true)
}

/// `Y = H P + W`, the quantizer bypassed.
pub fn linear_measure(
    h: &ChannelMatrix,
    plan: &PilotPlan,
    noise_variance: f64,
    seed: u64,
) -> Result<Observation, EstimationError> {
    measure(h, plan, noise_variance, seed, 0, false)
}

/// Scaled least squares: `H = c * Y P^H (P P^H + eps I)^-1`.
///
/// For unquantized observations `c = 1`. The 1-bit quantizer discards
/// amplitude, so quantized observations are rescaled by the inverse
/// Bussgang gain of a unit-power 1-bit quantizer driven by a Gaussian input
/// of power `input_power`: `c = sqrt(pi / 2 * input_power)`.
pub fn baseline_estimate(obs: &Observation, plan: &PilotPlan) -> Result<ChannelMatrix, EstimationError> {
    let y = &obs.samples;
    if y.ncols() != plan.n_pilots() {
        return Err(EstimationError::ShapeMismatch(format!(
            "observation has {} pilot columns, plan {}",
            y.ncols(),
            plan.n_pilots()
        )));
    }
    let p = plan.pilots();
    let n_tx = plan.n_tx();
    let mut gram = p * p.adjoint();
    let mean_eig = (0..n_tx).map(|i| gram[(i, i)].re).sum::<f64>() / n_tx as f64;
    let eps = RIDGE * mean_eig;
    for i in 0..n_tx {
        gram[(i, i)] += Complex64::new(eps, 0.0);
    }
    let chol = gram.cholesky().ok_or(EstimationError::IllConditioned)?;
    // H0^H = (P P^H + eps I)^-1 P Y^H
    let h0 = chol.solve(&(p * y.adjoint())).adjoint();
    let c = if obs.quantized {
        (PI / 2.0 * obs.input_power).sqrt()
    } else {
        1.0
    };
    let est = h0 * Complex64::new(c, 0.0);
    ChannelMatrix::new(est).map_err(|_| EstimationError::IllConditioned)
}

/// `||H_est - H_true||_F^2 / ||H_true||_F^2`, optionally in dB.
pub fn nmse(h_true: &ChannelMatrix, h_est: &ChannelMatrix, in_db: bool) -> Result<f64, EstimationError> {
    if h_true.shape() != h_est.shape() {
        return Err(EstimationError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            h_true.shape(),
            h_est.shape()
        )));
    }
    let den = h_true.frobenius_norm().powi(2);
    if den == 0.0 {
        return Err(EstimationError::UndefinedNmse);
    }
    let num: f64 = (h_est.as_matrix() - h_true.as_matrix())
        .iter()
        .map(|z| z.norm_sqr())
        .sum();
    let ratio = num / den;
    Ok(if in_db { 10.0 * ratio.log10() } else { ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsePoint {
    pub snr_db: f64,
    /// Mean linear NMSE over trials.
    pub nmse: f64,
    pub nmse_db: f64,
    /// Standard error of the mean linear NMSE.
    pub std_error: f64,
    pub trials: usize,
}

/// Monte-Carlo NMSE of the baseline over the plan's SNR grid. Trial `t`
/// uses channel `t mod len(channels)` and noise stream
/// `(seed, snr_index * trials + t)`; results do not depend on scheduling.
pub fn nmse_sweep(
    channels: &[ChannelMatrix],
    plan: &PilotPlan,
    trials: usize,
    seed: u64,
    quantized: bool,
) -> Result<Vec<NmsePoint>, EstimationError> {
    if channels.is_empty() || trials == 0 {
        return Err(EstimationError::InvalidPlan(
            "need at least one channel and one trial".into(),
        ));
    }
    plan.snr_grid_db()
        .iter()
        .enumerate()
        .map(|(i, &snr_db)| {
            let errs: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let h = &channels[t % channels.len()];
                    let sigma2 = plan.noise_variance(h, snr_db)?;
                    let stream = (i * trials + t) as u64;
                    let obs = measure(h, plan, sigma2, seed, stream, quantized)?;
                    nmse(h, &baseline_estimate(&obs, plan)?, false)
                })
                .collect::<Result<_, _>>()?;
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            Ok(NmsePoint {
                snr_db,
                nmse: mean,
                nmse_db: 10.0 * mean.log10(),
                std_error: (var / n).sqrt(),
                trials,
            })
        })
        .collect()
}

/// Writes `snr_db,nmse_db,estimator_id,channel_regime` rows.
pub fn write_nmse_csv<W: io::Write>(out: W, curves: &[(&str, &str, &[NmsePoint])]) -> Result<(), EstimationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["snr_db", "nmse_db", "estimator_id", "channel_regime"])?;
    for (estimator, regime, points) in curves {
        for p in points.iter() {
            w.write_record([
                p.snr_db.to_string(),
                p.nmse_db.to_string(),
                estimator.to_string(),
                regime.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

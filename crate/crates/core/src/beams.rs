//! Analog beam codebooks, ground-truth beam-pair labels and top-K scoring.
//!
//! Pairs are flattened rx-major: `pair_index = rx_index * M_tx + tx_index`.

use std::io;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArrayConfig, ChannelMatrix, Point3, Scene};
use crate::synthesis::{synthesize_scene, Regime, Spreading, Subcarriers, SynthesisError};

/// Transmit beams in the default 256-pair configuration.
pub const DEFAULT_TX_BEAMS: usize = 32;
/// Receive beams in the default 256-pair configuration.
pub const DEFAULT_RX_BEAMS: usize = 8;
/// Neighbors consulted by [`NearestPositionPredictor`] by default.
pub const DEFAULT_K_NN: usize = 5;
/// Share of samples used for training in [`holdout_top_k`] by default.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("{what}: expected {expected}, got {got}")]
    Cardinality {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("channel is {n_rx}x{n_tx} but codebooks expect {cb_rx}x{cb_tx}")]
    ShapeMismatch {
        n_rx: usize,
        n_tx: usize,
        cb_rx: usize,
        cb_tx: usize,
    },
    #[error("ranking of sample {sample} is invalid: {reason}")]
    InvalidRanking { sample: usize, reason: String },
    #[error("predictor has no training samples")]
    EmptyModel,
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BeamError {
    pub fn code(&self) -> &'static str {
        match self {
            BeamError::Cardinality { .. } => "cardinality_error",
            BeamError::ShapeMismatch { .. } => "shape_mismatch",
            BeamError::InvalidRanking { .. } => "invalid_ranking",
            BeamError::EmptyModel => "empty_model",
            BeamError::InvalidCodebook(_) => "invalid_codebook",
            BeamError::Synthesis(e) => e.code(),
            BeamError::Csv(_) | BeamError::Io(_) => "io_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookKind {
    Dft,
}

/// Set of unit-norm beamforming vectors, stored as the columns of an
/// `N x M` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: DMatrix<Complex64>,
    kind: CodebookKind,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.ncols() == 0
    }

    pub fn n_elements(&self) -> usize {
        self.beams.nrows()
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn beam(&self, m: usize) -> DVector<Complex64> {
        self.beams.column(m).into_owned()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.beams
    }
}

/// `M` beams over `N` elements; beam `m` has entries
/// `exp(-j 2 pi n m / M) / sqrt(N)`.
pub fn dft_codebook(n: usize, m: usize) -> Result<Codebook, BeamError> {
    if n == 0 || m == 0 {
        return Err(BeamError::InvalidCodebook(format!(
            "need N >= 1 and M >= 1, got N={n}, M={m}"
        )));
    }
    let norm = 1.0 / (n as f64).sqrt();
    let beams = DMatrix::from_fn(n, m, |i, b| {
        let phase = -2.0 * std::f64::consts::PI * ((i * b) % m) as f64 / m as f64;
        Complex64::from_polar(norm, phase)
    });
    Ok(Codebook {
        beams,
        kind: CodebookKind::Dft,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamLabel {
    pub pair_index: usize,
    pub tx_index: usize,
    pub rx_index: usize,
    /// `|w^H H f|^2`, linear.
    pub gain: f64,
    /// Every pair had zero gain; the label is the tie-break default.
    pub degenerate: bool,
}

impl BeamLabel {
    /// Label for a known pair, without gain information.
    pub fn from_pair(pair_index: usize, tx_beams: usize) -> Self {
        BeamLabel {
            pair_index,
            tx_index: pair_index % tx_beams,
            rx_index: pair_index / tx_beams,
            gain: 0.0,
            degenerate: false,
        }
    }
}

/// `|W^H H F|^2` for all pairs, shape `M_rx x M_tx`.
pub fn beam_gains(h: &ChannelMatrix, tx_cb: &Codebook, rx_cb: &Codebook) -> Result<DMatrix<f64>, BeamError> {
    if h.n_rx() != rx_cb.n_elements() || h.n_tx() != tx_cb.n_elements() {
        return Err(BeamError::ShapeMismatch {
            n_rx: h.n_rx(),
            n_tx: h.n_tx(),
            cb_rx: rx_cb.n_elements(),
            cb_tx: tx_cb.n_elements(),
        });
    }
    let g = rx_cb.matrix().adjoint() * h.as_matrix() * tx_cb.matrix();
    Ok(g.map(|z| z.norm_sqr()))
}

/// Exhaustive search for the strongest pair; ties go to the lowest pair index.
pub fn best_beam_pair(h: &ChannelMatrix, tx_cb: &Codebook, rx_cb: &Codebook) -> Result<BeamLabel, BeamError> {
    let gains = beam_gains(h, tx_cb, rx_cb)?;
    let m_tx = tx_cb.len();
    let mut best = (0usize, 0usize, gains[(0, 0)]);
    for r in 0..rx_cb.len() {
        for t in 0..m_tx {
            if gains[(r, t)] > best.2 {
                best = (r, t, gains[(r, t)]);
            }
        }
    }
    let (r, t, gain) = best;
    Ok(BeamLabel {
        pair_index: r * m_tx + t,
        tx_index: t,
        rx_index: r,
        gain,
        degenerate: gain == 0.0,
    })
}

/// Labels every scene from its narrowband planar channel. Scenes without
/// rays get `None`.
pub fn label_scenes(
    scenes: &[Scene],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    tx_cb: &Codebook,
    rx_cb: &Codebook,
    regime: Regime,
) -> Result<Vec<Option<BeamLabel>>, BeamError> {
    scenes
        .par_iter()
        .map(|sc| {
            if !sc.has_channel() {
                return Ok(None);
            }
            let set = synthesize_scene(sc, tx, rx, regime, Subcarriers::narrowband(), Spreading::None)?;
            best_beam_pair(&set.subcarriers()[0], tx_cb, rx_cb).map(Some)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKPoint {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub samples: usize,
    pub points: Vec<TopKPoint>,
}

impl TopKReport {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.k == k).map(|p| p.accuracy)
    }
}

/// Fraction of samples whose true pair appears within the first `k` ranked
/// pairs, for every `k` in `ks`.
pub fn top_k_accuracy(rankings: &[Vec<usize>], labels: &[BeamLabel], ks: &[usize]) -> Result<TopKReport, BeamError> {
    if rankings.len() != labels.len() {
        return Err(BeamError::Cardinality {
            what: "rankings vs labels",
            expected: labels.len(),
            got: rankings.len(),
        });
    }
    // position of the true pair in each ranking, if present
    let mut positions = Vec::with_capacity(labels.len());
    for (i, (ranking, label)) in rankings.iter().zip(labels).enumerate() {
        let mut seen = std::collections::HashSet::with_capacity(ranking.len());
        if let Some(dup) = ranking.iter().find(|p| !seen.insert(**p)) {
            return Err(BeamError::InvalidRanking {
                sample: i,
                reason: format!("pair {dup} listed twice"),
            });
        }
        positions.push(ranking.iter().position(|&p| p == label.pair_index));
    }
    let n = labels.len();
    let points = ks
        .iter()
        .map(|&k| {
            let hits = positions.iter().filter(|p| matches!(p, Some(i) if *i < k)).count();
            TopKPoint {
                k,
                accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            }
        })
        .collect();
    Ok(TopKReport { samples: n, points })
}

/// Position-only baseline: ranks pairs by how often they label the query's
/// nearest training positions.
#[derive(Debug, Clone)]
pub struct NearestPositionPredictor {
    positions: Vec<Point3>,
    labels: Vec<usize>,
    n_pairs: usize,
    k_nn: usize,
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

impl NearestPositionPredictor {
    pub fn fit(train: &[(Point3, usize)], n_pairs: usize, k_nn: usize) -> Result<Self, BeamError> {
        if train.is_empty() {
            return Err(BeamError::EmptyModel);
        }
        if k_nn == 0 {
            return Err(BeamError::Cardinality {
                what: "k_nn",
                expected: 1,
                got: 0,
            });
        }
        if let Some((_, l)) = train.iter().find(|(_, l)| *l >= n_pairs) {
            return Err(BeamError::Cardinality {
                what: "label below pair count",
                expected: n_pairs,
                got: *l,
            });
        }
        Ok(NearestPositionPredictor {
            positions: train.iter().map(|(p, _)| *p).collect(),
            labels: train.iter().map(|(_, l)| *l).collect(),
            n_pairs,
            k_nn,
        })
    }

    /// Complete ranking of all pairs for `query`.
    ///
    /// Among the `k_nn` nearest training samples (distance ties broken by
    /// training order), labels are ordered by: exact position matches, then
    /// neighbor count, then distance of the closest occurrence, then pair
    /// index. Unseen pairs follow in index order.
    pub fn rank(&self, query: &Point3) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| (dist2(p, query), i))
            .collect();
        let k = self.k_nn.min(order.len());
        order.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        order.truncate(k);

        // label -> (exact matches, count, closest distance)
        let mut stats: std::collections::BTreeMap<usize, (usize, usize, f64)> = Default::default();
        for &(d, i) in &order {
            let e = stats.entry(self.labels[i]).or_insert((0, 0, f64::INFINITY));
            e.0 += usize::from(d == 0.0);
            e.1 += 1;
            e.2 = e.2.min(d);
        }
        let mut seen: Vec<(usize, (usize, usize, f64))> = stats.into_iter().collect();
        seen.sort_by(|(la, a), (lb, b)| {
            b.0.cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then(a.2.partial_cmp(&b.2).unwrap())
                .then(la.cmp(lb))
        });
        let mut ranking: Vec<usize> = seen.iter().map(|(l, _)| *l).collect();
        let mut used = vec![false; self.n_pairs];
        for &l in &ranking {
            used[l] = true;
        }
        ranking.extend((0..self.n_pairs).filter(|&p| !used[p]));
        ranking
    }
}

/// One-shot form of [`NearestPositionPredictor`] with the default `k_nn`.
pub fn nearest_position_predictor(
    train: &[(Point3, usize)],
    query: &Point3,
    n_pairs: usize,
) -> Result<Vec<usize>, BeamError> {
    Ok(NearestPositionPredictor::fit(train, n_pairs, DEFAULT_K_NN)?.rank(query))
}

/// Default evaluation protocol: the first `train_fraction` of the samples
/// train the predictor, the rest are scored.
pub fn holdout_top_k(
    samples: &[(Point3, usize)],
    train_fraction: f64,
    n_pairs: usize,
    k_nn: usize,
    ks: &[usize],
) -> Result<TopKReport, BeamError> {
    let n_train = ((samples.len() as f64) * train_fraction).floor() as usize;
    let (train, test) = samples.split_at(n_train.min(samples.len()));
    let model = NearestPositionPredictor::fit(train, n_pairs, k_nn)?;
    let rankings: Vec<Vec<usize>> = test.par_iter().map(|(p, _)| model.rank(p)).collect();
    let labels: Vec<BeamLabel> = test.iter().map(|(_, l)| BeamLabel::from_pair(*l, 1)).collect();
    top_k_accuracy(&rankings, &labels, ks)
}

/// Writes `K,accuracy,predictor_id` rows.
pub fn write_top_k_csv<W: io::Write>(out: W, reports: &[(&str, &TopKReport)]) -> Result<(), BeamError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K", "accuracy", "predictor_id"])?;
    for (id, report) in reports {
        for p in &report.points {
            w.write_record([p.k.to_string(), p.accuracy.to_string(), id.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::steering_vector;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn two_point_dft() {
        let cb = dft_codebook(2, 2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(close(cb.beam(0)[0], Complex64::new(s, 0.0)) && close(cb.beam(0)[1], Complex64::new(s, 0.0)));
        assert!(close(cb.beam(1)[0], Complex64::new(s, 0.0)) && close(cb.beam(1)[1], Complex64::new(-s, 0.0)));
    }

    #[test]
    fn square_dft_is_orthonormal() {
        let cb = dft_codebook(8, 8).unwrap();
        let gram = cb.matrix().adjoint() * cb.matrix();
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_beam_codebook() {
        let cb = dft_codebook(4, 1).unwrap();
        assert_eq!(cb.len(), 1);
        assert!(cb.beam(0).iter().all(|z| close(*z, Complex64::new(0.5, 0.0))));
        assert!(dft_codebook(0, 1).is_err());
    }

    #[test]
    fn zero_channel_is_degenerate() {
        let tx = dft_codebook(4, 4).unwrap();
        let rx = dft_codebook(2, 2).unwrap();
        let l = best_beam_pair(&ChannelMatrix::zeros(2, 4), &tx, &rx).unwrap();
        assert_eq!(l.pair_index, 0);
        assert!(l.degenerate);
        assert!(best_beam_pair(&ChannelMatrix::zeros(4, 2), &tx, &rx).is_err());
    }

    fn on_grid_channel(tx_beam: usize, rx_beam: usize, alpha: Complex64) -> ChannelMatrix {
        // beam m of an N-point DFT codebook matches cos(az) = 2m/N (mod 2)
        let arr_tx = ArrayConfig::ula(8, 60e9).unwrap();
        let arr_rx = ArrayConfig::ula(4, 60e9).unwrap();
        let az = |m: usize, n: usize| {
            let mut c = 2.0 * m as f64 / n as f64;
            if c > 1.0 {
                c -= 2.0;
            }
            c.acos().to_degrees()
        };
        let at = steering_vector(&arr_tx, az(tx_beam, 8), 0.0).into_vector();
        let ar = steering_vector(&arr_rx, az(rx_beam, 4), 0.0).into_vector();
        ChannelMatrix::new(ar * at.adjoint() * (alpha * 32f64.sqrt())).unwrap()
    }

    #[test]
    fn on_grid_channel_selects_grid_pair() {
        let tx = dft_codebook(8, 8).unwrap();
        let rx = dft_codebook(4, 4).unwrap();
        let alpha = Complex64::new(0.6, 0.8);
        let l = best_beam_pair(&on_grid_channel(5, 2, alpha), &tx, &rx).unwrap();
        assert_eq!((l.tx_index, l.rx_index, l.pair_index), (5, 2, 2 * 8 + 5));
        assert!((l.gain - 32.0).abs() < 1e-9 * 32.0);
    }

    #[test]
    fn top_k_basics() {
        let labels: Vec<BeamLabel> = [3, 1, 0].iter().map(|&p| BeamLabel::from_pair(p, 2)).collect();
        let perfect = vec![vec![3, 0, 1, 2], vec![1, 0, 2, 3], vec![0, 1, 2, 3]];
        let r = top_k_accuracy(&perfect, &labels, &[1, 2, 4]).unwrap();
        assert!(r.points.iter().all(|p| p.accuracy == 1.0));

        let shifted = vec![vec![0, 3, 1, 2], vec![0, 2, 3, 1], vec![0, 1, 2, 3]];
        let r = top_k_accuracy(&shifted, &labels, &[1, 2, 4]).unwrap();
        let acc: Vec<f64> = r.points.iter().map(|p| p.accuracy).collect();
        assert_eq!(acc, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);

        assert_eq!(
            top_k_accuracy(&shifted[..2], &labels, &[1]).unwrap_err().code(),
            "cardinality_error"
        );
        assert_eq!(
            top_k_accuracy(&[vec![1, 1]], &labels[..1], &[1]).unwrap_err().code(),
            "invalid_ranking"
        );
    }

    #[test]
    fn predictor_examples() {
        let train = vec![
            ([0.0, 0.0, 0.0], 7),
            ([1.0, 0.0, 0.0], 2),
            ([1.1, 0.0, 0.0], 2),
            ([1.2, 0.0, 0.0], 2),
            ([1.3, 0.0, 0.0], 2),
        ];
        // exact match outranks the majority of the remaining neighbors
        let r = nearest_position_predictor(&train, &[0.0, 0.0, 0.0], 16).unwrap();
        assert_eq!(r[0], 7);
        assert_eq!(r[1], 2);
        assert_eq!(r.len(), 16);
        let mut sorted = r.clone();
        sorted.sort();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
        // unseen pairs follow in index order
        assert_eq!(&r[2..5], &[0, 1, 3]);

        let same: Vec<(Point3, usize)> = (0..10).map(|i| ([i as f64, 2.0, 0.0], 9)).collect();
        for q in [[0.0, 0.0, 0.0], [100.0, -3.0, 7.0]] {
            assert_eq!(nearest_position_predictor(&same, &q, 16).unwrap()[0], 9);
        }
        assert_eq!(
            nearest_position_predictor(&[], &[0.0; 3], 4).unwrap_err().code(),
            "empty_model"
        );
    }

    #[test]
    fn clustered_positions_beat_chance() {
        // two well separated clusters, interleaved so both appear in train and test
        let samples: Vec<(Point3, usize)> = (0..200)
            .map(|i| {
                let c = i % 2;
                let jitter = (i as f64 * 0.37).sin();
                ([c as f64 * 50.0 + jitter, jitter, 0.0], if c == 0 { 10 } else { 200 })
            })
            .collect();
        let r = holdout_top_k(&samples, 0.8, 256, 5, &[1]).unwrap();
        assert!(r.accuracy_at(1).unwrap() > 1.0 / 256.0);
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
    }

    #[test]
    fn csv_layout() {
        let r = TopKReport {
            samples: 2,
            points: vec![TopKPoint { k: 1, accuracy: 0.5 }, TopKPoint { k: 2, accuracy: 1.0 }],
        };
        let mut buf = Vec::new();
        write_top_k_csv(&mut buf, &[("knn", &r)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "K,accuracy,predictor_id\n1,0.5,knn\n2,1,knn\n"
        );
    }

    proptest! {
        #[test]
        fn top_k_is_monotone(seed in 0u64..1000, n in 1usize..30) {
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::substream(seed, 0);
            let pairs = 12;
            let rankings: Vec<Vec<usize>> = (0..n).map(|_| {
                let mut v: Vec<usize> = (0..pairs).collect();
                v.shuffle(&mut rng);
                v.truncate(1 + (seed as usize % pairs));
                v
            }).collect();
            let labels: Vec<BeamLabel> = (0..n).map(|i| BeamLabel::from_pair((i * 7 + seed as usize) % pairs, 4)).collect();
            let ks: Vec<usize> = (0..=pairs).collect();
            let r = top_k_accuracy(&rankings, &labels, &ks).unwrap();
            prop_assert!(r.points.windows(2).all(|w| w[1].accuracy >= w[0].accuracy));
        }

        #[test]
        fn label_invariant_to_scale_and_phase(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..500) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut rng = crate::rng::substream(seed, 1);
            let h = DMatrix::from_fn(4, 8, |_, _| crate::rng::complex_gaussian(&mut rng, 1.0));
            let tx = dft_codebook(8, 16).unwrap();
            let rx = dft_codebook(4, 4).unwrap();
            let a = best_beam_pair(&ChannelMatrix::new(h.clone()).unwrap(), &tx, &rx).unwrap();
            let b = best_beam_pair(&ChannelMatrix::new(h * Complex64::new(re, im)).unwrap(), &tx, &rx).unwrap();
            prop_assert_eq!(a.pair_index, b.pair_index);
        }
    }
}

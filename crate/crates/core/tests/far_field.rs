use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raymimo::model::{ArrayConfig, Pose, RayPath, Scene};
use raymimo::synthesis::{
    angles_from_anchors, place_anchors, relative_gap, spherical_channel, synthesize_scene, Regime, Spreading,
    Subcarriers,
};

const FC: f64 = 60e9;

fn fixture(rng: &mut impl Rng) -> Scene {
    let rays = (0..rng.random_range(1..=4))
        .map(|_| {
            RayPath::new(
                Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-PI..PI)),
                rng.random_range(0.0..360.0),
                rng.random_range(-30.0..30.0),
                rng.random_range(0.0..360.0),
                rng.random_range(-30.0..30.0),
            )
        })
        .collect();
    Scene::new(
        0,
        rays,
        Pose::new([0.0, 0.0, 10.0], rng.random_range(0.0..360.0)),
        Pose::new([40.0, 25.0, 1.5], rng.random_range(0.0..360.0)),
    )
}

fn gap_at(scene: &Scene, tx: &ArrayConfig, rx: &ArrayConfig, wavelengths: f64) -> f64 {
    let anchored = place_anchors(scene, tx, rx, wavelengths * tx.wavelength());
    let sph = spherical_channel(&anchored, tx, rx, Spreading::None).unwrap();
    let planar_scene = angles_from_anchors(&anchored, tx, rx).unwrap();
    let planar = synthesize_scene(
        &planar_scene,
        tx,
        rx,
        Regime::Planar,
        Subcarriers::narrowband(),
        Spreading::None,
    )
    .unwrap();
    relative_gap(&sph, &planar.subcarriers()[0])
}

#[test]
fn spherical_converges_to_planar() {
    let tx = ArrayConfig::ula(64, FC).unwrap();
    let rx = ArrayConfig::ula(8, FC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let scene = fixture(&mut rng);
        let gaps: Vec<f64> = [1e2, 1e3, 1e4, 1e6]
            .iter()
            .map(|&d| gap_at(&scene, &tx, &rx, d))
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[3] < 1e-3, "{gaps:?}");
    }
}

#[test]
fn spherical_matches_element_distance_loop() {
    let tx = ArrayConfig::upa(2, 3, FC).unwrap();
    let rx = ArrayConfig::ula(4, FC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lam = 299_792_458.0 / FC;
    for _ in 0..20 {
        let scene = place_anchors(&fixture(&mut rng), &tx, &rx, 5.0);
        for spreading in [Spreading::None, Spreading::PathLength] {
            let h = spherical_channel(&scene, &tx, &rx, spreading).unwrap();
            let tp = tx.element_positions(&scene.tx_pose);
            let rp = rx.element_positions(&scene.rx_pose);
            let dist = |a: &[f64; 3], b: &[f64; 3]| {
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            };
            for m in 0..rp.len() {
                for n in 0..tp.len() {
                    let mut want = Complex64::new(0.0, 0.0);
                    for ray in &scene.rays {
                        let ta = ray.tx_anchor.unwrap();
                        let ra = ray.rx_anchor.unwrap();
                        let d = dist(&rp[m], &ra) + dist(&tp[n], &ta);
                        let d0 = dist(&rp[0], &ra) + dist(&tp[0], &ta);
                        let amp = match spreading {
                            Spreading::None => 1.0,
                            Spreading::PathLength => d0 / d,
                        };
                        want += ray.gain * Complex64::from_polar(amp, -2.0 * PI * (d - d0) / lam);
                    }
                    assert!((h.as_matrix()[(m, n)] - want).norm() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn missing_anchor_is_reported() {
    let tx = ArrayConfig::ula(4, FC).unwrap();
    let rx = ArrayConfig::ula(2, FC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scene = fixture(&mut rng);
    let err = spherical_channel(&scene, &tx, &rx, Spreading::None).unwrap_err();
    assert_eq!(err.code(), "missing_anchor");
}

use raymimo::rdm::{sample_rdm_batch, sample_rdm_scene, ElevationMode, RdmGeoSpec};

fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x - lo) / (hi - lo);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn hard_angles_are_uniform() {
    let scenes = sample_rdm_batch(&RdmGeoSpec::hard(2, 2025), 50_000).unwrap();
    let rays: Vec<_> = scenes.iter().flat_map(|s| &s.rays).collect();
    assert_eq!(rays.len(), 100_000);
    for az in [
        rays.iter().map(|r| r.aod_az).collect::<Vec<_>>(),
        rays.iter().map(|r| r.aoa_az).collect(),
    ] {
        assert!(az.iter().all(|a| (0.0..360.0).contains(a)));
        let d = ks_uniform(az, 0.0, 360.0);
        assert!(d < 0.01, "KS {d}");
    }
    let el: Vec<f64> = rays.iter().map(|r| r.aod_el).collect();
    assert!(el.iter().all(|e| (-90.0..90.0).contains(e)));
    assert!(ks_uniform(el, -90.0, 90.0) < 0.01);
}

#[test]
fn hard_gain_variance_is_unit() {
    let scenes = sample_rdm_batch(&RdmGeoSpec::hard(2, 4), 10_000).unwrap();
    let g: Vec<_> = scenes.iter().flat_map(|s| s.rays.iter().map(|r| r.gain)).collect();
    let var = g.iter().map(|z| z.norm_sqr()).sum::<f64>() / g.len() as f64;
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
    let delays: Vec<f64> = scenes
        .iter()
        .flat_map(|s| s.rays.iter().map(|r| r.delay.unwrap()))
        .collect();
    assert!(delays.iter().all(|d| (0.0..=100e-9).contains(d)));
}

#[test]
fn easy_stays_in_window() {
    let nominals = vec![[100.0, 10.0, 359.0, -5.0], [0.5, 0.0, 200.0, 0.0]];
    let scenes = sample_rdm_batch(&RdmGeoSpec::easy(nominals, 17), 10_000).unwrap();
    let mut mean = 0.0;
    for s in &scenes {
        let a = &s.rays[0];
        assert!((98.5..101.5).contains(&a.aod_az));
        assert!((8.5..11.5).contains(&a.aod_el));
        // window straddles 0/360 for these two
        assert!(a.aoa_az >= 357.5 || a.aoa_az < 0.5);
        let b = &s.rays[1];
        assert!(b.aod_az >= 359.0 || b.aod_az < 2.0);
        assert!((198.5..201.5).contains(&b.aoa_az));
        mean += a.aod_az;
    }
    mean /= scenes.len() as f64;
    assert!((mean - 100.0).abs() < 0.1);
}

#[test]
fn seeds_are_bit_reproducible() {
    let spec = RdmGeoSpec::hard(3, 42);
    assert_eq!(
        sample_rdm_batch(&spec, 1).unwrap(),
        vec![sample_rdm_scene(&spec).unwrap()]
    );
    let long = sample_rdm_batch(&spec, 10).unwrap();
    let short = sample_rdm_batch(&spec, 5).unwrap();
    assert_eq!(&long[..5], &short[..]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| sample_rdm_batch(&spec, 10)).unwrap();
    assert_eq!(serial, long);
    let other = sample_rdm_batch(&RdmGeoSpec::hard(3, 43), 10).unwrap();
    assert_ne!(other, long);
}

#[test]
fn zero_elevation_mode() {
    let spec = RdmGeoSpec {
        elevation: ElevationMode::Zero,
        ..RdmGeoSpec::hard(2, 1)
    };
    let scenes = sample_rdm_batch(&spec, 100).unwrap();
    assert!(scenes
        .iter()
        .flat_map(|s| &s.rays)
        .all(|r| r.aod_el == 0.0 && r.aoa_el == 0.0));
}

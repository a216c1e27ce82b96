use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use raymimo::beams::{dft_codebook, holdout_top_k, label_scenes, write_top_k_csv, BeamError};
use raymimo::dataset::{
    export_channel_tensor, read_dataset, read_ray_file, synthesize_tensor, write_dataset, DatasetManifest,
    LoadedDataset, ReceiverType, TensorOptions,
};
use raymimo::estimation::{nmse_sweep, write_nmse_csv, PilotPlan};
use raymimo::model::{dataset_summary, Episode, Point3, Scene};
use raymimo::rdm::sample_rdm_batch;
use raymimo::synthesis::{angles_from_anchors, place_anchors, synthesize_scene, Regime, Subcarriers};
use rayon::prelude::*;

use crate::config::{Config, Loaded, SourceSection};
use crate::error::{from_dataset, io, synthesis, CliError};
use crate::provenance::Provenance;

pub const LABELS_SCHEMA: &str = "beam-labels/1";
pub const TOPK_SCHEMA: &str = "top-k/1";
pub const NMSE_SCHEMA: &str = "nmse-snr/1";
pub const GAP_SCHEMA: &str = "regime-gap/1";
pub const SYNTHESIS_SCHEMA: &str = "synthesis-report/1";
pub const BENCH_SCHEMA: &str = "bench/1";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn load_dataset(root: &Path) -> Result<LoadedDataset, CliError> {
    read_dataset(root).map_err(CliError::Dataset)
}

fn tensor_name(regime: Regime) -> String {
    format!("channels_{}.bin", regime.as_str())
}

fn rdm_episodes(c: &Config) -> Result<Vec<Episode>, CliError> {
    let d = &c.dataset;
    let spec = c.rdm_spec()?;
    let scenes = sample_rdm_batch(&spec, d.episodes * d.scenes_per_episode).map_err(|e| CliError::Config {
        path: "source".into(),
        message: e.0,
    })?;
    let mut it = scenes.into_iter();
    Ok((0..d.episodes as u64)
        .map(|id| Episode {
            id,
            scenes: (0..d.scenes_per_episode as u64)
                .map(|s| Scene {
                    index: s,
                    ..it.next().expect("batch holds E * S scenes")
                })
                .collect(),
            sampling_interval: d.sampling_interval,
            kind: d.kind,
            start_time: Some(id as f64 * d.episode_spacing),
        })
        .collect())
}

fn ray_episodes(
    c: &Config,
    path: &Path,
    tx_pose: raymimo::model::Pose,
    rx_pose: raymimo::model::Pose,
) -> Result<Vec<Episode>, CliError> {
    let d = &c.dataset;
    let mut episodes: Vec<Episode> = (0..d.episodes as u64)
        .map(|id| Episode {
            id,
            scenes: (0..d.scenes_per_episode as u64)
                .map(|s| Scene::new(s, Vec::new(), tx_pose, rx_pose))
                .collect(),
            sampling_interval: d.sampling_interval,
            kind: d.kind,
            start_time: Some(id as f64 * d.episode_spacing),
        })
        .collect();
    for (e, s, p, ray) in read_ray_file(path)? {
        let scene = episodes
            .get_mut(e as usize)
            .and_then(|ep| ep.scenes.get_mut(s as usize))
            .ok_or_else(|| CliError::Config {
                path: "source.path".into(),
                message: format!(
                    "ray record for episode {e} scene {s} lies outside the configured {} x {} grid",
                    d.episodes, d.scenes_per_episode
                ),
            })?;
        if p != scene.rays.len() {
            return Err(CliError::Config {
                path: "source.path".into(),
                message: format!("episode {e} scene {s}: path index {p} out of order"),
            });
        }
        scene.rays.push(ray);
    }
    Ok(episodes)
}

pub fn build_episodes(cfg: &Loaded) -> Result<Vec<Episode>, CliError> {
    let c = &cfg.config;
    let mut episodes = match &c.source {
        SourceSection::Rdm { .. } => rdm_episodes(c)?,
        SourceSection::Rays { path, tx_pose, rx_pose } => {
            let path: PathBuf = if path.is_absolute() {
                path.clone()
            } else {
                cfg.dir.join(path)
            };
            ray_episodes(c, &path, *tx_pose, *rx_pose)?
        }
    };
    if let Some(dist) = c.synthesis.anchor_distance {
        let tx = c.tx_array()?;
        let rx = c.rx_array()?;
        for ep in &mut episodes {
            for sc in &mut ep.scenes {
                *sc = place_anchors(sc, &tx, &rx, dist);
            }
        }
    }
    Ok(episodes)
}

pub fn generate(cfg: &Loaded, out: &Path) -> Result<String, CliError> {
    let c = &cfg.config;
    let episodes = build_episodes(cfg)?;
    let mut manifest = DatasetManifest::describe(
        c.dataset.name.clone(),
        c.dataset.carrier_frequency,
        c.dataset.receiver_type,
        c.dataset.episode_spacing,
        &episodes,
    );
    manifest.receivers = c.dataset.receivers;
    manifest.scenes_per_episode = c.dataset.scenes_per_episode;
    write_dataset(out, &manifest, &episodes)?;
    Provenance::new("generate", cfg).write(out)?;
    Ok(format!(
        "wrote {} episodes x {} scenes ({} valid channels) to {}",
        manifest.episodes,
        manifest.scenes_per_episode,
        manifest.valid_channels.unwrap_or(0),
        out.display()
    ))
}

fn tensor_options(c: &Config, regime: Regime) -> TensorOptions {
    TensorOptions {
        regime,
        subcarriers: c.subcarriers(),
        spreading: c.synthesis.spreading,
        dtype: c.synthesis.dtype,
    }
}

fn frobenius_gap(a: &raymimo::model::ChannelSet, b: &raymimo::model::ChannelSet) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.subcarriers().iter().zip(b.subcarriers()) {
        num += (x.as_matrix() - y.as_matrix())
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>();
        den += y.frobenius_norm().powi(2);
    }
    (num / den).sqrt()
}

/// Spherical vs planar relative Frobenius gap for every valid scene. The
/// planar side uses angles implied by the anchors, so the two regimes
/// describe the same geometry.
pub fn regime_gaps(c: &Config, episodes: &[Episode]) -> Result<Vec<(u64, u64, f64)>, CliError> {
    let tx = c.tx_array()?;
    let rx = c.rx_array()?;
    let sc = c.subcarriers();
    let jobs: Vec<(u64, &Scene)> = episodes
        .iter()
        .flat_map(|ep| ep.scenes.iter().filter(|s| s.has_channel()).map(move |s| (ep.id, s)))
        .collect();
    jobs.par_iter()
        .map(|&(e, scene)| {
            let wrap = |err| synthesis(format!("episode {e} scene {}: {err}", scene.index), &err);
            let sph = synthesize_scene(scene, &tx, &rx, Regime::Spherical, sc, c.synthesis.spreading).map_err(wrap)?;
            let implied = angles_from_anchors(scene, &tx, &rx).map_err(wrap)?;
            let pl = synthesize_scene(&implied, &tx, &rx, Regime::Planar, sc, c.synthesis.spreading).map_err(wrap)?;
            Ok((e, scene.index, frobenius_gap(&sph, &pl)))
        })
        .collect()
}

pub fn synthesize(cfg: &Loaded, dataset: &Path, out: &Path, regimes: &[Regime]) -> Result<String, CliError> {
    let c = &cfg.config;
    let ds = load_dataset(dataset)?;
    ensure_dir(out)?;
    let prov = Provenance::new("synthesize", cfg);
    let tx = c.tx_array()?;
    let rx = c.rx_array()?;
    let mut report = String::from("regime,file,valid_channels,bytes\n");
    let mut msg = String::new();
    for &regime in regimes {
        let path = out.join(tensor_name(regime));
        export_channel_tensor(&path, &ds.episodes, &tx, &rx, &tensor_options(c, regime)).map_err(from_dataset)?;
        let bytes = fs::metadata(&path).map_err(io(&path))?.len();
        let valid = ds
            .episodes
            .iter()
            .flat_map(|e| &e.scenes)
            .filter(|s| s.has_channel())
            .count();
        writeln!(report, "{},{},{valid},{bytes}", regime.as_str(), tensor_name(regime)).unwrap();
        writeln!(
            msg,
            "{}: {valid} channels, {bytes} bytes -> {}",
            regime.as_str(),
            path.display()
        )
        .unwrap();
    }
    prov.write_csv(&out.join("synthesis.csv"), SYNTHESIS_SCHEMA, report.as_bytes())?;
    if regimes.contains(&Regime::Planar) && regimes.contains(&Regime::Spherical) {
        let gaps = regime_gaps(c, &ds.episodes)?;
        let mut table = String::from("episode,scene,relative_gap\n");
        for (e, s, g) in &gaps {
            writeln!(table, "{e},{s},{g:e}").unwrap();
        }
        prov.write_csv(&out.join("regime_gap.csv"), GAP_SCHEMA, table.as_bytes())?;
        let mean = gaps.iter().map(|g| g.2).sum::<f64>() / gaps.len().max(1) as f64;
        writeln!(msg, "mean relative Frobenius gap (spherical vs planar): {mean:e}").unwrap();
    }
    prov.write(out)?;
    Ok(msg.trim_end().to_string())
}

fn valid_scenes(ds: &LoadedDataset) -> Vec<(u64, &Scene)> {
    ds.episodes
        .iter()
        .flat_map(|ep| ep.scenes.iter().map(move |s| (ep.id, s)))
        .collect()
}

pub fn label(cfg: &Loaded, dataset: &Path, out: &Path) -> Result<String, CliError> {
    let c = &cfg.config;
    let ds = load_dataset(dataset)?;
    ensure_dir(out)?;
    let prov = Provenance::new("label", cfg);
    let tx = c.tx_array()?;
    let rx = c.rx_array()?;
    let b = &c.beams;
    let tx_cb = dft_codebook(tx.n_elements(), b.tx_beams)?;
    let rx_cb = dft_codebook(rx.n_elements(), b.rx_beams)?;
    let all = valid_scenes(&ds);
    let scenes: Vec<Scene> = all.iter().map(|(_, s)| (*s).clone()).collect();
    let labels = label_scenes(&scenes, &tx, &rx, &tx_cb, &rx_cb, c.synthesis.regime).map_err(|e| match e {
        BeamError::Synthesis(s) => synthesis(&s, &s),
        other => other.into(),
    })?;

    let mut table = String::from("episode,scene,pair_index,tx_index,rx_index,gain,degenerate\n");
    let mut samples: Vec<(Point3, usize)> = Vec::new();
    for ((e, scene), l) in all.iter().zip(&labels) {
        if let Some(l) = l {
            writeln!(
                table,
                "{e},{},{},{},{},{:e},{}",
                scene.index, l.pair_index, l.tx_index, l.rx_index, l.gain, l.degenerate
            )
            .unwrap();
            samples.push((scene.rx_pose.position, l.pair_index));
        }
    }
    prov.write_csv(&out.join("labels.csv"), LABELS_SCHEMA, table.as_bytes())?;

    let n_pairs = b.tx_beams * b.rx_beams;
    let report = holdout_top_k(&samples, b.train_fraction, n_pairs, b.k_nn, &b.k_values)?;
    let mut csv = Vec::new();
    write_top_k_csv(&mut csv, &[("nearest-position", &report)])?;
    prov.write_csv(&out.join("topk.csv"), TOPK_SCHEMA, &csv)?;
    prov.write(out)?;
    Ok(format!(
        "labeled {} scenes over {n_pairs} pairs; top-1 accuracy {:.4} on {} held-out samples",
        samples.len(),
        report.accuracy_at(1).unwrap_or(f64::NAN),
        report.samples
    ))
}

pub fn estimate(cfg: &Loaded, dataset: &Path, out: &Path) -> Result<String, CliError> {
    let c = &cfg.config;
    let ds = load_dataset(dataset)?;
    ensure_dir(out)?;
    let prov = Provenance::new("estimate", cfg);
    let tx = c.tx_array()?;
    let rx = c.rx_array()?;
    let e = &c.estimation;
    let regime = c.synthesis.regime;
    let mut jobs: Vec<(u64, &Scene)> = valid_scenes(&ds).into_iter().filter(|(_, s)| s.has_channel()).collect();
    if let Some(m) = e.max_channels {
        jobs.truncate(m);
    }
    if jobs.is_empty() {
        return Err(CliError::Dataset(raymimo::dataset::DatasetError::EmptyDataset));
    }
    let channels = jobs
        .par_iter()
        .map(|&(ep, s)| {
            synthesize_scene(s, &tx, &rx, regime, Subcarriers::narrowband(), c.synthesis.spreading)
                .map(|set| set.subcarriers()[0].clone())
                .map_err(|err| synthesis(format!("episode {ep} scene {}: {err}", s.index), &err))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n_p = e.pilots.unwrap_or(4 * tx.n_elements());
    let plan = PilotPlan::qpsk(tx.n_elements(), n_p, c.dataset.seed, e.snr_grid_db.clone())?;
    let seed = c.dataset.seed;
    let one_bit = nmse_sweep(&channels, &plan, e.trials, seed, true)?;
    let linear = nmse_sweep(&channels, &plan, e.trials, seed, false)?;
    let label = format!("{}:{}", ds.manifest.name, regime.as_str());
    let mut csv = Vec::new();
    write_nmse_csv(
        &mut csv,
        &[("ls-1bit", &label, &one_bit), ("ls-unquantized", &label, &linear)],
    )?;
    prov.write_csv(&out.join("nmse.csv"), NMSE_SCHEMA, &csv)?;
    prov.write(out)?;
    let mut msg = format!(
        "{} channels, {n_p} pilots, {} trials per point\nsnr_db  ls-1bit  ls-unquantized (NMSE dB)",
        channels.len(),
        e.trials
    );
    for (q, l) in one_bit.iter().zip(&linear) {
        write!(msg, "\n{:>6}  {:>7.3}  {:>7.3}", q.snr_db, q.nmse_db, l.nmse_db).unwrap();
    }
    Ok(msg)
}

#[derive(Debug, Clone, Copy)]
struct Cost {
    synthesis: f64,
    postprocess: f64,
    bytes: f64,
}

fn median(mut v: Vec<Duration>) -> f64 {
    v.sort();
    v[v.len() / 2].as_secs_f64().max(1e-9)
}

/// Synthesis and post-processing cost per channel for one regime. Size
/// counts the mask and payload of the tensor, not its header.
fn measure(c: &Config, episodes: &[Episode], regime: Regime, scratch: &Path) -> Result<(Cost, usize), CliError> {
    let tx = c.tx_array()?;
    let rx = c.rx_array()?;
    let opts = tensor_options(c, regime);
    let mut syn = Vec::new();
    let mut post = Vec::new();
    let mut size = 0;
    let mut valid = 0;
    for _ in 0..c.bench.repeats {
        let t0 = Instant::now();
        let tensor = synthesize_tensor(episodes, &tx, &rx, &opts).map_err(from_dataset)?;
        syn.push(t0.elapsed());
        let t1 = Instant::now();
        let bytes = tensor.encode()?;
        fs::write(scratch, &bytes).map_err(io(scratch))?;
        post.push(t1.elapsed());
        // mask and payload only
        size = tensor.blocks.len() + tensor.header.element_count() * tensor.header.dtype.width();
        debug_assert!(size <= bytes.len());
        valid = tensor.valid_count();
    }
    let _ = fs::remove_file(scratch);
    if valid == 0 {
        return Err(CliError::Dataset(raymimo::dataset::DatasetError::EmptyDataset));
    }
    let n = valid as f64;
    Ok((
        Cost {
            synthesis: median(syn) / n,
            postprocess: median(post) / n,
            bytes: size as f64 / n,
        },
        valid,
    ))
}

pub fn bench(cfg: &Loaded, dataset: &Path, out: &Path) -> Result<String, CliError> {
    let c = &cfg.config;
    let ds = load_dataset(dataset)?;
    ensure_dir(out)?;
    let prov = Provenance::new("bench", cfg);
    let scratch = out.join(".bench_scratch.bin");
    let (planar, n) = measure(c, &ds.episodes, Regime::Planar, &scratch)?;
    let (spherical, _) = measure(c, &ds.episodes, Regime::Spherical, &scratch)?;

    let mut csv = String::from(
        "regime,channels,synthesis_s_per_channel,postprocess_s_per_channel,bytes_per_channel,\
         synthesis_ratio,postprocess_ratio,size_ratio\n",
    );
    for (name, cost) in [("planar", planar), ("spherical", spherical)] {
        writeln!(
            csv,
            "{name},{n},{:e},{:e},{},{},{},{}",
            cost.synthesis,
            cost.postprocess,
            cost.bytes,
            cost.synthesis / planar.synthesis,
            cost.postprocess / planar.postprocess,
            cost.bytes / planar.bytes
        )
        .unwrap();
    }
    prov.write_csv(&out.join("bench.csv"), BENCH_SCHEMA, csv.as_bytes())?;

    let rtype = match ds.manifest.receiver_type {
        ReceiverType::Fixed => "Fixed",
        ReceiverType::Mobile => "Mobile",
    };
    let who = format!("{rtype} ({})", ds.manifest.name);
    let mut table = format!(
        "{:<24} {:<10} {:>26} {:>26} {:>26}\n",
        "Type of receiver", "Modeling", "Size of output files", "Simulation time", "Post-processing time"
    );
    writeln!(
        table,
        "{:<24} {:<10} {:>26} {:>26} {:>26}",
        who,
        "planar",
        format!("1 ({:.0} B/channel)", planar.bytes),
        format!("1 ({:.3e} s/channel)", planar.synthesis),
        format!("1 ({:.3e} s/channel)", planar.postprocess)
    )
    .unwrap();
    writeln!(
        table,
        "{:<24} {:<10} {:>26} {:>26} {:>26}",
        "",
        "spherical",
        format!("{:.2} x", spherical.bytes / planar.bytes),
        format!("{:.2} x", spherical.synthesis / planar.synthesis),
        format!("{:.2} x", spherical.postprocess / planar.postprocess)
    )
    .unwrap();
    let path = out.join("bench.txt");
    fs::write(&path, &table).map_err(io(path))?;
    Ok(table.trim_end().to_string())
}

pub fn validate(cfg: Option<&Loaded>, dataset: Option<&Path>) -> Result<String, CliError> {
    let mut msg = String::new();
    if let Some(cfg) = cfg {
        writeln!(msg, "config ok (sha256 {})", cfg.sha256).unwrap();
    }
    if let Some(root) = dataset {
        let ds = load_dataset(root)?;
        let mut errors = 0;
        for (ep, v) in &ds.report.violations {
            let level = if v.is_flag() { "flag" } else { "error" };
            errors += usize::from(!v.is_flag());
            writeln!(msg, "{level}: episode {ep}: {v}").unwrap();
        }
        for note in &ds.report.notes {
            writeln!(msg, "note: {note}").unwrap();
        }
        if errors > 0 {
            eprint!("{msg}");
            return Err(CliError::Validation(errors));
        }
        writeln!(
            msg,
            "dataset ok: {} episodes, {} flagged scenes",
            ds.episodes.len(),
            ds.report.flagged_scenes()
        )
        .unwrap();
    }
    Ok(msg.trim_end().to_string())
}

pub fn summary(dataset: &Path) -> Result<String, CliError> {
    let ds = load_dataset(dataset)?;
    let m = &ds.manifest;
    let s =
        dataset_summary(&ds.episodes).map_err(|_| CliError::Dataset(raymimo::dataset::DatasetError::EmptyDataset))?;
    let receivers = match (m.receivers, m.receiver_type) {
        (Some(n), t) => format!("{n} {t:?}"),
        (None, t) => format!("{t:?}"),
    };
    let mut out = String::new();
    writeln!(out, "dataset name                  {}", m.name).unwrap();
    writeln!(out, "frequency (GHz)               {}", m.carrier_frequency / 1e9).unwrap();
    writeln!(out, "number of receivers and type  {receivers}").unwrap();
    writeln!(
        out,
        "time between scenes (ms)      {}",
        raymimo::model::Span {
            min: s.sampling_interval.min * 1e3,
            max: s.sampling_interval.max * 1e3
        }
    )
    .unwrap();
    match s.episode_spacing {
        Some(sp) => writeln!(out, "time between episodes (s)     {sp}").unwrap(),
        None => writeln!(out, "time between episodes (s)     {}", m.episode_spacing).unwrap(),
    }
    writeln!(out, "number of episodes            {}", s.episodes).unwrap();
    writeln!(out, "number of scenes per episode  {}", s.scenes_per_episode).unwrap();
    writeln!(out, "total scenes                  {}", s.total_scenes).unwrap();
    write!(out, "number of valid channels      {}", s.valid_channels).unwrap();
    Ok(out)
}

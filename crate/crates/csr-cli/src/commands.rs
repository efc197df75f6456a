//! Subcommand implementations. Each returns the number of failed work
//! items; the process exits nonzero unless everything completed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use csr_core::encoder::Encoder;
use csr_core::numerics::FeatureVec;
use csr_core::pipeline::{
    build_probe_dataset, make_random_triplets, make_retrieval_triplets, make_track_stream,
    run_rearrangement, run_retrieval, run_tracking, EpisodeConfig, EpisodeMetrics, ProbeTask,
    TrackFrame, TrackStream,
};
use csr_core::world::{generate_scene, Scene};

use crate::config::RunConfig;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

// ---------------------------------------------------------------- gen-scenes

#[derive(Serialize)]
struct SceneManifest {
    version: u32,
    count: usize,
    seeds: Vec<u64>,
    files: Vec<String>,
}

pub fn gen_scenes(cfg: &RunConfig) -> Result<usize> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut seeds = Vec::new();
    let mut files = Vec::new();
    for i in 0..cfg.episodes {
        let seed = cfg.seed.wrapping_add(i as u64);
        let scene = generate_scene(&cfg.scene, seed)?;
        let name = format!("scene-{i:04}.json");
        std::fs::write(cfg.out.join(&name), scene.to_json() + "\n")?;
        seeds.push(seed);
        files.push(name);
    }
    write_json(
        &cfg.out.join("manifest.json"),
        &SceneManifest {
            version: 1,
            count: cfg.episodes,
            seeds,
            files,
        },
    )?;
    Ok(0)
}

// ----------------------------------------------------------------- rearrange

const ABLATION_ROWS: [(&str, bool, bool); 4] = [
    ("ours", false, true),
    ("gt-match", true, true),
    ("full-coverage", false, false),
    ("gt-match-full", true, false),
];

enum EpisodeOutcome {
    Ok(EpisodeMetrics),
    Error(String),
    Panic,
}

#[derive(Serialize)]
struct RearrangeSummaryRow {
    row: String,
    sigma: f64,
    episodes: usize,
    completed: usize,
    success_pct: f64,
    fixed_strict_pct: f64,
    energy_ratio_mean: f64,
}

pub fn rearrange(cfg: &RunConfig) -> Result<usize> {
    let jobs: Vec<(&str, bool, bool, f64, usize)> = cfg
        .sigmas
        .iter()
        .flat_map(|&sigma| {
            ABLATION_ROWS.iter().flat_map(move |&(name, gt, heur)| {
                (0..cfg.episodes).map(move |e| (name, gt, heur, sigma, e))
            })
        })
        .collect();

    let pool = thread_pool(cfg.workers)?;
    let outcomes: Vec<EpisodeOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(_, gt_matching, heuristic_trajectory, sigma, episode)| {
                let episode_cfg = EpisodeConfig {
                    scene: cfg.scene,
                    shuffle_k: cfg.shuffle_k,
                    encoder: cfg.encoder_at(sigma),
                    thresholds: cfg.thresholds,
                    gt_matching,
                    gt_boxes: true,
                    heuristic_trajectory,
                    seed: cfg.seed.wrapping_add(episode as u64),
                };
                match catch_unwind(AssertUnwindSafe(|| run_rearrangement(&episode_cfg))) {
                    Ok(Ok(m)) => EpisodeOutcome::Ok(m),
                    Ok(Err(e)) => EpisodeOutcome::Error(e.to_string()),
                    Err(_) => EpisodeOutcome::Panic,
                }
            })
            .collect()
    });

    std::fs::create_dir_all(&cfg.out)?;
    let mut csv = csv::Writer::from_path(cfg.out.join("episodes.csv"))?;
    csv.write_record([
        "row",
        "sigma",
        "episode",
        "status",
        "success",
        "fixed_strict",
        "energy_ratio",
        "action_count",
        "detection_exact",
    ])?;
    let mut failures = 0usize;
    for ((name, _, _, sigma, episode), outcome) in jobs.iter().zip(&outcomes) {
        let (status, fields) = match outcome {
            EpisodeOutcome::Ok(m) => (
                "ok",
                [
                    m.success.to_string(),
                    format!("{:.6}", m.fixed_strict),
                    format!("{:.6}", m.energy_ratio),
                    m.action_count.to_string(),
                    (m.moved_detected == m.moved_truth).to_string(),
                ],
            ),
            EpisodeOutcome::Error(msg) => {
                eprintln!("episode {episode} ({name}, sigma {sigma}) failed: {msg}");
                ("error", Default::default())
            }
            EpisodeOutcome::Panic => ("panic", Default::default()),
        };
        if !matches!(outcome, EpisodeOutcome::Ok(_)) {
            failures += 1;
        }
        let mut record = vec![
            name.to_string(),
            format!("{sigma}"),
            episode.to_string(),
            status.to_string(),
        ];
        record.extend(fields);
        csv.write_record(&record)?;
    }
    csv.flush()?;

    let mut summary = Vec::new();
    for &sigma in &cfg.sigmas {
        for &(name, _, _) in &ABLATION_ROWS {
            let metrics: Vec<&EpisodeMetrics> = jobs
                .iter()
                .zip(&outcomes)
                .filter(|((n, _, _, s, _), _)| *n == name && *s == sigma)
                .filter_map(|(_, o)| match o {
                    EpisodeOutcome::Ok(m) => Some(m),
                    _ => None,
                })
                .collect();
            summary.push(RearrangeSummaryRow {
                row: name.to_string(),
                sigma,
                episodes: cfg.episodes,
                completed: metrics.len(),
                success_pct: 100.0 * mean(metrics.iter().map(|m| m.success as f64)),
                fixed_strict_pct: 100.0 * mean(metrics.iter().map(|m| m.fixed_strict)),
                energy_ratio_mean: mean(metrics.iter().map(|m| m.energy_ratio)),
            });
        }
    }
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(failures)
}

// --------------------------------------------------------------------- track

/// External stream format: JSON lines, one frame per line.
#[derive(Deserialize)]
struct FrameLine {
    detections: Vec<DetectionLine>,
}

#[derive(Deserialize)]
struct DetectionLine {
    feature: Vec<f64>,
    #[serde(default)]
    label: Option<usize>,
}

pub fn load_track_stream_jsonl(path: &Path) -> Result<TrackStream> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading stream {}", path.display()))?;
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame: FrameLine = serde_json::from_str(line)
            .with_context(|| format!("stream line {}", lineno + 1))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, det) in frame.detections.into_iter().enumerate() {
            features.push(
                FeatureVec::normalize(&det.feature)
                    .map_err(|e| anyhow::anyhow!("stream line {}: {e}", lineno + 1))?,
            );
            labels.push(det.label.unwrap_or(i));
        }
        frames.push(TrackFrame { features, labels });
    }
    Ok(TrackStream { frames })
}

#[derive(Serialize)]
struct TrackSummaryRow {
    sigma: Option<f64>,
    streams: usize,
    mean_ari_update: f64,
    mean_ari_no_update: f64,
}

pub fn track(cfg: &RunConfig, external: Option<&Path>) -> Result<usize> {
    if let Some(path) = external {
        let stream = load_track_stream_jsonl(path)?;
        let (_, ari_update) = run_tracking(&stream, cfg.thresholds.node, true)?;
        let (_, ari_fixed) = run_tracking(&stream, cfg.thresholds.node, false)?;
        std::fs::create_dir_all(&cfg.out)?;
        write_json(
            &cfg.out.join("track.json"),
            &vec![TrackSummaryRow {
                sigma: None,
                streams: 1,
                mean_ari_update: ari_update,
                mean_ari_no_update: ari_fixed,
            }],
        )?;
        return Ok(0);
    }

    let pool = thread_pool(cfg.workers)?;
    let mut summary = Vec::new();
    let mut failures = 0usize;
    for &sigma in &cfg.sigmas {
        let results: Vec<Option<(f64, f64)>> = pool.install(|| {
            (0..cfg.episodes)
                .into_par_iter()
                .map(|i| {
                    let seed = cfg.seed.wrapping_add(i as u64);
                    let stream =
                        make_track_stream(cfg.track_objects, cfg.track_frames, sigma, seed)
                            .ok()?;
                    let update = run_tracking(&stream, cfg.thresholds.node, true).ok()?.1;
                    let fixed = run_tracking(&stream, cfg.thresholds.node, false).ok()?.1;
                    Some((update, fixed))
                })
                .collect()
        });
        failures += results.iter().filter(|r| r.is_none()).count();
        let done: Vec<(f64, f64)> = results.into_iter().flatten().collect();
        summary.push(TrackSummaryRow {
            sigma: Some(sigma),
            streams: done.len(),
            mean_ari_update: mean(done.iter().map(|r| r.0)),
            mean_ari_no_update: mean(done.iter().map(|r| r.1)),
        });
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("track.json"), &summary)?;
    Ok(failures)
}

// ------------------------------------------------------------------ retrieve

#[derive(Serialize)]
struct RetrieveSummaryRow {
    sigma: f64,
    triplets: usize,
    accuracy_pct: f64,
    baseline_pct: f64,
}

pub fn retrieve(cfg: &RunConfig) -> Result<usize> {
    let baseline_triplets =
        make_random_triplets(cfg.triplets_per_sigma, cfg.encoder.dim, cfg.seed ^ 0x626c);
    let baseline_pct = 100.0 * run_retrieval(&baseline_triplets)?;
    let mut summary = Vec::new();
    for &sigma in &cfg.sigmas {
        let triplets = make_retrieval_triplets(cfg.triplets_per_sigma, sigma, cfg.seed)?;
        summary.push(RetrieveSummaryRow {
            sigma,
            triplets: triplets.len(),
            accuracy_pct: 100.0 * run_retrieval(&triplets)?,
            baseline_pct,
        });
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("retrieve.json"), &summary)?;
    Ok(0)
}

// --------------------------------------------------------------------- probe

#[derive(Serialize)]
struct ProbeSummaryRow {
    sigma: f64,
    support_accuracy_pct: f64,
    sibling_accuracy_pct: f64,
    mean_accuracy_pct: f64,
}

pub fn probe(cfg: &RunConfig) -> Result<usize> {
    let scenes: Vec<Scene> = (0..cfg.episodes.max(2))
        .map(|i| generate_scene(&cfg.scene, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<_, _>>()?;
    let mut summary = Vec::new();
    for &sigma in &cfg.sigmas {
        let encoder = Encoder::new(cfg.encoder_at(sigma))?;
        let mut accs = [0.0; 2];
        for (slot, task) in [ProbeTask::Support, ProbeTask::Sibling].into_iter().enumerate() {
            let dataset = build_probe_dataset(&scenes, task, &encoder, cfg.seed)?;
            let (_, _, test_acc) = dataset.train_and_eval(cfg.probe_lr, cfg.probe_epochs)?;
            accs[slot] = 100.0 * test_acc;
        }
        summary.push(ProbeSummaryRow {
            sigma,
            support_accuracy_pct: accs[0],
            sibling_accuracy_pct: accs[1],
            mean_accuracy_pct: (accs[0] + accs[1]) / 2.0,
        });
    }
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join("probe.json"), &summary)?;
    Ok(0)
}

//! Run configuration: an optional TOML file merged with command-line
//! overrides (flags win). Unknown keys are rejected before anything runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use csr_core::encoder::EncoderConfig;
use csr_core::pipeline::Thresholds;
use csr_core::world::SceneConfig;

/// Flags shared by every subcommand. File values fill in whatever the
/// flags leave unset.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for episode-level parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// View-noise level; repeat the flag to sweep several values.
    #[arg(long = "sigma")]
    pub sigma: Vec<f64>,
    /// Episodes (or scenes/streams/triplet batches) per configuration.
    #[arg(long)]
    pub episodes: Option<usize>,
}

/// File-configurable knobs. Sub-tables, when present, must be complete.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scene: Option<SceneConfig>,
    pub encoder: Option<EncoderConfig>,
    pub thresholds: Option<Thresholds>,
    pub shuffle_k: Option<usize>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub workers: Option<usize>,
    pub sigmas: Option<Vec<f64>>,
    pub track_objects: Option<u32>,
    pub track_frames: Option<usize>,
    pub triplets_per_sigma: Option<usize>,
    pub probe_lr: Option<f64>,
    pub probe_epochs: Option<usize>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub encoder: EncoderConfig,
    pub thresholds: Thresholds,
    pub shuffle_k: usize,
    pub seed: u64,
    pub episodes: usize,
    pub workers: usize,
    pub sigmas: Vec<f64>,
    pub track_objects: u32,
    pub track_frames: usize,
    pub triplets_per_sigma: usize,
    pub probe_lr: f64,
    pub probe_epochs: usize,
    pub out: PathBuf,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig> {
        let file = match &args.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let sigmas = if !args.sigma.is_empty() {
            args.sigma.clone()
        } else {
            file.sigmas.unwrap_or_else(|| vec![0.0])
        };
        let cfg = RunConfig {
            scene: file.scene.unwrap_or_default(),
            encoder: file.encoder.unwrap_or_default(),
            thresholds: file.thresholds.unwrap_or_default(),
            shuffle_k: file.shuffle_k.unwrap_or(3),
            seed: args.seed.or(file.seed).unwrap_or(0),
            episodes: args.episodes.or(file.episodes).unwrap_or(20),
            workers: args.workers.or(file.workers).unwrap_or(1),
            sigmas,
            track_objects: file.track_objects.unwrap_or(6),
            track_frames: file.track_frames.unwrap_or(12),
            triplets_per_sigma: file.triplets_per_sigma.unwrap_or(1000),
            probe_lr: file.probe_lr.unwrap_or(0.5),
            probe_epochs: file.probe_epochs.unwrap_or(400),
            out: args.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.thresholds
            .validate()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if !(1..=5).contains(&self.shuffle_k) {
            bail!("shuffle_k = {} outside [1, 5]", self.shuffle_k);
        }
        if self.workers == 0 {
            bail!("workers must be positive");
        }
        if let Some(s) = self
            .sigmas
            .iter()
            .find(|s| !s.is_finite() || **s < 0.0)
        {
            bail!("sigma {s} must be a non-negative number");
        }
        if self.probe_lr <= 0.0 || !self.probe_lr.is_finite() {
            bail!("probe_lr must be positive");
        }
        if self.track_objects == 0 || self.track_frames == 0 {
            bail!("track_objects and track_frames must be positive");
        }
        Ok(())
    }

    /// Encoder parameters at one point of the sigma sweep.
    pub fn encoder_at(&self, sigma: f64) -> EncoderConfig {
        EncoderConfig {
            sigma,
            ..self.encoder
        }
    }
}

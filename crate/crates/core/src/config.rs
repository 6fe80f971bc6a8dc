//! Run configuration: one JSON document covering every module's tunables,
//! with machine-readable provenance (which defaults are paper-stated values
//! and which are toy-scale analogs) and a content digest for reproducibility.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::AeConfig;
use crate::degrade::DegradationConfig;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::history::TemporalWeights;
use crate::model::ModelConfig;
use crate::scene::ScenePreset;

/// How the boundary weights are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Multiply the per-frame denoising loss of the first three predicted
    /// frames (default).
    LossWeight,
    /// Blend the first three predicted latents toward the anchor at
    /// inference time (the alternative reading; no fidelity claim).
    LatentBlend,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,

    // World geometry.
    pub height: usize,
    pub width: usize,
    pub clip_frames: usize,
    pub track_grid: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub color_from_depth: bool,

    // Autoencoder.
    pub ae_hidden: usize,
    pub ae_latent_channels: usize,
    pub ae_epochs: usize,
    pub ae_lr: f32,

    // Diffusion.
    pub t_steps: usize,
    pub beta_start: f32,
    pub beta_end: f32,
    pub sample_steps: usize,

    // Denoiser.
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub n_controlled: usize,
    pub ff_mult: usize,

    // Control degradations.
    pub feature_alpha: f32,
    pub data_beta: f32,
    pub scale_fusion_n: usize,

    // Input-frame degradation.
    pub degrade_p_apply: f32,
    pub degrade_p_encoding: f32,
    pub degrade_k_max: usize,
    pub degrade_t_set: Vec<usize>,
    pub severity_decay: f64,

    // History context.
    pub n_history_max: usize,
    pub lambda_deg: f32,
    pub lambda_gt: f32,
    pub lambda_cons: f32,
    pub boundary_mode: BoundaryMode,

    // Training.
    pub base_iterations: usize,
    pub stage1_iterations: usize,
    pub stage2_iterations: usize,
    pub stage3_iterations: usize,
    pub base_lr: f32,
    pub stage12_lr: f32,
    pub stage3_lr: f32,
    pub stage2_warmup: usize,
    pub checkpoint_every: usize,

    // Rollout / evaluation.
    pub overlap: usize,
    pub percentile_lo: f64,
    pub percentile_hi: f64,
    pub eval_windows: usize,
    pub eval_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            height: 32,
            width: 32,
            clip_frames: 9,
            track_grid: 7,
            min_shapes: 2,
            max_shapes: 3,
            color_from_depth: true,
            ae_hidden: 32,
            ae_latent_channels: 4,
            ae_epochs: 80,
            ae_lr: 3e-3,
            t_steps: 50,
            beta_start: 0.002,
            beta_end: 0.25,
            sample_steps: 25,
            d_model: 64,
            n_heads: 4,
            n_blocks: 4,
            n_controlled: 2,
            ff_mult: 2,
            feature_alpha: 0.15,
            data_beta: 0.10,
            scale_fusion_n: 5,
            degrade_p_apply: 0.2,
            degrade_p_encoding: 0.2,
            degrade_k_max: 10,
            degrade_t_set: vec![1, 5, 8, 10, 12],
            severity_decay: 0.7,
            n_history_max: 4,
            lambda_deg: 0.2,
            lambda_gt: 0.15,
            lambda_cons: 0.5,
            boundary_mode: BoundaryMode::LossWeight,
            base_iterations: 800,
            stage1_iterations: 300,
            stage2_iterations: 100,
            stage3_iterations: 200,
            base_lr: 3e-4,
            stage12_lr: 1e-4,
            stage3_lr: 5e-5,
            stage2_warmup: 67,
            checkpoint_every: 50,
            overlap: 1,
            percentile_lo: 5.0,
            percentile_hi: 95.0,
            eval_windows: 8,
            eval_seeds: 5,
        }
    }
}

/// Provenance label for a config default.
pub const PROVENANCE_PAPER: &str = "paper";
pub const PROVENANCE_TOY: &str = "toy";

/// Which defaults are paper-stated values and which are toy-scale analogs.
pub fn provenance() -> BTreeMap<&'static str, &'static str> {
    let mut m = BTreeMap::new();
    for key in [
        "seed",
        "height",
        "width",
        "clip_frames",
        "track_grid",
        "min_shapes",
        "max_shapes",
        "color_from_depth",
        "ae_hidden",
        "ae_latent_channels",
        "ae_epochs",
        "ae_lr",
        "t_steps",
        "beta_start",
        "beta_end",
        "sample_steps",
        "d_model",
        "n_heads",
        "n_blocks",
        "n_controlled",
        "ff_mult",
        "severity_decay",
        "n_history_max",
        "boundary_mode",
        "base_iterations",
        "stage1_iterations",
        "stage2_iterations",
        "stage3_iterations",
        "base_lr",
        "stage12_lr",
        "stage3_lr",
        "stage2_warmup",
        "checkpoint_every",
        "eval_windows",
        "eval_seeds",
    ] {
        m.insert(key, PROVENANCE_TOY);
    }
    for key in [
        "feature_alpha",     // 15%
        "data_beta",         // 10%
        "scale_fusion_n",    // n = 5
        "degrade_p_apply",   // 20%
        "degrade_p_encoding",// 20/80 split
        "degrade_k_max",     // K in [0, 10]
        "degrade_t_set",     // {1, 5, 8, 10, 12}
        "lambda_deg",        // 0.2
        "lambda_gt",         // 0.15
        "lambda_cons",       // 0.5
        "overlap",           // one-frame overlap
        "percentile_lo",     // 5th percentile
        "percentile_hi",     // 95th percentile
    ] {
        m.insert(key, PROVENANCE_PAPER);
    }
    m
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.degradation_config().validate()?;
        self.model_config().validate()?;
        if self.clip_frames <= self.overlap {
            return Err(Error::Config("clip_frames must exceed overlap".into()));
        }
        if self.stage2_warmup >= self.stage2_iterations {
            return Err(Error::Config("stage2_warmup must be below stage2_iterations".into()));
        }
        if !(0.0..self.percentile_hi).contains(&self.percentile_lo) || self.percentile_hi > 100.0 {
            return Err(Error::Config("percentiles must satisfy 0 <= lo < hi <= 100".into()));
        }
        if self.track_grid * self.track_grid == 0 {
            return Err(Error::Config("track grid must be non-empty".into()));
        }
        Ok(())
    }

    /// Training scenes carry the history pool in front of the clip window.
    pub fn scene_frames(&self) -> usize {
        self.clip_frames + self.n_history_max
    }

    pub fn num_points(&self) -> usize {
        self.track_grid * self.track_grid
    }

    pub fn scene_preset(&self) -> ScenePreset {
        ScenePreset {
            num_frames: self.scene_frames(),
            height: self.height,
            width: self.width,
            track_grid: self.track_grid,
            min_shapes: self.min_shapes,
            max_shapes: self.max_shapes,
            color_from_depth: self.color_from_depth,
        }
    }

    pub fn ae_config(&self) -> AeConfig {
        AeConfig {
            image_hw: self.height,
            in_channels: 3,
            hidden_channels: self.ae_hidden,
            latent_channels: self.ae_latent_channels,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            latent_channels: self.ae_latent_channels,
            latent_hw: self.height / 4,
            patch: self.height / 8,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_blocks: self.n_blocks,
            n_controlled: self.n_controlled,
            ff_mult: self.ff_mult,
            time_dim: self.d_model,
        }
    }

    pub fn degradation_config(&self) -> DegradationConfig {
        DegradationConfig {
            p_apply: self.degrade_p_apply,
            p_encoding: self.degrade_p_encoding,
            k_max: self.degrade_k_max,
            t_set: self.degrade_t_set.clone(),
            severity_decay: self.severity_decay,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
    }

    pub fn temporal_weights(&self) -> TemporalWeights {
        TemporalWeights {
            lambda_deg: self.lambda_deg,
            lambda_gt: self.lambda_gt,
            lambda_cons: self.lambda_cons,
        }
    }

    /// FNV-1a 64 digest of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:016x}", crate::fsutil::fnv1a64(&json))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = crate::fsutil::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_json(path, self)
    }

    /// Reproducibility record written next to every run's artifacts.
    pub fn run_metadata(&self, command: &str) -> serde_json::Value {
        let degradation = self.degradation_config();
        serde_json::json!({
            "command": command,
            "code_version": env!("CARGO_PKG_VERSION"),
            "config": self,
            "config_hash": self.config_hash(),
            "provenance": provenance(),
            "degradation_distribution": {
                "k_weights": degradation.k_weights(),
                "t_weights": degradation.t_weights(),
                "t_set": degradation.t_set,
            },
        })
    }
}

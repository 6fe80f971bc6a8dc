//! Tiny lossy per-frame autoencoder defining the latent space.
//!
//! Two stride-2 stages of linear patch maps with a SiLU between them; the
//! decoder mirrors the encoder. For 3x32x32 input frames the latent is
//! 4x8x8 per frame (no temporal mixing). Lossiness is the point: repeated
//! encode/decode round-trips degrade frames, which the degradation operator
//! relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Binding, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{AdamW, AdamWConfig, Checkpoint};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AeConfig {
    pub image_hw: usize,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub latent_channels: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig { image_hw: 32, in_channels: 3, hidden_channels: 32, latent_channels: 4 }
    }
}

impl AeConfig {
    /// Latent spatial side after the two stride-2 stages.
    pub fn latent_hw(&self) -> usize {
        self.image_hw / 4
    }

    pub fn latent_shape(&self, frames: usize) -> [usize; 4] {
        [frames, self.latent_channels, self.latent_hw(), self.latent_hw()]
    }
}

#[derive(Debug, Clone)]
pub struct AeParams {
    pub config: AeConfig,
    pub params: ParamSet,
    pub trained: bool,
}

fn uniform_init(rng: &mut Rng, rows: usize, cols: usize) -> Vec<f32> {
    let bound = 1.0 / (rows as f32).sqrt();
    (0..rows * cols).map(|_| rng.uniform_in(-bound, bound)).collect()
}

impl AeParams {
    pub fn init(config: AeConfig, rng: &mut Rng) -> AeParams {
        let mut rng = rng.stream("ae-init");
        let c = config.in_channels * 4; // 2x2 patches
        let h = config.hidden_channels;
        let h4 = h * 4;
        let z = config.latent_channels;
        let mut p = ParamSet::new();
        let mut linear = |p: &mut ParamSet, name: &str, rows: usize, cols: usize| {
            p.insert(&format!("{name}.w"), &[rows, cols], uniform_init(&mut rng, rows, cols));
            p.insert(&format!("{name}.b"), &[cols], vec![0.0; cols]);
        };
        // Each stage: patch linear + SiLU + channel-mixing linear.
        linear(&mut p, "enc1", c, h);
        linear(&mut p, "enc1m", h, h);
        linear(&mut p, "enc2", h4, h);
        linear(&mut p, "enc2m", h, z);
        linear(&mut p, "dec2", z, h);
        linear(&mut p, "dec2m", h, h4);
        linear(&mut p, "dec1", h, h);
        linear(&mut p, "dec1m", h, c);
        AeParams { config, params: p, trained: false }
    }

    fn ensure_trained(&self, op: &'static str) -> Result<()> {
        if !self.trained {
            return Err(Error::MissingPrerequisite(format!(
                "{op} requires a trained autoencoder (run train_ae first)"
            )));
        }
        Ok(())
    }

    /// [F, C, H, W] frames in [0,1] -> [F, C_z, h, w] latents.
    pub fn encode(&self, frames: &Tensor) -> Result<Tensor> {
        self.ensure_trained("encode")?;
        encode_with(&self.params.bind_frozen(), &self.config, frames)
    }

    /// Latents -> frames, clamped to [0, 1].
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.ensure_trained("decode")?;
        decode_raw_with(&self.params.bind_frozen(), &self.config, z)?.clamp(0.0, 1.0)
    }

    /// One full lossy round-trip.
    pub fn roundtrip(&self, frames: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(frames)?)
    }
}

fn check_frames(op: &'static str, cfg: &AeConfig, frames: &Tensor) -> Result<usize> {
    let s = frames.shape();
    if s.len() != 4 || s[1] != cfg.in_channels || s[2] != cfg.image_hw || s[3] != cfg.image_hw {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!(
                "{s:?}, expected [F, {}, {}, {}]",
                cfg.in_channels, cfg.image_hw, cfg.image_hw
            ),
        });
    }
    Ok(s[0])
}

fn linear(b: &Binding, name: &str, x: &Tensor) -> Result<Tensor> {
    x.matmul(b.get(&format!("{name}.w"))?)?.add(b.get(&format!("{name}.b"))?)
}

pub(crate) fn encode_with(b: &Binding, cfg: &AeConfig, frames: &Tensor) -> Result<Tensor> {
    let f = check_frames("encode", cfg, frames)?;
    let hw = cfg.image_hw;
    let (mid, lat) = (hw / 2, hw / 4);
    let x = frames.patchify(2)?; // [F*mid*mid, C*4]
    let x = linear(b, "enc1m", &linear(b, "enc1", &x)?.silu()?)?;
    let x = x.unpatchify(1, f, cfg.hidden_channels, mid, mid)?;
    let x = x.patchify(2)?; // [F*lat*lat, hidden*4]
    let x = linear(b, "enc2m", &linear(b, "enc2", &x)?.silu()?)?;
    x.unpatchify(1, f, cfg.latent_channels, lat, lat)
}

pub(crate) fn decode_raw_with(b: &Binding, cfg: &AeConfig, z: &Tensor) -> Result<Tensor> {
    let s = z.shape();
    let lat = cfg.latent_hw();
    if s.len() != 4 || s[1] != cfg.latent_channels || s[2] != lat || s[3] != lat {
        return Err(Error::ShapeMismatch {
            op: "decode",
            detail: format!("{s:?}, expected [F, {}, {lat}, {lat}]", cfg.latent_channels),
        });
    }
    let f = s[0];
    let mid = cfg.image_hw / 2;
    let x = z.patchify(1)?; // [F*lat*lat, z]
    let x = linear(b, "dec2m", &linear(b, "dec2", &x)?.silu()?)?;
    let x = x.unpatchify(2, f, cfg.hidden_channels, mid, mid)?;
    let x = x.patchify(1)?; // [F*mid*mid, hidden]
    let x = linear(b, "dec1m", &linear(b, "dec1", &x)?.silu()?)?;
    x.unpatchify(2, f, cfg.in_channels, cfg.image_hw, cfg.image_hw)
}

/// Per-epoch mean reconstruction loss over the training clips.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeTrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Train on per-clip RGB stacks. `epochs == 0` returns the initialized
/// parameters unchanged (and untrained). A non-finite loss aborts with a
/// diagnostic instead of continuing.
pub fn train_ae(
    clips: &[Tensor],
    config: AeConfig,
    epochs: usize,
    lr: f32,
    rng: &mut Rng,
) -> Result<(AeParams, AeTrainReport)> {
    if clips.is_empty() {
        return Err(Error::InvalidArgument { op: "train_ae", detail: "empty corpus".into() });
    }
    let mut ae = AeParams::init(config, rng);
    if epochs == 0 {
        return Ok((ae, AeTrainReport { epoch_losses: vec![] }));
    }
    let mut order_rng = rng.stream("ae-batch-order");
    let mut opt = AdamW::new();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        // Cosine decay from lr to lr/20.
        let progress = if epochs > 1 { epoch as f32 / (epochs - 1) as f32 } else { 0.0 };
        let lr_e = lr / 20.0
            + 0.5 * (lr - lr / 20.0) * (1.0 + (std::f32::consts::PI * progress).cos());
        let opt_cfg = AdamWConfig { lr: lr_e, weight_decay: 0.0, ..Default::default() };
        let mut order: Vec<usize> = (0..clips.len()).collect();
        for i in (1..order.len()).rev() {
            let j = order_rng.below((i + 1) as u64) as usize;
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0f64;
        for &ci in &order {
            let binding = ae.params.bind(|_| true);
            let z = encode_with(&binding, &ae.config, &clips[ci])?;
            let recon = decode_raw_with(&binding, &ae.config, &z)?;
            let loss = recon.sub(&clips[ci])?.sqr()?.mean_all()?;
            let value = loss.item()? as f64;
            if !value.is_finite() {
                return Err(Error::Diverged { stage: 0, iteration: epoch, last_good: None });
            }
            epoch_loss += value;
            let grads = loss.backward()?;
            opt.step(&opt_cfg, &mut ae.params, &binding, &grads)?;
        }
        epoch_losses.push(epoch_loss / clips.len() as f64);
    }
    ae.trained = true;
    Ok((ae, AeTrainReport { epoch_losses }))
}

// ── Checkpoint plumbing ──────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AeMeta {
    config: AeConfig,
    trained: bool,
}

pub const AE_CHECKPOINT_KIND: &str = "autoencoder";

pub fn save_ae(path: &std::path::Path, ae: &AeParams) -> Result<()> {
    let meta = serde_json::to_value(AeMeta { config: ae.config, trained: ae.trained })
        .expect("meta serializes");
    let ckpt = Checkpoint::new(AE_CHECKPOINT_KIND, meta, ae.params.clone());
    crate::train::save_checkpoint(path, &ckpt)
}

pub fn load_ae(path: &std::path::Path) -> Result<AeParams> {
    let ckpt = crate::train::load_checkpoint(path)?;
    if ckpt.kind != AE_CHECKPOINT_KIND {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: format!("checkpoint kind {} is not an autoencoder", ckpt.kind),
        });
    }
    let meta: AeMeta = ckpt.meta_as()?;
    Ok(AeParams { config: meta.config, params: ckpt.params, trained: meta.trained })
}

//! The stochastic input-frame degradation operator: autoencoder round-trips
//! (encoding path) or noise-then-denoise through a frozen diffusion snapshot
//! (generation path), with severity-weighted sampling that favors milder
//! degradations.

use serde::{Deserialize, Serialize};

use crate::autoencoder::AeParams;
use crate::diffusion::{add_noise, denoise, DenoiseModel, NoiseSchedule};
use crate::error::{Error, Result};
use crate::history::ConditionPack;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Paper constraint on the generation-path timestep.
pub const GEN_T_LIMIT: usize = 15;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DegradationConfig {
    /// Probability that any degradation is applied at all.
    pub p_apply: f32,
    /// Within an application, probability of the encoding path (the
    /// generation path gets the rest).
    pub p_encoding: f32,
    /// Encoding path: round-trip count drawn from [0, k_max].
    pub k_max: usize,
    /// Generation path: allowed timesteps, each < GEN_T_LIMIT.
    pub t_set: Vec<usize>,
    /// Geometric decay of the severity weights: w(K) ∝ decay^K and
    /// w(t) ∝ decay^rank, so milder degradations are sampled more often.
    pub severity_decay: f64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            p_apply: 0.2,
            p_encoding: 0.2,
            k_max: 10,
            t_set: vec![1, 5, 8, 10, 12],
            severity_decay: 0.7,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_apply", self.p_apply), ("p_encoding", self.p_encoding)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument {
                    op: "degradation_config",
                    detail: format!("{name} = {p} outside [0, 1]"),
                });
            }
        }
        if self.t_set.is_empty() || self.t_set.iter().any(|t| *t >= GEN_T_LIMIT) {
            return Err(Error::InvalidArgument {
                op: "degradation_config",
                detail: format!("t_set {:?} must be non-empty with all t < {GEN_T_LIMIT}", self.t_set),
            });
        }
        if !(0.0 < self.severity_decay && self.severity_decay <= 1.0) {
            return Err(Error::InvalidArgument {
                op: "degradation_config",
                detail: format!("severity_decay {} outside (0, 1]", self.severity_decay),
            });
        }
        Ok(())
    }

    /// Published sampling weights over K = 0..=k_max.
    pub fn k_weights(&self) -> Vec<f64> {
        (0..=self.k_max).map(|k| self.severity_decay.powi(k as i32)).collect()
    }

    /// Published sampling weights over the ordered t_set.
    pub fn t_weights(&self) -> Vec<f64> {
        let mut ts = self.t_set.clone();
        ts.sort_unstable();
        (0..ts.len()).map(|rank| self.severity_decay.powi(rank as i32)).collect()
    }

    fn sorted_t_set(&self) -> Vec<usize> {
        let mut ts = self.t_set.clone();
        ts.sort_unstable();
        ts
    }
}

/// One materialized draw of the degradation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DegradationChoice {
    None,
    Encoding { k: usize },
    Generation { t: usize },
}

impl DegradationChoice {
    pub fn kind_label(&self) -> &'static str {
        match self {
            DegradationChoice::None => "none",
            DegradationChoice::Encoding { .. } => "encoding",
            DegradationChoice::Generation { .. } => "generation",
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, DegradationChoice::None)
    }
}

/// Sample a degradation with the apply probability scaled by `ramp`
/// (warmup: 0 disables, 1 is the configured probability).
pub fn sample_degradation_scaled(
    cfg: &DegradationConfig,
    ramp: f32,
    rng: &mut Rng,
) -> DegradationChoice {
    if !rng.coin(cfg.p_apply * ramp.clamp(0.0, 1.0)) {
        return DegradationChoice::None;
    }
    if rng.coin(cfg.p_encoding) {
        let k = rng.weighted(&cfg.k_weights());
        DegradationChoice::Encoding { k }
    } else {
        let ts = cfg.sorted_t_set();
        let idx = rng.weighted(&cfg.t_weights());
        DegradationChoice::Generation { t: ts[idx] }
    }
}

pub fn sample_degradation(cfg: &DegradationConfig, rng: &mut Rng) -> DegradationChoice {
    sample_degradation_scaled(cfg, 1.0, rng)
}

/// (D∘E)^K: K autoencoder round-trips. K = 0 is the identity.
pub fn encode_degrade(ae: &AeParams, frames: &Tensor, k: usize) -> Result<Tensor> {
    let mut out = frames.detach();
    for _ in 0..k {
        out = ae.roundtrip(&out)?;
    }
    Ok(out)
}

/// Noise the latent at timestep `t` and restore it through the frozen
/// denoiser, then decode. The restoration conditions on the input's own
/// first frame with zero controls and no history slots.
pub fn gen_degrade(
    ae: &AeParams,
    schedule: &NoiseSchedule,
    model: &dyn DenoiseModel,
    frames: &Tensor,
    t: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    if t >= GEN_T_LIMIT {
        return Err(Error::InvalidArgument {
            op: "gen_degrade",
            detail: format!("t = {t} must be < {GEN_T_LIMIT}"),
        });
    }
    let z = ae.encode(frames)?;
    let eps = Tensor::randn(z.shape(), rng);
    let z_t = add_noise(schedule, &z, t, &eps)?;
    let zero_controls = Tensor::zeros(z.shape());
    let pack = ConditionPack::for_inference(
        z.narrow(0, 0, 1)?,
        None,
        0,
        zero_controls.clone(),
        zero_controls,
    )?;
    let restored = denoise(model, &z_t, t, t.max(1), &pack, schedule)?;
    ae.decode(&restored)
}

/// Bundle of everything one degradation application needs.
pub struct Degrader<'a> {
    pub ae: &'a AeParams,
    pub schedule: &'a NoiseSchedule,
    pub cfg: &'a DegradationConfig,
    /// Frozen denoiser snapshot for the generation path (the stage-1
    /// checkpoint during stage-2/3 training).
    pub frozen: Option<&'a dyn DenoiseModel>,
}

impl Degrader<'_> {
    /// Sample and apply one degradation to a frame stack.
    pub fn apply(
        &self,
        frames: &Tensor,
        ramp: f32,
        rng: &mut Rng,
    ) -> Result<(Tensor, DegradationChoice)> {
        let choice = sample_degradation_scaled(self.cfg, ramp, rng);
        let out = match choice {
            DegradationChoice::None => frames.detach(),
            DegradationChoice::Encoding { k } => encode_degrade(self.ae, frames, k)?,
            DegradationChoice::Generation { t } => {
                let model = self.frozen.ok_or_else(|| {
                    Error::MissingPrerequisite(
                        "frozen denoiser snapshot for generation degradation".into(),
                    )
                })?;
                gen_degrade(self.ae, self.schedule, model, frames, t, rng)?
            }
        };
        Ok((out, choice))
    }
}

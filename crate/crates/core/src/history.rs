//! History-context conditioning and the boundary-frame regularization
//! losses with their frequency-split operators.

use serde::{Deserialize, Serialize};

use crate::degrade::{DegradationChoice, Degrader};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Everything one denoising call is conditioned on.
///
/// The token layout always reserves `n_history_max` history slots; when
/// `n_history < n_history_max` the leading slots are zero with mask 0, so a
/// pack with no history is identical to pre-history-stage conditioning.
/// History latents fill the slots right-aligned (most recent adjacent to the
/// clip start).
#[derive(Debug, Clone)]
pub struct ConditionPack {
    /// First-frame latent z_I, [1, C_z, h, w]. During training this is the
    /// encoding of the (possibly degraded) first frame.
    pub z_first: Tensor,
    /// Degraded history latents fed to the model, [n_history, C_z, h, w].
    pub hist_degraded: Option<Tensor>,
    /// Clean history latents kept as training loss targets.
    pub hist_clean: Option<Tensor>,
    /// All-ones over filled history slots, zeros elsewhere; length
    /// `n_history_max`.
    pub history_mask: Vec<f32>,
    pub n_history: usize,
    pub n_history_max: usize,
    /// Dense control latent c_D, [F, C_z, h, w].
    pub dense: Tensor,
    /// Sparse control latent c_P, [F, C_z, h, w].
    pub sparse: Tensor,
    /// λ applied to the dense branch features (1.0 when inactive).
    pub feature_scale: f32,
}

impl ConditionPack {
    pub fn validate(&self) -> Result<()> {
        if self.n_history > self.n_history_max {
            return Err(Error::InvalidArgument {
                op: "condition_pack",
                detail: format!("n_history {} > max {}", self.n_history, self.n_history_max),
            });
        }
        if self.history_mask.len() != self.n_history_max {
            return Err(Error::InvalidArgument {
                op: "condition_pack",
                detail: "history mask length must equal the history slot count".into(),
            });
        }
        if (self.n_history > 0) != self.hist_degraded.is_some() {
            return Err(Error::InvalidArgument {
                op: "condition_pack",
                detail: "history latents present iff n_history > 0".into(),
            });
        }
        for (i, m) in self.history_mask.iter().enumerate() {
            let filled = i >= self.n_history_max - self.n_history;
            let expect = if filled { 1.0 } else { 0.0 };
            if *m != expect {
                return Err(Error::InvalidArgument {
                    op: "condition_pack",
                    detail: format!("mask[{i}] = {m}, expected {expect}"),
                });
            }
        }
        Ok(())
    }

    fn mask_for(n_history: usize, n_history_max: usize) -> Vec<f32> {
        (0..n_history_max)
            .map(|i| if i >= n_history_max - n_history { 1.0 } else { 0.0 })
            .collect()
    }

    /// Inference-time pack: undegraded conditioning, history = the most
    /// recent `<= n_history_max` already-generated latents.
    pub fn for_inference(
        z_first: Tensor,
        history_latents: Option<Tensor>,
        n_history_max: usize,
        dense: Tensor,
        sparse: Tensor,
    ) -> Result<ConditionPack> {
        let n_history = history_latents.as_ref().map_or(0, |h| h.shape()[0]);
        if n_history > n_history_max {
            return Err(Error::InvalidArgument {
                op: "condition_pack",
                detail: format!("{n_history} history latents exceed {n_history_max} slots"),
            });
        }
        let pack = ConditionPack {
            z_first,
            hist_clean: history_latents.clone(),
            hist_degraded: history_latents,
            history_mask: Self::mask_for(n_history, n_history_max),
            n_history,
            n_history_max,
            dense,
            sparse,
            feature_scale: 1.0,
        };
        pack.validate()?;
        Ok(pack)
    }

    #[cfg(test)]
    pub(crate) fn empty_for_tests() -> ConditionPack {
        ConditionPack {
            z_first: Tensor::zeros(&[1, 1, 1, 1]),
            hist_degraded: None,
            hist_clean: None,
            history_mask: vec![],
            n_history: 0,
            n_history_max: 0,
            dense: Tensor::zeros(&[1, 1, 1, 1]),
            sparse: Tensor::zeros(&[1, 1, 1, 1]),
            feature_scale: 1.0,
        }
    }
}

/// Knobs for training-time pack assembly.
#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    /// Apply the degradation operator to the first frame (stages 2-3).
    pub degrade_first: bool,
    /// Apply the degradation operator to history frames (stage 3).
    pub degrade_history: bool,
    /// Warmup ramp multiplier in [0, 1] on the apply probability.
    pub ramp: f32,
}

#[derive(Debug, Clone)]
pub struct AssembleOutcome {
    pub pack: ConditionPack,
    pub first_choice: DegradationChoice,
    pub history_choice: DegradationChoice,
}

/// Build a training pack: draw N_H uniformly from [0, n_history_max],
/// degrade first/history frames through the degradation operator, and
/// encode everything into latents.
pub fn assemble_condition(
    degrader: &Degrader<'_>,
    first_frame: &Tensor,
    history_pool: Option<&Tensor>,
    dense: Tensor,
    sparse: Tensor,
    n_history_max: usize,
    opts: &AssembleOptions,
    rng: &mut Rng,
) -> Result<AssembleOutcome> {
    let pool_len = history_pool.map_or(0, |h| h.shape()[0]);
    let n_history = if n_history_max == 0 || history_pool.is_none() {
        0
    } else {
        let upper = n_history_max.min(pool_len);
        rng.below((upper + 1) as u64) as usize
    };

    let (first_degraded, first_choice) = if opts.degrade_first {
        degrader.apply(first_frame, opts.ramp, rng)?
    } else {
        (first_frame.detach(), DegradationChoice::None)
    };
    let z_first = degrader.ae.encode(&first_degraded)?;

    let mut hist_clean = None;
    let mut hist_degraded = None;
    let mut history_choice = DegradationChoice::None;
    if n_history > 0 {
        let pool = history_pool.expect("n_history > 0 implies a pool");
        let segment = pool.narrow(0, pool_len - n_history, n_history)?;
        let degraded = if opts.degrade_history {
            let (d, choice) = degrader.apply(&segment, opts.ramp, rng)?;
            history_choice = choice;
            d
        } else {
            segment.detach()
        };
        hist_clean = Some(degrader.ae.encode(&segment)?);
        hist_degraded = Some(degrader.ae.encode(&degraded)?);
    }

    let pack = ConditionPack {
        z_first,
        hist_degraded,
        hist_clean,
        history_mask: ConditionPack::mask_for(n_history, n_history_max),
        n_history,
        n_history_max,
        dense,
        sparse,
        feature_scale: 1.0,
    };
    pack.validate()?;
    Ok(AssembleOutcome { pack, first_choice, history_choice })
}

// ── Frequency split ──────────────────────────────────────────────────

/// Low-pass = 3x3 spatial box blur per channel; high-pass = the residual
/// z - lp. The pair recomposes z to within one rounding of the residual
/// (the subtraction itself is the only lossy step).
pub fn freq_split(z: &Tensor) -> Result<(Tensor, Tensor)> {
    let lp = z.box_blur(3)?;
    let hp = z.sub(&lp)?;
    Ok((lp, hp))
}

// ── Temporal losses ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemporalWeights {
    pub lambda_deg: f32,
    pub lambda_gt: f32,
    pub lambda_cons: f32,
}

impl Default for TemporalWeights {
    fn default() -> Self {
        TemporalWeights { lambda_deg: 0.2, lambda_gt: 0.15, lambda_cons: 0.5 }
    }
}

/// The three boundary-frame losses and their weighted sum, kept as scalar
/// tensors so gradients flow to the prediction.
#[derive(Debug, Clone)]
pub struct TemporalLosses {
    pub cons: Tensor,
    pub deg: Tensor,
    pub gt: Tensor,
    pub temp: Tensor,
}

/// L_cons anchors the first predicted latent to the last history latent;
/// L_deg matches low frequencies of the degraded input; L_gt matches high
/// frequencies of the ground truth. All are mean-squared.
pub fn temporal_losses(
    pred_first: &Tensor,
    hist_last: &Tensor,
    degraded_first: &Tensor,
    gt_first: &Tensor,
    weights: &TemporalWeights,
) -> Result<TemporalLosses> {
    for (name, t) in [("hist_last", hist_last), ("degraded_first", degraded_first), ("gt_first", gt_first)] {
        if t.shape() != pred_first.shape() {
            return Err(Error::ShapeMismatch {
                op: "temporal_losses",
                detail: format!("{name}: {:?} vs {:?}", t.shape(), pred_first.shape()),
            });
        }
    }
    let cons = hist_last.sub(pred_first)?.sqr()?.mean_all()?;
    let (lp_deg, _) = freq_split(degraded_first)?;
    let (lp_pred, hp_pred) = freq_split(pred_first)?;
    let deg = lp_deg.sub(&lp_pred)?.sqr()?.mean_all()?;
    let (_, hp_gt) = freq_split(gt_first)?;
    let gt = hp_gt.sub(&hp_pred)?.sqr()?.mean_all()?;
    let temp = deg
        .mul_scalar(weights.lambda_deg)?
        .add(&gt.mul_scalar(weights.lambda_gt)?)?
        .add(&cons.mul_scalar(weights.lambda_cons)?)?;
    Ok(TemporalLosses { cons, deg, gt, temp })
}

// ── Boundary weighting ───────────────────────────────────────────────

pub const BOUNDARY_WEIGHTS: [f32; 3] = [0.05, 0.325, 0.757];

/// Multiplicative per-frame weights: the first three frames get the
/// boundary weights, later frames weight 1. Shorter inputs take the prefix.
pub fn boundary_weight_vector(frames: usize) -> Vec<f32> {
    (0..frames)
        .map(|f| if f < BOUNDARY_WEIGHTS.len() { BOUNDARY_WEIGHTS[f] } else { 1.0 })
        .collect()
}

/// Apply boundary weights to a per-frame loss list.
pub fn boundary_weights(per_frame_losses: &[f64]) -> Vec<f64> {
    per_frame_losses
        .iter()
        .zip(boundary_weight_vector(per_frame_losses.len()))
        .map(|(l, w)| l * w as f64)
        .collect()
}

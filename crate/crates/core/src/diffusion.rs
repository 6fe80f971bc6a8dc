//! Noise schedule, forward noising, the ε-prediction loss, and the
//! deterministic reverse sampler used both for generation and inside the
//! input-frame degradation operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::ConditionPack;
use crate::tensor::Tensor;

/// Linear-beta schedule with cumulative products. The `alpha_bar` values are
/// the noising coefficients: z_t = sqrt(alpha_bar_t) z0 + sqrt(1-alpha_bar_t) eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    pub beta: Vec<f32>,
    pub alpha_bar: Vec<f32>,
}

impl NoiseSchedule {
    pub fn from_betas(beta: Vec<f32>) -> Result<NoiseSchedule> {
        let t_steps = beta.len();
        let mut alpha_bar = Vec::with_capacity(t_steps);
        let mut acc = 1.0f64;
        for b in &beta {
            acc *= 1.0 - *b as f64;
            alpha_bar.push(acc as f32);
        }
        let s = NoiseSchedule { t_steps, beta, alpha_bar };
        s.validate()?;
        Ok(s)
    }

    pub fn linear(t_steps: usize, beta_start: f32, beta_end: f32) -> Result<NoiseSchedule> {
        if t_steps < 2 {
            return Err(Error::InvalidArgument {
                op: "noise_schedule",
                detail: "need at least 2 steps".into(),
            });
        }
        let beta = (0..t_steps)
            .map(|t| beta_start + (beta_end - beta_start) * t as f32 / (t_steps - 1) as f32)
            .collect();
        Self::from_betas(beta)
    }

    /// 50 steps, beta 0.002 -> 0.25: small enough for CPU sampling while the
    /// degradation timesteps {1, 5, 8, 10, 12} stay meaningfully distinct.
    pub fn toy_default() -> NoiseSchedule {
        Self::linear(50, 0.002, 0.25).expect("valid toy schedule")
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.beta {
            if !(*b > 0.0 && *b < 1.0) {
                return Err(Error::InvalidArgument {
                    op: "noise_schedule",
                    detail: format!("beta {b} outside (0, 1)"),
                });
            }
        }
        for w in self.alpha_bar.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::InvalidArgument {
                    op: "noise_schedule",
                    detail: "alpha_bar must be strictly decreasing".into(),
                });
            }
        }
        if self.alpha_bar[0] < 0.99 {
            return Err(Error::InvalidArgument {
                op: "noise_schedule",
                detail: format!("alpha_bar[0] = {} < 0.99", self.alpha_bar[0]),
            });
        }
        Ok(())
    }

    pub fn alpha_bar_at(&self, t: usize) -> Result<f32> {
        self.alpha_bar.get(t).copied().ok_or_else(|| Error::InvalidArgument {
            op: "alpha_bar_at",
            detail: format!("t {t} out of range [0, {})", self.t_steps),
        })
    }
}

/// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
pub fn add_noise(schedule: &NoiseSchedule, z0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
    if z0.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            op: "add_noise",
            detail: format!("{:?} vs {:?}", z0.shape(), eps.shape()),
        });
    }
    let ab = schedule.alpha_bar_at(t)?;
    z0.mul_scalar(ab.sqrt())?.add(&eps.mul_scalar((1.0 - ab).sqrt())?)
}

/// Anything that predicts ε from (z_t, t, conditioning).
pub trait DenoiseModel {
    fn predict_eps(&self, z_t: &Tensor, t: usize, pack: &ConditionPack) -> Result<Tensor>;
}

/// Mean-squared ε-prediction loss, differentiable through the model when the
/// caller passes a graph-connected prediction path.
pub fn eps_loss(
    model: &dyn DenoiseModel,
    pack: &ConditionPack,
    z0: &Tensor,
    t: usize,
    eps: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    let z_t = add_noise(schedule, z0, t, eps)?;
    let eps_hat = model.predict_eps(&z_t, t, pack)?;
    let loss = eps.sub(&eps_hat)?.sqr()?.mean_all()?;
    if !loss.item()?.is_finite() {
        return Err(Error::NonFinite { op: "eps_loss", detail: format!("t = {t}") });
    }
    Ok(loss)
}

/// Descending timestep path from `t_start` with at most `steps` model calls.
fn tau_path(t_start: usize, steps: usize) -> Vec<usize> {
    let steps = steps.min(t_start + 1).max(1);
    let mut taus = Vec::with_capacity(steps);
    for i in 0..steps {
        let tau = (t_start as f64 * (steps - i) as f64 / steps as f64).round() as usize;
        if taus.last() != Some(&tau) {
            taus.push(tau);
        }
    }
    taus
}

/// Deterministic DDIM-style reverse pass (no fresh noise is injected).
/// Returns the predicted clean latent; `t_start == 0` returns `z_start`.
pub fn denoise(
    model: &dyn DenoiseModel,
    z_start: &Tensor,
    t_start: usize,
    steps: usize,
    pack: &ConditionPack,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    if t_start >= schedule.t_steps {
        return Err(Error::InvalidArgument {
            op: "denoise",
            detail: format!("t_start {t_start} out of range"),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidArgument { op: "denoise", detail: "steps must be >= 1".into() });
    }
    if t_start == 0 {
        return Ok(z_start.detach());
    }
    let taus = tau_path(t_start, steps);
    let mut z = z_start.detach();
    let mut z0_hat = z.clone();
    for (i, &tau) in taus.iter().enumerate() {
        let ab = schedule.alpha_bar_at(tau)? as f64;
        let eps_hat = model.predict_eps(&z, tau, pack)?;
        // x0 prediction from the ε estimate.
        z0_hat = z
            .sub(&eps_hat.mul_scalar(((1.0 - ab).sqrt()) as f32)?)?
            .mul_scalar((1.0 / ab.sqrt()) as f32)?;
        if let Some(&next) = taus.get(i + 1) {
            let ab_next = schedule.alpha_bar_at(next)? as f64;
            z = z0_hat
                .mul_scalar(ab_next.sqrt() as f32)?
                .add(&eps_hat.mul_scalar((1.0 - ab_next).sqrt() as f32)?)?;
        }
    }
    crate::tensor::ensure_finite("denoise", &z0_hat)?;
    Ok(z0_hat.detach())
}

//! Shared unit-test fixtures (compiled only for tests).

use std::sync::OnceLock;

use crate::autoencoder::{train_ae, AeConfig, AeParams};
use crate::diffusion::{DenoiseModel, NoiseSchedule};
use crate::error::Result;
use crate::history::ConditionPack;
use crate::rng::Rng;
use crate::scene::{gen_scene, ScenePreset};
use crate::tensor::Tensor;

/// Oracle denoiser that inverts the noising for a known clean latent.
pub(crate) struct ClosedFormEps {
    pub z0: Tensor,
    pub schedule: NoiseSchedule,
}

impl DenoiseModel for ClosedFormEps {
    fn predict_eps(&self, z_t: &Tensor, t: usize, _pack: &ConditionPack) -> Result<Tensor> {
        let ab = self.schedule.alpha_bar_at(t)? as f64;
        z_t.sub(&self.z0.mul_scalar(ab.sqrt() as f32)?)?
            .mul_scalar((1.0 / (1.0 - ab).sqrt()) as f32)
    }
}

pub(crate) fn toy_clips(count: usize, base_seed: u64) -> Vec<Tensor> {
    let preset = ScenePreset::default();
    (0..count)
        .map(|i| gen_scene(&preset.random_spec(base_seed + i as u64)).unwrap().rgb)
        .collect()
}

/// One trained autoencoder shared across the whole unit-test binary.
pub(crate) fn trained_ae() -> &'static AeParams {
    static FIXTURE: OnceLock<AeParams> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let clips = toy_clips(20, 500);
        let mut rng = Rng::new(77);
        let (ae, report) = train_ae(&clips, AeConfig::default(), 80, 3e-3, &mut rng).unwrap();
        assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
        ae
    })
}

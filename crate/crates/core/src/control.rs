//! Multi-modal control machinery: half-copy branch initialization,
//! zero-initialized fusion projections, feature-level scaling of the dense
//! branch, and the two data-level degradations (random scale fusion and
//! adaptive blur) applied to dense control maps.
//!
//! Branch parameters live in the model's parameter table under
//! `dense.b{l}.*` / `sparse.b{l}.*`; the fusion projections are
//! `fuse.l{l}.w`. The actual fused forward is in [`crate::model::forward`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// λ is drawn uniformly from [LAMBDA_MIN, 1].
pub const LAMBDA_MIN: f32 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

fn parity_slice_1d(values: &[f32], parity: Parity) -> Vec<f32> {
    let start = if parity == Parity::Even { 0 } else { 1 };
    values.iter().skip(start).step_by(2).copied().collect()
}

fn parity_slice_2d(values: &[f32], rows: usize, cols: usize, row_p: Option<Parity>, col_p: Option<Parity>) -> Vec<f32> {
    let rs = match row_p {
        Some(Parity::Even) | None => 0,
        Some(Parity::Odd) => 1,
    };
    let row_step = if row_p.is_some() { 2 } else { 1 };
    let cs = match col_p {
        Some(Parity::Even) | None => 0,
        Some(Parity::Odd) => 1,
    };
    let col_step = if col_p.is_some() { 2 } else { 1 };
    let mut out = Vec::new();
    let mut r = rs;
    while r < rows {
        let mut c = cs;
        while c < cols {
            out.push(values[r * cols + c]);
            c += col_step;
        }
        r += row_step;
    }
    out
}

/// Derive the dense and sparse control branches from the first
/// `n_controlled` base blocks: even-indexed channels seed the dense branch,
/// odd-indexed channels the sparse branch, each at half feature width.
/// Fusion projections are inserted zero-initialized (bias-free), and the two
/// control token embedders are freshly initialized.
pub fn half_copy_init(params: &mut ParamSet, cfg: &ModelConfig, rng: &mut Rng) -> Result<()> {
    if cfg.d_model % 2 != 0 {
        return Err(Error::InvalidArgument {
            op: "half_copy_init",
            detail: format!("base width {} must be even", cfg.d_model),
        });
    }
    let mut rng = rng.stream("half-copy-init");
    let d = cfg.d_model;
    let half = d / 2;

    for l in 0..cfg.n_controlled {
        let base_prefix = format!("base.b{l}.");
        let names: Vec<String> = params
            .names()
            .filter(|n| n.starts_with(&base_prefix))
            .map(|n| n.to_string())
            .collect();
        for name in names {
            let entry = params.get(&name)?.clone();
            let suffix = &name[base_prefix.len()..];
            for (branch, parity) in [("dense", Parity::Even), ("sparse", Parity::Odd)] {
                let target = format!("{branch}.b{l}.{suffix}");
                let (shape, values) = match entry.shape.as_slice() {
                    // Gains and biases: feature-indexed vectors.
                    [n] => (vec![n / 2], parity_slice_1d(&entry.values, parity)),
                    [rows, cols] => {
                        if suffix == "time.w" {
                            // Time projection input is the shared embedding,
                            // not a block feature axis: slice columns only.
                            (
                                vec![*rows, cols / 2],
                                parity_slice_2d(&entry.values, *rows, *cols, None, Some(parity)),
                            )
                        } else {
                            (
                                vec![rows / 2, cols / 2],
                                parity_slice_2d(&entry.values, *rows, *cols, Some(parity), Some(parity)),
                            )
                        }
                    }
                    other => {
                        return Err(Error::InvalidArgument {
                            op: "half_copy_init",
                            detail: format!("{name}: unexpected rank {other:?}"),
                        })
                    }
                };
                params.insert(&target, &shape, values);
            }
        }
        params.insert(&format!("fuse.l{l}.w"), &[half, d], vec![0.0; half * d]);
    }

    let control_in = cfg.control_patch_dim();
    for branch in ["dense", "sparse"] {
        let bound = 1.0 / (control_in as f32).sqrt();
        let w: Vec<f32> = (0..control_in * half).map(|_| rng.uniform_in(-bound, bound)).collect();
        params.insert(&format!("embed.{branch}.w"), &[control_in, half], w);
        params.insert(&format!("embed.{branch}.b"), &[half], vec![0.0; half]);
    }
    Ok(())
}

// ── Feature-level degradation (λ scaling) ────────────────────────────

/// Draw the dense-feature scale: with probability `alpha`, λ ~ U[0.05, 1];
/// otherwise λ = 1.
pub fn draw_feature_scale(alpha: f32, rng: &mut Rng) -> f32 {
    if rng.coin(alpha) {
        rng.uniform_in(LAMBDA_MIN, 1.0)
    } else {
        1.0
    }
}

/// Scale dense control features by a drawn λ; returns the features and the
/// λ that was used.
pub fn feature_degrade(features: &Tensor, alpha: f32, rng: &mut Rng) -> Result<(Tensor, f32)> {
    let lambda = draw_feature_scale(alpha, rng);
    Ok((features.mul_scalar(lambda)?, lambda))
}

// ── Data-level degradation ───────────────────────────────────────────

/// Which of the two data-level techniques one application uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDegradationPlan {
    pub scale_fusion: bool,
    pub blur: bool,
}

/// With probability `beta`, pick one or both techniques (fair coin each, at
/// least one forced).
pub fn sample_data_plan(beta: f32, rng: &mut Rng) -> Option<DataDegradationPlan> {
    if !rng.coin(beta) {
        return None;
    }
    let mut plan = DataDegradationPlan { scale_fusion: rng.coin(0.5), blur: rng.coin(0.5) };
    if !plan.scale_fusion && !plan.blur {
        if rng.coin(0.5) {
            plan.scale_fusion = true;
        } else {
            plan.blur = true;
        }
    }
    Some(plan)
}

/// Deterministic core of random scale fusion: blend down-up resampled
/// copies of the map at the given factors with the given weights.
pub fn scale_fusion_blend(map: &Tensor, factors: &[usize], weights: &[f32]) -> Result<Tensor> {
    if factors.is_empty() || factors.len() != weights.len() {
        return Err(Error::InvalidArgument {
            op: "scale_fusion_blend",
            detail: "factors and weights must be non-empty and equal length".into(),
        });
    }
    let mut acc: Option<Tensor> = None;
    for (factor, w) in factors.iter().zip(weights) {
        let resampled = map.resample_down(*factor)?.resample_up(*factor)?;
        let term = resampled.mul_scalar(*w)?;
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    Ok(acc.expect("non-empty factors"))
}

/// Random scale fusion over scales {1, 1/2, ..., 1/2^n}: one scale is
/// excluded uniformly at random, the rest are blended with random weights
/// normalized to sum to 1.
pub fn random_scale_fusion(map: &Tensor, n: usize, rng: &mut Rng) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::InvalidArgument { op: "random_scale_fusion", detail: "n must be >= 1".into() });
    }
    let s = map.shape();
    if s.len() < 2 {
        return Err(Error::ShapeMismatch {
            op: "random_scale_fusion",
            detail: format!("{s:?} has no spatial dims"),
        });
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let coarsest = 1usize << n;
    if h % coarsest != 0 || w % coarsest != 0 {
        return Err(Error::InvalidArgument {
            op: "random_scale_fusion",
            detail: format!("{h}x{w} not divisible by 2^{n}"),
        });
    }
    let excluded = rng.below((n + 1) as u64) as usize;
    let factors: Vec<usize> = (0..=n).filter(|j| *j != excluded).map(|j| 1usize << j).collect();
    let raw: Vec<f32> = (0..factors.len()).map(|_| rng.uniform_in(0.05, 1.0)).collect();
    let total: f64 = raw.iter().map(|v| *v as f64).sum();
    let weights: Vec<f32> = raw.iter().map(|v| (*v as f64 / total) as f32).collect();
    scale_fusion_blend(map, &factors, &weights)
}

/// Kernel sizes the adaptive blur draws from.
pub const BLUR_KERNELS: [usize; 3] = [3, 5, 7];

/// Box blur with a randomly chosen odd kernel from {3, 5, 7}.
pub fn adaptive_blur(map: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    let k = BLUR_KERNELS[rng.below(BLUR_KERNELS.len() as u64) as usize];
    map.box_blur(k)
}

/// Apply data-level degradation with probability `beta`: one or both of
/// random scale fusion and adaptive blur (fusion first when both).
pub fn apply_data_degradation(
    map: &Tensor,
    beta: f32,
    scale_fusion_n: usize,
    rng: &mut Rng,
) -> Result<(Tensor, Option<DataDegradationPlan>)> {
    let Some(plan) = sample_data_plan(beta, rng) else {
        return Ok((map.detach(), None));
    };
    let mut out = map.detach();
    if plan.scale_fusion {
        out = random_scale_fusion(&out, scale_fusion_n, rng)?;
    }
    if plan.blur {
        out = adaptive_blur(&out, rng)?;
    }
    Ok((out, Some(plan)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WorldModel;

    #[test]
    fn half_copy_partitions_base_channels() {
        let cfg = ModelConfig::default();
        let mut rng = Rng::new(1);
        let mut model = WorldModel::init(cfg, &mut rng).unwrap();
        half_copy_init(&mut model.params, &cfg, &mut rng).unwrap();
        let d = cfg.d_model;
        let base = model.params.get("base.b0.attn.wq").unwrap().clone();
        let dense = model.params.get("dense.b0.attn.wq").unwrap().clone();
        let sparse = model.params.get("sparse.b0.attn.wq").unwrap().clone();
        assert_eq!(dense.shape, vec![d / 2, d / 2]);
        assert_eq!(sparse.shape, vec![d / 2, d / 2]);
        // Branch values equal the corresponding base slices.
        for i in 0..d / 2 {
            for j in 0..d / 2 {
                assert_eq!(dense.values[i * (d / 2) + j], base.values[(2 * i) * d + 2 * j]);
                assert_eq!(
                    sparse.values[i * (d / 2) + j],
                    base.values[(2 * i + 1) * d + 2 * j + 1]
                );
            }
        }
        // Even/odd index sets are disjoint and cover all channels.
        let evens: Vec<usize> = (0..d).step_by(2).collect();
        let odds: Vec<usize> = (1..d).step_by(2).collect();
        assert_eq!(evens.len() + odds.len(), d);
        assert!(evens.iter().all(|e| !odds.contains(e)));
    }

    #[test]
    fn half_copy_time_projection_keeps_input_dim() {
        let cfg = ModelConfig::default();
        let mut rng = Rng::new(2);
        let mut model = WorldModel::init(cfg, &mut rng).unwrap();
        half_copy_init(&mut model.params, &cfg, &mut rng).unwrap();
        let tw = model.params.get("dense.b0.time.w").unwrap();
        assert_eq!(tw.shape, vec![cfg.d_model, cfg.d_model / 2]);
    }

    #[test]
    fn half_copy_fusion_layers_are_all_zero() {
        let cfg = ModelConfig::default();
        let mut rng = Rng::new(3);
        let mut model = WorldModel::init(cfg, &mut rng).unwrap();
        half_copy_init(&mut model.params, &cfg, &mut rng).unwrap();
        for l in 0..cfg.n_controlled {
            let f = model.params.get(&format!("fuse.l{l}.w")).unwrap();
            assert_eq!(f.shape, vec![cfg.d_model / 2, cfg.d_model]);
            assert!(f.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn half_copy_rejects_odd_width() {
        let cfg = ModelConfig { d_model: 63, n_heads: 1, ..Default::default() };
        let mut p = ParamSet::new();
        let mut rng = Rng::new(4);
        assert!(half_copy_init(&mut p, &cfg, &mut rng).is_err());
    }

    #[test]
    fn feature_degrade_alpha_zero_is_identity() {
        let mut rng = Rng::new(5);
        let x = Tensor::randn(&[3, 4], &mut rng);
        for _ in 0..50 {
            let (y, lambda) = feature_degrade(&x, 0.0, &mut rng).unwrap();
            assert_eq!(lambda, 1.0);
            assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn feature_degrade_lambda_scales_l2_norm() {
        let mut rng = Rng::new(6);
        let x = Tensor::randn(&[8, 8], &mut rng);
        let norm = |t: &Tensor| -> f64 {
            t.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()
        };
        let y = x.mul_scalar(0.05).unwrap();
        let ratio = norm(&y) / norm(&x);
        assert!((ratio / 0.05 - 1.0).abs() < 1e-6, "ratio {ratio}");
    }

    #[test]
    fn feature_degrade_lambda_in_range() {
        let mut rng = Rng::new(7);
        let x = Tensor::randn(&[4], &mut rng);
        let mut saw_scaled = false;
        for _ in 0..500 {
            let (_, lambda) = feature_degrade(&x, 0.5, &mut rng).unwrap();
            assert!(lambda == 1.0 || (LAMBDA_MIN..1.0).contains(&lambda));
            saw_scaled |= lambda < 1.0;
        }
        assert!(saw_scaled);
    }

    #[test]
    fn scale_fusion_constant_map_invariant() {
        let map = Tensor::full(&[2, 1, 32, 32], 0.6);
        let mut rng = Rng::new(8);
        for _ in 0..10 {
            let out = random_scale_fusion(&map, 5, &mut rng).unwrap();
            assert_eq!(out.shape(), map.shape());
            for v in out.data() {
                assert!((v - 0.6).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scale_fusion_weights_sum_to_one() {
        // Verified through the blend itself: a constant map must come back
        // unchanged only when weights sum to 1; check the raw draw too.
        let mut rng = Rng::new(9);
        let raw: Vec<f32> = (0..5).map(|_| rng.uniform_in(0.05, 1.0)).collect();
        let total: f64 = raw.iter().map(|v| *v as f64).sum();
        let weights: Vec<f64> = raw.iter().map(|v| *v as f64 / total).collect();
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    /// Two-scale blend with forced weights on a hand ramp, against a
    /// manually computed resample + weighted sum.
    #[test]
    fn scale_fusion_forced_weights_hand_oracle() {
        // 4x4 ramp 0..15.
        let vals: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let map = Tensor::new(&[1, 1, 4, 4], vals.clone()).unwrap();
        let out = scale_fusion_blend(&map, &[1, 2], &[0.25, 0.75]).unwrap();
        // factor 1: identity. factor 2: 2x2 block means, replicated.
        let mut expect = vec![0.0f32; 16];
        for i in 0..4 {
            for j in 0..4 {
                let bi = (i / 2) * 2;
                let bj = (j / 2) * 2;
                let mean = (vals[bi * 4 + bj]
                    + vals[bi * 4 + bj + 1]
                    + vals[(bi + 1) * 4 + bj]
                    + vals[(bi + 1) * 4 + bj + 1])
                    / 4.0;
                expect[i * 4 + j] = 0.25 * vals[i * 4 + j] + 0.75 * mean;
            }
        }
        for (a, e) in out.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
    }

    #[test]
    fn scale_fusion_rejects_indivisible_shapes() {
        let map = Tensor::zeros(&[1, 1, 24, 24]);
        let mut rng = Rng::new(10);
        // 24 is not divisible by 2^5 = 32.
        assert!(random_scale_fusion(&map, 5, &mut rng).is_err());
    }

    #[test]
    fn adaptive_blur_constant_invariant_and_kernel_odd() {
        let map = Tensor::full(&[1, 1, 8, 8], 0.3);
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let out = adaptive_blur(&map, &mut rng).unwrap();
            for v in out.data() {
                assert!((v - 0.3).abs() < 1e-6);
            }
        }
        // The sampled kernel set itself is odd by construction.
        assert!(BLUR_KERNELS.iter().all(|k| k % 2 == 1));
    }

    #[test]
    fn adaptive_blur_impulse_spreads_to_plateau() {
        let mut vals = vec![0.0f32; 81];
        vals[40] = 9.0; // center of 9x9
        let map = Tensor::new(&[1, 1, 9, 9], vals).unwrap();
        let mut rng = Rng::new(12);
        let out = adaptive_blur(&map, &mut rng).unwrap();
        // Whatever k was drawn, the impulse spreads to a k x k plateau of
        // equal values 9/k^2 around the center.
        let nonzero: Vec<f32> = out.data().iter().copied().filter(|v| *v != 0.0).collect();
        let k2 = nonzero.len();
        assert!(matches!(k2, 9 | 25 | 49), "plateau size {k2}");
        let expect = 9.0 / k2 as f32;
        for v in &nonzero {
            assert!((v - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn data_degradation_beta_zero_is_identity() {
        let mut rng = Rng::new(13);
        let map = Tensor::randn(&[1, 1, 32, 32], &mut rng);
        let (out, plan) = apply_data_degradation(&map, 0.0, 5, &mut rng).unwrap();
        assert!(plan.is_none());
        assert_eq!(out.data(), map.data());
    }

    #[test]
    fn data_degradation_frequency_matches_beta() {
        let mut rng = Rng::new(14);
        let draws = 100_000;
        let mut applied = 0usize;
        let mut both = 0usize;
        for _ in 0..draws {
            if let Some(plan) = sample_data_plan(0.10, &mut rng) {
                applied += 1;
                assert!(plan.scale_fusion || plan.blur, "at least one technique forced");
                if plan.scale_fusion && plan.blur {
                    both += 1;
                }
            }
        }
        let freq = applied as f64 / draws as f64;
        assert!((freq - 0.10).abs() < 0.01, "application frequency {freq}");
        assert!(both > 0);
    }

    #[test]
    fn data_degradation_preserves_shape() {
        let mut rng = Rng::new(15);
        let map = Tensor::randn(&[3, 1, 32, 32], &mut rng);
        for _ in 0..20 {
            let (out, _) = apply_data_degradation(&map, 1.0, 5, &mut rng).unwrap();
            assert_eq!(out.shape(), map.shape());
        }
    }
}

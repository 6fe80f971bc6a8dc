//! Autoregressive long-horizon inference: global percentile normalization of
//! the dense control stream, overlapping clip planning, unified noise
//! initialization, per-clip sparse-track recomputation, and the clip-by-clip
//! generation loop.
//!
//! Frames are written incrementally as per-frame LVT records plus a JSON
//! manifest; the generator keeps only O(clip + history) live state.

use std::collections::VecDeque;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::AeParams;
use crate::diffusion::{denoise, NoiseSchedule};
use crate::error::{Error, Result};
use crate::history::{ConditionPack, BOUNDARY_WEIGHTS};
use crate::model::WorldModel;
use crate::rng::Rng;
use crate::scene::{render_pointmap_range, tracks_for_window, SceneSpec};
use crate::tensor::{read_tensor_from, write_tensor_to, Tensor};

// ── Global normalization ─────────────────────────────────────────────

/// Linear map fitted from percentile bounds; degenerate ranges map to 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNorm {
    pub lo: f32,
    pub hi: f32,
}

impl DepthNorm {
    pub fn apply(&self, d: f32) -> f32 {
        if self.hi == self.lo {
            return 0.5;
        }
        (d.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo)
    }
}

/// Nearest-rank percentile: the value at index ceil(p/100 * N) of the
/// sorted sample (1-based).
fn nearest_rank(values: &mut [f32], pct: f64) -> f32 {
    let n = values.len();
    let idx = ((pct / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1;
    *values.select_nth_unstable_by(idx, f32::total_cmp).1
}

/// Fit percentile bounds over every value of the sequence and rescale to
/// [0, 1]. Returns the normalized tensor and the fitted map so scalars
/// (track depths) can be colorized consistently.
pub fn global_normalize_percentiles(
    depth: &Tensor,
    lo_pct: f64,
    hi_pct: f64,
) -> Result<(Tensor, DepthNorm)> {
    if depth.numel() == 0 {
        return Err(Error::InvalidArgument { op: "global_normalize", detail: "empty input".into() });
    }
    let mut scratch = depth.to_vec();
    let lo = nearest_rank(&mut scratch, lo_pct);
    let hi = nearest_rank(&mut scratch, hi_pct);
    let norm = DepthNorm { lo, hi };
    let data: Vec<f32> = depth.data().iter().map(|d| norm.apply(*d)).collect();
    Ok((Tensor::new(depth.shape(), data)?, norm))
}

/// 5th/95th-percentile normalization of a dense control stream.
pub fn global_normalize(depth: &Tensor) -> Result<(Tensor, DepthNorm)> {
    global_normalize_percentiles(depth, 5.0, 95.0)
}

// ── Clip planning ────────────────────────────────────────────────────

/// Ordered overlapping clip windows plus the shared noise seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutPlan {
    pub windows: Vec<Range<usize>>,
    pub overlap: usize,
    pub noise_seed: u64,
}

/// Windows [0, c), [c-o, 2c-2o+...), ... covering [0, total) exactly.
pub fn plan_clips(total_frames: usize, clip_frames: usize, overlap: usize) -> Result<Vec<Range<usize>>> {
    if clip_frames <= overlap {
        return Err(Error::InvalidArgument {
            op: "plan_clips",
            detail: format!("clip_frames {clip_frames} must exceed overlap {overlap}"),
        });
    }
    if total_frames < clip_frames {
        return Err(Error::InvalidArgument {
            op: "plan_clips",
            detail: format!("total {total_frames} shorter than one clip {clip_frames}"),
        });
    }
    let stride = clip_frames - overlap;
    if (total_frames - clip_frames) % stride != 0 {
        return Err(Error::InvalidArgument {
            op: "plan_clips",
            detail: format!(
                "total {total_frames} unreachable with clip {clip_frames} overlap {overlap}"
            ),
        });
    }
    let n = (total_frames - clip_frames) / stride + 1;
    Ok((0..n).map(|i| i * stride..i * stride + clip_frames).collect())
}

/// Total frame count for a window count under this clip protocol.
pub fn total_frames_for_windows(windows: usize, clip_frames: usize, overlap: usize) -> usize {
    clip_frames + (windows - 1) * (clip_frames - overlap)
}

// ── Sparse recomputation ─────────────────────────────────────────────

/// Per-clip sparse control: tracks are seeded fresh at the window start and
/// colorized through the globally fitted depth map.
pub fn recompute_sparse_per_clip(
    spec: &SceneSpec,
    window: Range<usize>,
    norm: &DepthNorm,
    num_points: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let tracks = tracks_for_window(spec, window.clone());
    render_pointmap_range(&tracks, window, spec.height, spec.width, num_points, rng, |d| {
        norm.apply(d)
    })
}

// ── Autoregressive rollout ───────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub total_frames: usize,
    pub clip_frames: usize,
    pub overlap: usize,
    pub sample_steps: usize,
    pub n_history_max: usize,
    /// Condition on recent generated frames (stage-3 checkpoints).
    pub use_history: bool,
    /// One shared noise tensor across all clips (vs fresh per clip).
    pub unified_noise: bool,
    /// Global percentile normalization (vs per-window).
    pub global_norm: bool,
    /// Blend the first three predicted latents toward the anchor
    /// (the latent-blend boundary mode).
    pub boundary_blend: bool,
    pub num_points: usize,
    pub noise_seed: u64,
    pub percentile_lo: f64,
    pub percentile_hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondRecord {
    pub window: usize,
    pub frame_index: usize,
    pub frame_hash: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutManifest {
    pub plan: RolloutPlan,
    pub options: RolloutOptions,
    pub config_hash: String,
    pub frame_count: usize,
    pub frame_shape: Vec<usize>,
    pub cond_frames: Vec<CondRecord>,
    pub noise_hashes: Vec<u64>,
    pub global_depth_norm: Option<DepthNorm>,
}

#[derive(Debug)]
pub struct RolloutResult {
    pub manifest: RolloutManifest,
    pub frames_path: PathBuf,
    pub manifest_path: PathBuf,
    /// Maximum bytes of live generation state (history buffer, current
    /// latents, noise, per-window controls); independent of total length.
    pub peak_state_bytes: usize,
}

/// Everything the generator conditions on: the exact synthetic world the
/// controls are extracted from, plus its precomputed raw depth stream.
pub struct ControlSource<'a> {
    pub spec: &'a SceneSpec,
    /// [F_total, 1, H, W] exact depth, raw (unnormalized).
    pub depth: &'a Tensor,
}

fn tile3(depth: &Tensor) -> Result<Tensor> {
    Tensor::concat(&[depth, depth, depth], 1)
}

fn frame_bytes(t: &Tensor) -> usize {
    t.numel() * 4
}

/// Generate `total_frames` clip by clip. Clip i+1 is conditioned on clip
/// i's final decoded frame (copied verbatim into the output as the overlap
/// frame) and, when history is enabled, on the up-to-`n_history_max` frames
/// preceding it. Every clip starts its reverse diffusion from the same
/// shared noise tensor when unified noise is on.
pub fn autoregressive_rollout(
    model: &WorldModel,
    ae: &AeParams,
    schedule: &NoiseSchedule,
    source: &ControlSource<'_>,
    first_frame: &Tensor,
    opts: &RolloutOptions,
    config_hash: &str,
    out_dir: &Path,
) -> Result<RolloutResult> {
    let windows = plan_clips(opts.total_frames, opts.clip_frames, opts.overlap)?;
    let plan = RolloutPlan {
        windows: windows.clone(),
        overlap: opts.overlap,
        noise_seed: opts.noise_seed,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let cz = model.config.latent_channels;
    let lhw = model.config.latent_hw;
    let latent_shape = [opts.clip_frames, cz, lhw, lhw];

    // Global normalization of the full dense stream (the per-window variant
    // recomputes bounds inside the loop).
    let global_norm = if opts.global_norm {
        let (normalized, fitted) =
            global_normalize_percentiles(source.depth, opts.percentile_lo, opts.percentile_hi)?;
        Some((normalized, fitted))
    } else {
        None
    };

    let mut noise_rng = Rng::new(opts.noise_seed).stream("rollout-noise");
    let shared_noise = Tensor::randn(&latent_shape, &mut noise_rng);
    let mut sparse_rng = Rng::new(opts.noise_seed).stream("rollout-sparse");

    // Sliding window of the most recent decoded frames: up to n_history_max
    // history frames plus the conditioning frame.
    let mut recent: VecDeque<Tensor> = VecDeque::new();
    let keep = opts.n_history_max + 1;

    let frames_path = out_dir.join("frames.lvt");
    let tmp_path = out_dir.join(".frames.lvt.tmp");
    let mut sink = std::io::BufWriter::new(
        std::fs::File::create(&tmp_path).map_err(|e| Error::io(tmp_path.display().to_string(), e))?,
    );

    let mut cond_frames = Vec::new();
    let mut noise_hashes = Vec::new();
    let mut peak_state = 0usize;
    let mut written = 0usize;

    for (wi, window) in windows.iter().enumerate() {
        // Conditioning frame: ground-truth first frame for window 0, the
        // last decoded frame afterwards (bit-identical copy).
        let cond_frame = if wi == 0 {
            first_frame.detach()
        } else {
            recent.back().expect("previous window produced frames").clone()
        };
        let cond_hash = crate::fsutil::fnv1a64(
            &cond_frame.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
        );
        cond_frames.push(CondRecord {
            window: wi,
            frame_index: window.start,
            frame_hash: cond_hash,
        });

        // Dense control for the window.
        let depth_window_raw = source.depth.narrow(0, window.start, window.len())?;
        let (depth_window, norm) = match &global_norm {
            Some((normalized, fitted)) => {
                (normalized.narrow(0, window.start, window.len())?, *fitted)
            }
            None => {
                let (normalized, fitted) = global_normalize_percentiles(
                    &depth_window_raw,
                    opts.percentile_lo,
                    opts.percentile_hi,
                )?;
                (normalized, fitted)
            }
        };
        let dense_latent = ae.encode(&tile3(&depth_window)?)?;

        // Sparse control: tracks reseeded at the window start, colorized
        // through the active normalization.
        let pointmap =
            recompute_sparse_per_clip(source.spec, window.clone(), &norm, opts.num_points, &mut sparse_rng)?;
        let sparse_latent = ae.encode(&pointmap)?;

        // History: the frames preceding the conditioning frame.
        let z_first = ae.encode(&cond_frame)?;
        let history_latents = if opts.use_history && recent.len() > 1 {
            let n_hist = (recent.len() - 1).min(opts.n_history_max);
            let start = recent.len() - 1 - n_hist;
            let frames: Vec<&Tensor> = recent.iter().skip(start).take(n_hist).collect();
            let stacked = Tensor::concat(&frames, 0)?;
            Some(ae.encode(&stacked)?)
        } else {
            None
        };
        let pack = ConditionPack::for_inference(
            z_first.clone(),
            history_latents,
            opts.n_history_max,
            dense_latent.clone(),
            sparse_latent.clone(),
        )?;

        let noise = if opts.unified_noise {
            shared_noise.clone()
        } else {
            Tensor::randn(&latent_shape, &mut noise_rng)
        };
        noise_hashes.push(crate::fsutil::fnv1a64(
            &noise.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>(),
        ));

        let mut z0_hat = denoise(model, &noise, schedule.t_steps - 1, opts.sample_steps, &pack, schedule)
            .map_err(|_| Error::RolloutNonFinite { window: wi })?;

        if opts.boundary_blend && wi > 0 {
            z0_hat = blend_boundary_latents(&z0_hat, &z_first)?;
        }

        let decoded = ae.decode(&z0_hat).map_err(|_| Error::RolloutNonFinite { window: wi })?;
        if decoded.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::RolloutNonFinite { window: wi });
        }

        // Output: window 0 writes the anchor frame verbatim plus its
        // generated frames; later windows skip the overlap frames (already
        // written as the previous window's tail) and append the new ones.
        let emit_from = if wi == 0 { 0 } else { opts.overlap };
        for f in emit_from..opts.clip_frames {
            let frame = if wi == 0 && f == 0 {
                cond_frame.detach()
            } else {
                decoded.narrow(0, f, 1)?
            };
            write_tensor_to(&mut sink, &frame)
                .map_err(|e| Error::io(tmp_path.display().to_string(), e))?;
            written += 1;
            recent.push_back(frame);
            while recent.len() > keep {
                recent.pop_front();
            }
        }

        let state_bytes = recent.iter().map(frame_bytes).sum::<usize>()
            + frame_bytes(&noise)
            + frame_bytes(&z0_hat)
            + frame_bytes(&dense_latent)
            + frame_bytes(&sparse_latent)
            + frame_bytes(&pointmap)
            + frame_bytes(&depth_window);
        peak_state = peak_state.max(state_bytes);
    }

    sink.flush().map_err(|e| Error::io(tmp_path.display().to_string(), e))?;
    drop(sink);
    std::fs::rename(&tmp_path, &frames_path)
        .map_err(|e| Error::io(frames_path.display().to_string(), e))?;

    debug_assert_eq!(written, opts.total_frames);
    let manifest = RolloutManifest {
        plan,
        options: opts.clone(),
        config_hash: config_hash.to_string(),
        frame_count: written,
        frame_shape: vec![3, source.spec.height, source.spec.width],
        cond_frames,
        noise_hashes,
        global_depth_norm: global_norm.map(|(_, n)| n),
    };
    let manifest_path = out_dir.join("rollout.json");
    crate::fsutil::write_json(&manifest_path, &manifest)?;
    Ok(RolloutResult { manifest, frames_path, manifest_path, peak_state_bytes: peak_state })
}

/// Wait-for-the-anchor smoothing of the first boundary latents: the
/// prediction weight ramps up over the first three frames.
fn blend_boundary_latents(z0_hat: &Tensor, anchor: &Tensor) -> Result<Tensor> {
    let f = z0_hat.shape()[0];
    let mut parts: Vec<Tensor> = Vec::with_capacity(f);
    for frame in 0..f {
        let pred = z0_hat.narrow(0, frame, 1)?;
        let blended = if frame < BOUNDARY_WEIGHTS.len() {
            let w = BOUNDARY_WEIGHTS[frame];
            pred.mul_scalar(w)?.add(&anchor.mul_scalar(1.0 - w)?)?
        } else {
            pred
        };
        parts.push(blended);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat(&refs, 0)
}

/// Read a rollout's frames back as one [F, C, H, W] tensor (analysis side;
/// this is O(total) by design).
pub fn read_rollout_frames(result_dir: &Path) -> Result<Tensor> {
    let manifest: RolloutManifest = crate::fsutil::read_json(&result_dir.join("rollout.json"))?;
    let path = result_dir.join("frames.lvt");
    let display = path.display().to_string();
    let mut f = std::fs::File::open(&path).map_err(|e| Error::io(&display, e))?;
    let mut frames = Vec::with_capacity(manifest.frame_count);
    for _ in 0..manifest.frame_count {
        frames.push(read_tensor_from(&mut f, &display)?);
    }
    let refs: Vec<&Tensor> = frames.iter().collect();
    Tensor::concat(&refs, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_constant_sequence_is_half() {
        let depth = Tensor::full(&[3, 1, 4, 4], 0.8);
        let (out, norm) = global_normalize(&depth).unwrap();
        assert_eq!(norm.lo, norm.hi);
        for v in out.data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn normalize_1_to_20_nearest_rank_oracle() {
        // Values 1..20: p5 -> index ceil(1) = 1 -> value 1; p95 -> index
        // ceil(19) = 19 -> value 19; input 10 maps to (10-1)/18 = 0.5.
        let vals: Vec<f32> = (1..=20).map(|v| v as f32).collect();
        let depth = Tensor::new(&[20, 1, 1, 1], vals).unwrap();
        let (out, norm) = global_normalize(&depth).unwrap();
        assert_eq!(norm.lo, 1.0);
        assert_eq!(norm.hi, 19.0);
        let v10 = out.data()[9];
        assert!((v10 - 0.5).abs() < 1e-6, "{v10}");
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[19], 1.0);
    }

    #[test]
    fn normalize_outputs_in_unit_interval_and_idempotent() {
        for seed in 0..20u64 {
            let mut rng = Rng::new(seed);
            let depth = Tensor::randn(&[4, 1, 6, 6], &mut rng).mul_scalar(3.0).unwrap();
            let (once, _) = global_normalize(&depth).unwrap();
            for v in once.data() {
                assert!((0.0..=1.0).contains(v));
            }
            let (twice, _) = global_normalize(&once).unwrap();
            let (thrice, _) = global_normalize(&twice).unwrap();
            for (a, b) in twice.data().iter().zip(thrice.data()) {
                assert_eq!(a, b, "seed {seed}: normalization must be idempotent");
            }
        }
    }

    /// Brute-force sort-and-index oracle across random sequences.
    #[test]
    fn normalize_matches_brute_force_oracle() {
        for seed in 0..100u64 {
            let mut rng = Rng::new(1000 + seed);
            let n = 10 + rng.below(200) as usize;
            let vals: Vec<f32> = (0..n).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
            let depth = Tensor::new(&[n, 1, 1, 1], vals.clone()).unwrap();
            let (out, norm) = global_normalize(&depth).unwrap();

            let mut sorted = vals.clone();
            sorted.sort_by(f32::total_cmp);
            let lo = sorted[((0.05 * n as f64).ceil() as usize).max(1) - 1];
            let hi = sorted[((0.95 * n as f64).ceil() as usize).max(1) - 1];
            assert_eq!(norm.lo, lo, "seed {seed}");
            assert_eq!(norm.hi, hi, "seed {seed}");
            for (v, raw) in out.data().iter().zip(&vals) {
                let expect = if hi == lo { 0.5 } else { (raw.clamp(lo, hi) - lo) / (hi - lo) };
                assert_eq!(*v, expect, "seed {seed}");
            }
        }
    }

    #[test]
    fn normalize_rejects_empty() {
        let empty = Tensor::zeros(&[0, 1, 4, 4]);
        assert!(global_normalize(&empty).is_err());
    }

    #[test]
    fn plan_17_9_1() {
        let w = plan_clips(17, 9, 1).unwrap();
        assert_eq!(w, vec![0..9, 8..17]);
    }

    #[test]
    fn plan_single_window() {
        assert_eq!(plan_clips(9, 9, 1).unwrap(), vec![0..9]);
    }

    #[test]
    fn plan_paper_scale_81_frames() {
        let w = plan_clips(161, 81, 1).unwrap();
        assert_eq!(w, vec![0..81, 80..161]);
        let w = plan_clips(total_frames_for_windows(5, 81, 1), 81, 1).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w[4].end, 401);
    }

    #[test]
    fn plan_unreachable_total_rejected() {
        assert!(plan_clips(18, 9, 1).is_err());
        assert!(plan_clips(5, 9, 1).is_err());
        assert!(plan_clips(10, 9, 9).is_err());
    }

    #[test]
    fn plan_windows_cover_without_gaps() {
        for (total, clip, overlap) in [(17, 9, 1), (25, 9, 1), (21, 5, 1), (9, 3, 0)] {
            let windows = plan_clips(total, clip, overlap).unwrap();
            assert_eq!(windows[0].start, 0);
            assert_eq!(windows.last().unwrap().end, total);
            for pair in windows.windows(2) {
                assert_eq!(pair[0].end - pair[1].start, overlap);
            }
        }
    }
}

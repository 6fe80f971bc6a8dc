//! Evaluation metrics: SSIM, PSNR, seam discontinuity, drift curves.
//! All metrics are pure functions of their inputs and computed in f64.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// PSNR cap used as the "identical inputs" sentinel in reports.
pub const PSNR_CAP_DB: f64 = 99.0;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio on unit dynamic range: 10*log10(1/MSE).
/// Identical inputs give +infinity; see [`psnr_capped`] for the report form.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("psnr", a, b)?;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / a.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// PSNR capped at 99 dB, the sentinel written to CSV reports.
pub fn psnr_capped(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(psnr(a, b)?.min(PSNR_CAP_DB))
}

pub const SSIM_WINDOW: usize = 7;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Structural similarity between two frames ([C, H, W]) on unit dynamic
/// range. Luminance is the channel mean; local statistics use a 7x7 uniform
/// window over valid positions; the score is the mean of the local map.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("ssim", a, b)?;
    let s = a.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            detail: format!("expected [C, H, W], got {s:?}"),
        });
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument {
            op: "ssim",
            detail: format!("frame {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        });
    }
    let luma = |t: &Tensor, i: usize, j: usize| -> f64 {
        let mut acc = 0.0f64;
        for ch in 0..c {
            acc += t.data()[(ch * h + i) * w + j] as f64;
        }
        acc / c as f64
    };

    let k = SSIM_WINDOW;
    let norm = (k * k) as f64;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for i0 in 0..=(h - k) {
        for j0 in 0..=(w - k) {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in i0..i0 + k {
                for j in j0..j0 + k {
                    let x = luma(a, i, j);
                    let y = luma(b, i, j);
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
            let mx = sx / norm;
            let my = sy / norm;
            let vx = sxx / norm - mx * mx;
            let vy = syy / norm - my * my;
            let cov = sxy / norm - mx * my;
            let score = ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            total += score;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean per-frame SSIM between two videos ([F, C, H, W]).
pub fn video_ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("video_ssim", a, b)?;
    let f = a.shape()[0];
    let mut total = 0.0;
    for t in 0..f {
        let fa = a.narrow(0, t, 1)?;
        let fb = b.narrow(0, t, 1)?;
        let inner: Vec<usize> = fa.shape()[1..].to_vec();
        total += ssim(&fa.reshape(&inner)?, &fb.reshape(&inner)?)?;
    }
    Ok(total / f as f64)
}

/// Mean absolute difference between consecutive frames `t-1` and `t`.
fn adjacent_diff(video: &Tensor, t: usize) -> f64 {
    let s = video.shape();
    let frame: usize = s[1..].iter().product();
    let a = &video.data()[(t - 1) * frame..t * frame];
    let b = &video.data()[t * frame..(t + 1) * frame];
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).sum::<f64>() / frame as f64
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 0 {
        (values[n / 2 - 1] + values[n / 2]) * 0.5
    } else {
        values[n / 2]
    }
}

/// Excess frame-to-frame difference at clip boundaries, relative to the
/// median within-clip adjacent-frame difference, so 0 means seamless.
/// The seam for window i sits between its overlap copy and its first newly
/// generated frame. A single-window plan has no seams.
pub fn seam_discontinuity(video: &Tensor, windows: &[Range<usize>], overlap: usize) -> Result<Vec<f64>> {
    let s = video.shape();
    if s.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "seam_discontinuity",
            detail: format!("expected [F, C, H, W], got {s:?}"),
        });
    }
    let f = s[0];
    if windows.last().map(|w| w.end) != Some(f) {
        return Err(Error::InvalidArgument {
            op: "seam_discontinuity",
            detail: format!("plan windows do not cover the {f}-frame video"),
        });
    }
    let seam_frames: Vec<usize> =
        windows.iter().skip(1).map(|w| w.start + overlap).collect();
    let within: Vec<f64> = (1..f)
        .filter(|t| !seam_frames.contains(t))
        .map(|t| adjacent_diff(video, t))
        .collect();
    let baseline = median(within);
    Ok(seam_frames.iter().map(|t| adjacent_diff(video, *t) - baseline).collect())
}

/// Least-squares slope of a metric across clip indices.
pub fn drift_slope(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let xm = (n as f64 - 1.0) / 2.0;
    let ym: f64 = values.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in values.iter().enumerate() {
        let dx = i as f64 - xm;
        num += dx * (v - ym);
        den += dx * dx;
    }
    num / den
}

/// Per-clip evaluation of a generated video against ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub config_hash: String,
    /// SSIM of each generated clip against its ground-truth clip.
    pub clip_ssim: Vec<f64>,
    /// PSNR (capped) of each generated clip against ground truth.
    pub clip_psnr: Vec<f64>,
    /// One entry per clip boundary.
    pub seam_scores: Vec<f64>,
}

impl MetricsReport {
    pub fn mean_ssim(&self) -> f64 {
        mean(&self.clip_ssim)
    }

    pub fn mean_seam(&self) -> f64 {
        mean(&self.seam_scores)
    }

    pub fn drift_slope(&self) -> f64 {
        drift_slope(&self.clip_ssim)
    }

    pub fn assert_finite(&self) -> Result<()> {
        let all = self.clip_ssim.iter().chain(&self.clip_psnr).chain(&self.seam_scores);
        for v in all {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    op: "metrics_report",
                    detail: format!("label {}", self.label),
                });
            }
        }
        Ok(())
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Evaluate a generated video against ground truth per plan window.
pub fn evaluate_video(
    label: &str,
    config_hash: &str,
    generated: &Tensor,
    ground_truth: &Tensor,
    windows: &[Range<usize>],
    overlap: usize,
) -> Result<MetricsReport> {
    same_shape("evaluate_video", generated, ground_truth)?;
    let mut clip_ssim = Vec::with_capacity(windows.len());
    let mut clip_psnr = Vec::with_capacity(windows.len());
    for wdw in windows {
        let g = generated.narrow(0, wdw.start, wdw.len())?;
        let t = ground_truth.narrow(0, wdw.start, wdw.len())?;
        clip_ssim.push(video_ssim(&g, &t)?);
        clip_psnr.push(psnr_capped(&g, &t)?);
    }
    let seam_scores = seam_discontinuity(generated, windows, overlap)?;
    let report = MetricsReport {
        label: label.to_string(),
        config_hash: config_hash.to_string(),
        clip_ssim,
        clip_psnr,
        seam_scores,
    };
    report.assert_finite()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn ssim_self_is_one() {
        let mut rng = Rng::new(1);
        let x = Tensor::randn(&[3, 8, 8], &mut rng).clamp(0.0, 1.0).unwrap();
        let s = ssim(&x, &x).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "ssim(x,x) = {s}");
    }

    #[test]
    fn ssim_symmetric() {
        let mut rng = Rng::new(2);
        let a = Tensor::randn(&[3, 9, 9], &mut rng).clamp(0.0, 1.0).unwrap();
        let b = Tensor::randn(&[3, 9, 9], &mut rng).clamp(0.0, 1.0).unwrap();
        let s1 = ssim(&a, &b).unwrap();
        let s2 = ssim(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-7);
    }

    /// Closed-form oracle on a binary checkerboard against its inversion:
    /// per window mu_y = 1 - mu_x, var_y = var_x, cov = -var_x, so every
    /// local score (hence the mean) is negative.
    #[test]
    fn ssim_of_inverted_checkerboard_negative_and_matches_oracle() {
        let (h, w) = (10usize, 10usize);
        let mut a = vec![0.0f32; h * w];
        for i in 0..h {
            for j in 0..w {
                a[i * w + j] = ((i + j) % 2) as f32;
            }
        }
        let b: Vec<f32> = a.iter().map(|v| 1.0 - v).collect();
        let ta = Tensor::new(&[1, h, w], a.clone()).unwrap();
        let tb = Tensor::new(&[1, h, w], b).unwrap();
        let s = ssim(&ta, &tb).unwrap();
        assert!(s < 0.0, "ssim = {s}");

        // Independent oracle: direct formula per window from pixel counts.
        let k = SSIM_WINDOW;
        let mut oracle = 0.0f64;
        let mut count = 0usize;
        for i0 in 0..=(h - k) {
            for j0 in 0..=(w - k) {
                let ones = (i0..i0 + k)
                    .flat_map(|i| (j0..j0 + k).map(move |j| (i, j)))
                    .filter(|(i, j)| (i + j) % 2 == 1)
                    .count() as f64;
                let n = (k * k) as f64;
                let mx = ones / n;
                let my = 1.0 - mx;
                let vx = mx - mx * mx; // Bernoulli variance
                let cov = -vx;
                oracle += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (2.0 * vx + SSIM_C2));
                count += 1;
            }
        }
        oracle /= count as f64;
        assert!((s - oracle).abs() < 1e-9, "{s} vs oracle {oracle}");
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let x = Tensor::full(&[3, 4, 4], 0.25);
        assert!(psnr(&x, &x).unwrap().is_infinite());
        assert_eq!(psnr_capped(&x, &x).unwrap(), 99.0);
    }

    #[test]
    fn psnr_mse_hand_value() {
        // Uniform difference 0.1 -> MSE 0.01 -> 20 dB.
        let a = Tensor::zeros(&[2, 5, 5]);
        let b = Tensor::full(&[2, 5, 5], 0.1);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "psnr = {p}");
    }

    #[test]
    fn psnr_orders_by_noise_variance() {
        let mut rng = Rng::new(3);
        let base = Tensor::full(&[1, 16, 16], 0.5);
        let mut prev = f64::INFINITY;
        for sigma in [0.01f32, 0.05, 0.1, 0.2] {
            let noisy_data: Vec<f32> =
                base.data().iter().map(|v| v + sigma * rng.normal()).collect();
            let noisy = Tensor::new(&[1, 16, 16], noisy_data).unwrap();
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < prev, "psnr should fall as variance grows");
            prev = p;
        }
    }

    #[test]
    fn psnr_shape_mismatch_rejected() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn seam_single_window_is_empty() {
        let video = Tensor::zeros(&[9, 3, 8, 8]);
        let scores = seam_discontinuity(&video, &[0..9], 1).unwrap();
        assert!(scores.is_empty());
    }

    #[test]
    fn seam_static_video_all_zero() {
        let video = Tensor::full(&[17, 3, 8, 8], 0.4);
        let scores = seam_discontinuity(&video, &[0..9, 8..17], 1).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0], 0.0);
    }

    #[test]
    fn seam_detects_brightness_jump() {
        // 17 frames, two windows [0,9) and [8,17); the first new frame of
        // window 1 is index 9. Jump all frames >= 9 by +0.5.
        let (f, c, h, w) = (17usize, 3usize, 8usize, 8usize);
        let mut data = vec![0.2f32; f * c * h * w];
        for t in 9..f {
            for v in &mut data[t * c * h * w..(t + 1) * c * h * w] {
                *v += 0.5;
            }
        }
        let video = Tensor::new(&[f, c, h, w], data).unwrap();
        let scores = seam_discontinuity(&video, &[0..9, 8..17], 1).unwrap();
        assert_eq!(scores.len(), 1);
        assert!((scores[0] - 0.5).abs() < 1e-6, "score = {}", scores[0]);
    }

    #[test]
    fn drift_slope_of_linear_series() {
        let values = [1.0, 0.9, 0.8, 0.7];
        assert!((drift_slope(&values) + 0.1).abs() < 1e-12);
        assert_eq!(drift_slope(&[0.5]), 0.0);
    }
}

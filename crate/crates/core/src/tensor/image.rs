//! Spatial primitives over the last two dimensions: box blur with replicate
//! padding, average-pool downsampling, and nearest-neighbor upsampling.
//! Leading dimensions are treated as a batch.

use super::Tensor;
use crate::error::{Error, Result};

fn spatial_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("need at least 2 dims, got {shape:?}"),
        });
    }
    let w = shape[shape.len() - 1];
    let h = shape[shape.len() - 2];
    let batch: usize = shape[..shape.len() - 2].iter().product();
    Ok((batch, h, w))
}

impl Tensor {
    /// k x k mean filter with replicate padding; `k` must be odd. The output
    /// stays inside the input's [min, max] envelope.
    pub fn box_blur(&self, k: usize) -> Result<Tensor> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::InvalidArgument {
                op: "box_blur",
                detail: format!("kernel size {k} must be odd and positive"),
            });
        }
        let (batch, h, w) = spatial_dims("box_blur", self.shape())?;
        let r = (k / 2) as isize;
        let inv = 1.0f64 / (k * k) as f64;
        let src = self.data();
        let mut data = vec![0.0f32; src.len()];
        for b in 0..batch {
            let base = b * h * w;
            for i in 0..h as isize {
                for j in 0..w as isize {
                    let mut acc = 0.0f64;
                    for di in -r..=r {
                        let si = (i + di).clamp(0, h as isize - 1) as usize;
                        for dj in -r..=r {
                            let sj = (j + dj).clamp(0, w as isize - 1) as usize;
                            acc += src[base + si * w + sj] as f64;
                        }
                    }
                    data[base + i as usize * w + j as usize] = (acc * inv) as f32;
                }
            }
        }
        let (hh, ww) = (h, w);
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            // Adjoint of replicate-padded mean: scatter each output cell's
            // share back onto its clamped sources.
            let mut dg = vec![0.0f32; g.len()];
            let inv = inv as f32;
            for b in 0..batch {
                let base = b * hh * ww;
                for i in 0..hh as isize {
                    for j in 0..ww as isize {
                        let share = g[base + i as usize * ww + j as usize] * inv;
                        for di in -r..=r {
                            let si = (i + di).clamp(0, hh as isize - 1) as usize;
                            for dj in -r..=r {
                                let sj = (j + dj).clamp(0, ww as isize - 1) as usize;
                                dg[base + si * ww + sj] += share;
                            }
                        }
                    }
                }
            }
            vec![Some(dg)]
        };
        Tensor::from_op("box_blur", self.shape().to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    /// Average-pool the last two dims by `factor` (a power of two ≥ 1).
    pub fn resample_down(&self, factor: usize) -> Result<Tensor> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::InvalidArgument {
                op: "resample_down",
                detail: format!("factor {factor} must be a power of two"),
            });
        }
        if factor == 1 {
            return self.mul_scalar(1.0);
        }
        let (batch, h, w) = spatial_dims("resample_down", self.shape())?;
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::InvalidArgument {
                op: "resample_down",
                detail: format!("{h}x{w} not divisible by {factor}"),
            });
        }
        let (oh, ow) = (h / factor, w / factor);
        let inv = 1.0f64 / (factor * factor) as f64;
        let src = self.data();
        let mut data = vec![0.0f32; batch * oh * ow];
        for b in 0..batch {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0f64;
                    for di in 0..factor {
                        for dj in 0..factor {
                            acc += src[b * h * w + (i * factor + di) * w + (j * factor + dj)] as f64;
                        }
                    }
                    data[b * oh * ow + i * ow + j] = (acc * inv) as f32;
                }
            }
        }
        let mut out_shape = self.shape().to_vec();
        let rank = out_shape.len();
        out_shape[rank - 2] = oh;
        out_shape[rank - 1] = ow;
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; batch * h * w];
            let inv = inv as f32;
            for b in 0..batch {
                for i in 0..oh {
                    for j in 0..ow {
                        let share = g[b * oh * ow + i * ow + j] * inv;
                        for di in 0..factor {
                            for dj in 0..factor {
                                dg[b * h * w + (i * factor + di) * w + (j * factor + dj)] += share;
                            }
                        }
                    }
                }
            }
            vec![Some(dg)]
        };
        Tensor::from_op("resample_down", out_shape, data, vec![self.clone()], Box::new(backward))
    }

    /// Nearest-neighbor upsample of the last two dims by `factor`.
    pub fn resample_up(&self, factor: usize) -> Result<Tensor> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::InvalidArgument {
                op: "resample_up",
                detail: format!("factor {factor} must be a power of two"),
            });
        }
        if factor == 1 {
            return self.mul_scalar(1.0);
        }
        let (batch, h, w) = spatial_dims("resample_up", self.shape())?;
        let (oh, ow) = (h * factor, w * factor);
        let src = self.data();
        let mut data = vec![0.0f32; batch * oh * ow];
        for b in 0..batch {
            for i in 0..oh {
                for j in 0..ow {
                    data[b * oh * ow + i * ow + j] = src[b * h * w + (i / factor) * w + (j / factor)];
                }
            }
        }
        let mut out_shape = self.shape().to_vec();
        let rank = out_shape.len();
        out_shape[rank - 2] = oh;
        out_shape[rank - 1] = ow;
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; batch * h * w];
            for b in 0..batch {
                for i in 0..oh {
                    for j in 0..ow {
                        dg[b * h * w + (i / factor) * w + (j / factor)] += g[b * oh * ow + i * ow + j];
                    }
                }
            }
            vec![Some(dg)]
        };
        Tensor::from_op("resample_up", out_shape, data, vec![self.clone()], Box::new(backward))
    }
}

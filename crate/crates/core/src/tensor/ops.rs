//! Tensor operations: broadcast arithmetic, matmul, reductions, shape
//! manipulation, and the nonlinearities used by the denoiser.
//!
//! Broadcasting is restricted to trailing dimensions (shapes are aligned at
//! the right; a dimension may be missing or 1). Reductions and matmul
//! accumulate in f64 and round once to f32.

use super::{check_finite, Tensor};
use crate::error::{Error, Result};

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Trailing-dimension broadcast shape, or an error when incompatible.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < a.len() { a[a.len() - 1 - i] } else { 1 };
        let db = if i < b.len() { b[b.len() - 1 - i] } else { 1 };
        out[rank - 1 - i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("{a:?} vs {b:?} not broadcast-compatible"),
            });
        };
    }
    Ok(out)
}

/// Per-output-dimension stride into an operand (0 where it broadcasts).
fn operand_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    let mut res = vec![0usize; out.len()];
    for i in 0..out.len() {
        let rev = out.len() - 1 - i;
        if rev < shape.len() {
            let d = shape[shape.len() - 1 - rev];
            if d != 1 {
                res[i] = s[shape.len() - 1 - rev];
            }
        }
    }
    res
}

/// Apply `f` elementwise over the broadcast of `a` and `b`.
fn zip_broadcast(
    a_data: &[f32],
    a_shape: &[usize],
    b_data: &[f32],
    b_shape: &[usize],
    out_shape: &[usize],
    mut f: impl FnMut(f32, f32) -> f32,
) -> Vec<f32> {
    let numel: usize = out_shape.iter().product();
    if a_shape == out_shape && b_shape == out_shape {
        return a_data.iter().zip(b_data).map(|(x, y)| f(*x, *y)).collect();
    }
    let sa = operand_strides(a_shape, out_shape);
    let sb = operand_strides(b_shape, out_shape);
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for _ in 0..numel {
        out.push(f(a_data[ia], b_data[ib]));
        // odometer increment
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
        }
    }
    out
}

/// Sum a gradient over broadcast dimensions back to the operand's shape.
fn reduce_grad_to(grad: &[f32], out_shape: &[usize], target: &[usize]) -> Vec<f32> {
    if out_shape == target {
        return grad.to_vec();
    }
    let numel_t: usize = target.iter().product();
    let st = operand_strides(target, out_shape);
    let mut res = vec![0.0f32; numel_t];
    let mut idx = vec![0usize; out_shape.len()];
    let mut it = 0usize;
    for g in grad {
        res[it] += *g;
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            it += st[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            it -= st[d] * out_shape[d];
        }
    }
    res
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
            Binary::Pow => "pow",
        }
    }
}

impl Tensor {
    fn binary(&self, rhs: &Tensor, op: Binary) -> Result<Tensor> {
        let name = op.name();
        if op == Binary::Div && rhs.data().iter().any(|v| *v == 0.0) {
            return Err(Error::InvalidArgument {
                op: "div",
                detail: "divisor contains zero".into(),
            });
        }
        if op == Binary::Pow {
            let frac = rhs.data().iter().any(|p| p.fract() != 0.0);
            if frac && self.data().iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidArgument {
                    op: "pow",
                    detail: "fractional exponent with negative base".into(),
                });
            }
        }
        let out_shape = broadcast_shape(name, self.shape(), rhs.shape())?;
        let data = zip_broadcast(
            self.data(),
            self.shape(),
            rhs.data(),
            rhs.shape(),
            &out_shape,
            |x, y| match op {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
                Binary::Div => x / y,
                Binary::Pow => x.powf(y),
            },
        );
        let a = self.clone();
        let b = rhs.clone();
        let os = out_shape.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let (da, db): (Vec<f32>, Vec<f32>) = match op {
                Binary::Add => (g.to_vec(), g.to_vec()),
                Binary::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                Binary::Mul => (
                    zip_broadcast(g, &os, b.data(), b.shape(), &os, |gi, y| gi * y),
                    zip_broadcast(g, &os, a.data(), a.shape(), &os, |gi, x| gi * x),
                ),
                Binary::Div => {
                    let da = zip_broadcast(g, &os, b.data(), b.shape(), &os, |gi, y| gi / y);
                    let quotient =
                        zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &os, |x, y| x / y);
                    let db = zip_broadcast(&quotient, &os, b.data(), b.shape(), &os, |q, y| q / y);
                    (da, db.iter().zip(g).map(|(v, gi)| -v * gi).collect())
                }
                Binary::Pow => {
                    let da = zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &os, |x, p| {
                        p * x.powf(p - 1.0)
                    });
                    let db = zip_broadcast(a.data(), a.shape(), b.data(), b.shape(), &os, |x, p| {
                        if x > 0.0 {
                            x.powf(p) * x.ln()
                        } else {
                            0.0
                        }
                    });
                    (
                        da.iter().zip(g).map(|(v, gi)| v * gi).collect(),
                        db.iter().zip(g).map(|(v, gi)| v * gi).collect(),
                    )
                }
            };
            vec![
                Some(reduce_grad_to(&da, &os, a.shape())),
                Some(reduce_grad_to(&db, &os, b.shape())),
            ]
        };
        Tensor::from_op(name, out_shape, data, vec![self.clone(), rhs.clone()], Box::new(backward))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Binary::Add)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Binary::Sub)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Binary::Mul)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Binary::Div)
    }

    pub fn pow(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, Binary::Pow)
    }

    pub fn add_scalar(&self, v: f32) -> Result<Tensor> {
        self.binary(&Tensor::scalar(v), Binary::Add)
    }

    pub fn mul_scalar(&self, v: f32) -> Result<Tensor> {
        self.binary(&Tensor::scalar(v), Binary::Mul)
    }

    pub fn pow_scalar(&self, p: f32) -> Result<Tensor> {
        self.binary(&Tensor::scalar(p), Binary::Pow)
    }

    pub fn sqr(&self) -> Result<Tensor> {
        self.binary(self, Binary::Mul)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.mul_scalar(-1.0)
    }

    // ── Unary ────────────────────────────────────────────────────────

    pub fn exp(&self) -> Result<Tensor> {
        let data: Vec<f32> = self.data().iter().map(|v| v.exp()).collect();
        let out = data.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            vec![Some(out.iter().zip(g).map(|(y, gi)| y * gi).collect())]
        };
        Tensor::from_op("exp", self.shape().to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        if self.data().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument {
                op: "sqrt",
                detail: "negative input".into(),
            });
        }
        let data: Vec<f32> = self.data().iter().map(|v| v.sqrt()).collect();
        let out = data.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            vec![Some(
                out.iter().zip(g).map(|(y, gi)| if *y > 0.0 { 0.5 / y * gi } else { 0.0 }).collect(),
            )]
        };
        Tensor::from_op("sqrt", self.shape().to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    /// x * sigmoid(x).
    pub fn silu(&self) -> Result<Tensor> {
        fn sigmoid(x: f32) -> f32 {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        }
        let data: Vec<f32> = self.data().iter().map(|x| x * sigmoid(*x)).collect();
        let x = self.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            vec![Some(
                x.data()
                    .iter()
                    .zip(g)
                    .map(|(xi, gi)| {
                        let s = sigmoid(*xi);
                        (s + xi * s * (1.0 - s)) * gi
                    })
                    .collect(),
            )]
        };
        Tensor::from_op("silu", self.shape().to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    /// Clamp with pass-through subgradient inside the interval.
    pub fn clamp(&self, lo: f32, hi: f32) -> Result<Tensor> {
        let data: Vec<f32> = self.data().iter().map(|v| v.clamp(lo, hi)).collect();
        let x = self.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            vec![Some(
                x.data()
                    .iter()
                    .zip(g)
                    .map(|(xi, gi)| if *xi >= lo && *xi <= hi { *gi } else { 0.0 })
                    .collect(),
            )]
        };
        Tensor::from_op("clamp", self.shape().to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    // ── Matmul ───────────────────────────────────────────────────────

    /// [M,K] x [K,N] -> [M,N].
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (a_shape, b_shape) = (self.shape(), rhs.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{a_shape:?} x {b_shape:?}"),
            });
        }
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let data = mm(self.data(), rhs.data(), m, k, n, false, false);
        let a = self.clone();
        let b = rhs.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            // dA = G B^T, dB = A^T G
            let da = mm(g, b.data(), m, n, k, false, true);
            let db = mm(a.data(), g, k, m, n, true, false);
            vec![Some(da), Some(db)]
        };
        Tensor::from_op("matmul", vec![m, n], data, vec![self.clone(), rhs.clone()], Box::new(backward))
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose2d",
                detail: format!("{s:?} is not rank 2"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let src = self.data();
        let mut data = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; r * c];
            for j in 0..c {
                for i in 0..r {
                    dg[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(dg)]
        };
        Tensor::from_op("transpose2d", vec![c, r], data, vec![self.clone()], Box::new(backward))
    }

    // ── Reductions (f64 accumulation) ────────────────────────────────

    pub fn sum_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().map(|v| *v as f64).sum();
        let n = self.numel();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> { vec![Some(vec![g[0]; n])] };
        Tensor::from_op("sum_all", vec![1], vec![s as f32], vec![self.clone()], Box::new(backward))
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.numel();
        let s: f64 = self.data().iter().map(|v| *v as f64).sum();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            vec![Some(vec![g[0] / n as f32; n])]
        };
        Tensor::from_op(
            "mean_all",
            vec![1],
            vec![(s / n as f64) as f32],
            vec![self.clone()],
            Box::new(backward),
        )
    }

    /// Mean over the last dimension, keeping it as size 1.
    pub fn mean_last_keepdim(&self) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or(Error::InvalidArgument {
            op: "mean_last_keepdim",
            detail: "rank 0".into(),
        })?;
        let rows = self.numel() / d;
        let mut data = Vec::with_capacity(rows);
        for r in 0..rows {
            let acc: f64 = self.data()[r * d..(r + 1) * d].iter().map(|v| *v as f64).sum();
            data.push((acc / d as f64) as f32);
        }
        let mut out_shape = s.to_vec();
        *out_shape.last_mut().unwrap() = 1;
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; rows * d];
            for r in 0..rows {
                let v = g[r] / d as f32;
                dg[r * d..(r + 1) * d].fill(v);
            }
            vec![Some(dg)]
        };
        Tensor::from_op("mean_last_keepdim", out_shape, data, vec![self.clone()], Box::new(backward))
    }

    /// Numerically stable softmax over the last dimension.
    pub fn softmax_last_dim(&self) -> Result<Tensor> {
        let s = self.shape();
        let d = *s.last().ok_or(Error::InvalidArgument {
            op: "softmax_last_dim",
            detail: "rank 0".into(),
        })?;
        let rows = self.numel() / d;
        let mut data = vec![0.0f32; self.numel()];
        for r in 0..rows {
            let row = &self.data()[r * d..(r + 1) * d];
            let mx = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut denom = 0.0f64;
            for (i, v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                data[r * d + i] = e;
                denom += e as f64;
            }
            for i in 0..d {
                data[r * d + i] = (data[r * d + i] as f64 / denom) as f32;
            }
        }
        let y = data.clone();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; y.len()];
            for r in 0..rows {
                let yr = &y[r * d..(r + 1) * d];
                let gr = &g[r * d..(r + 1) * d];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| *a as f64 * *b as f64).sum();
                for i in 0..d {
                    dg[r * d + i] = yr[i] * (gr[i] - dot as f32);
                }
            }
            vec![Some(dg)]
        };
        Tensor::from_op("softmax_last_dim", s.to_vec(), data, vec![self.clone()], Box::new(backward))
    }

    // ── Shape manipulation ───────────────────────────────────────────

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        let numel: usize = new_shape.iter().product();
        if numel != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape(), new_shape),
            });
        }
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> { vec![Some(g.to_vec())] };
        Tensor::from_op(
            "reshape",
            new_shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(backward),
        )
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::InvalidArgument {
                op: "narrow",
                detail: format!("axis {axis} [{start}, {}) of {s:?}", start + len),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let d = s[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * d * inner + start * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut out_shape = s.to_vec();
        out_shape[axis] = len;
        let full = self.numel();
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; full];
            for o in 0..outer {
                let src = o * len * inner;
                let dst = o * d * inner + start * inner;
                dg[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            vec![Some(dg)]
        };
        Tensor::from_op("narrow", out_shape, data, vec![self.clone()], Box::new(backward))
    }

    /// Concatenate along `axis`; all other dimensions must match.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument { op: "concat", detail: "no inputs".into() });
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::InvalidArgument {
                op: "concat",
                detail: format!("axis {axis} for rank {}", first.len()),
            });
        }
        let mut axis_total = 0usize;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter().zip(first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    detail: format!("{s:?} vs {first:?} (axis {axis})"),
                });
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.to_vec();
        out_shape[axis] = axis_total;
        let mut data = vec![0.0f32; outer * axis_total * inner];
        let mut offset = 0usize;
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            let d = p.shape()[axis];
            sizes.push(d);
            for o in 0..outer {
                let src = o * d * inner;
                let dst = o * axis_total * inner + offset * inner;
                data[dst..dst + d * inner].copy_from_slice(&p.data()[src..src + d * inner]);
            }
            offset += d;
        }
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut grads = Vec::with_capacity(sizes.len());
            let mut offset = 0usize;
            for d in &sizes {
                let mut dg = vec![0.0f32; outer * d * inner];
                for o in 0..outer {
                    let src = o * axis_total * inner + offset * inner;
                    let dst = o * d * inner;
                    dg[dst..dst + d * inner].copy_from_slice(&g[src..src + d * inner]);
                }
                grads.push(Some(dg));
                offset += d;
            }
            grads
        };
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op("concat", out_shape, data, parents, Box::new(backward))
    }

    /// Reorder dimensions; `axes` must be a permutation of 0..rank.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let s = self.shape();
        let rank = s.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|a| *a >= rank || std::mem::replace(&mut seen[*a], true)) {
            return Err(Error::InvalidArgument {
                op: "permute",
                detail: format!("{axes:?} is not a permutation of 0..{rank}"),
            });
        }
        let out_shape: Vec<usize> = axes.iter().map(|a| s[*a]).collect();
        let in_strides = strides(s);
        let perm = permute_indices(s, axes, &in_strides, &out_shape);
        let data: Vec<f32> = perm.iter().map(|i| self.data()[*i]).collect();
        let numel = self.numel();
        let perm_back = perm;
        let backward = move |g: &[f32]| -> Vec<Option<Vec<f32>>> {
            let mut dg = vec![0.0f32; numel];
            for (out_i, src_i) in perm_back.iter().enumerate() {
                dg[*src_i] += g[out_i];
            }
            vec![Some(dg)]
        };
        Tensor::from_op("permute", out_shape, data, vec![self.clone()], Box::new(backward))
    }
}

impl Tensor {
    /// [F, C, H, W] -> [F*(H/p)*(W/p), C*p*p] patch rows, in frame-major,
    /// row-major patch order.
    pub fn patchify(&self, p: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 || s[2] % p != 0 || s[3] % p != 0 {
            return Err(Error::ShapeMismatch {
                op: "patchify",
                detail: format!("{s:?} with patch {p}"),
            });
        }
        let (f, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (hp, wp) = (h / p, w / p);
        self.reshape(&[f, c, hp, p, wp, p])?
            .permute(&[0, 2, 4, 1, 3, 5])?
            .reshape(&[f * hp * wp, c * p * p])
    }

    /// Inverse of [`Tensor::patchify`].
    pub fn unpatchify(&self, p: usize, f: usize, c: usize, h: usize, w: usize) -> Result<Tensor> {
        let (hp, wp) = (h / p, w / p);
        if self.shape() != [f * hp * wp, c * p * p] {
            return Err(Error::ShapeMismatch {
                op: "unpatchify",
                detail: format!("{:?} vs target [{f},{c},{h},{w}] patch {p}", self.shape()),
            });
        }
        self.reshape(&[f, hp, wp, c, p, p])?
            .permute(&[0, 3, 1, 4, 2, 5])?
            .reshape(&[f, c, h, w])
    }
}

/// Source index for every output position of a permutation.
fn permute_indices(
    in_shape: &[usize],
    axes: &[usize],
    in_strides: &[usize],
    out_shape: &[usize],
) -> Vec<usize> {
    let numel: usize = in_shape.iter().product();
    let mut res = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let out_strides_in: Vec<usize> = axes.iter().map(|a| in_strides[*a]).collect();
    let mut src = 0usize;
    for _ in 0..numel {
        res.push(src);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            src += out_strides_in[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            src -= out_strides_in[d] * out_shape[d];
        }
    }
    res
}

/// Raw matmul with optional operand transposition, f64 accumulation.
/// Operands are first materialized row-major so the hot loop runs in
/// cache-friendly i-p-j order.
pub(crate) fn mm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<f32> {
    let a_rm: Vec<f32>;
    let a = if ta {
        a_rm = transpose_raw(a, k, m);
        &a_rm[..]
    } else {
        a
    };
    let b_rm: Vec<f32>;
    let b = if tb {
        b_rm = transpose_raw(b, n, k);
        &b_rm[..]
    } else {
        b
    };
    let mut out = vec![0.0f32; m * n];
    let mut row = vec![0.0f64; n];
    for i in 0..m {
        row.fill(0.0);
        for p in 0..k {
            let av = a[i * k + p] as f64;
            let brow = &b[p * n..(p + 1) * n];
            for (acc, bv) in row.iter_mut().zip(brow) {
                *acc += av * *bv as f64;
            }
        }
        for (o, acc) in out[i * n..(i + 1) * n].iter_mut().zip(&row) {
            *o = *acc as f32;
        }
    }
    out
}

fn transpose_raw(x: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

/// Guard used by callers that must fail fast on non-finite buffers.
pub fn ensure_finite(op: &'static str, t: &Tensor) -> Result<()> {
    check_finite(op, t.data())
}

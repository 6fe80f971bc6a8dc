//! Central finite-difference verification of reverse-mode gradients.

use super::Tensor;
use crate::error::{Error, Result};

/// Compare the tape gradient of a scalar function against central finite
/// differences at `x`, perturbing one coordinate at a time.
///
/// Returns the maximum coordinate error normalized by the larger of the two
/// gradients' infinity norms, so the figure is relative to the gradient's
/// scale rather than to individual (possibly zero) coordinates.
pub fn finite_diff_check(
    f: impl Fn(&Tensor) -> Result<Tensor>,
    x: &Tensor,
    eps: f32,
) -> Result<f64> {
    if !(1e-4..=1e-2).contains(&eps) {
        return Err(Error::InvalidArgument {
            op: "finite_diff_check",
            detail: format!("eps {eps} outside [1e-4, 1e-2]"),
        });
    }
    let leaf = x.detach().requires_grad();
    let out = f(&leaf)?;
    let val = out.item()?;
    if !val.is_finite() {
        return Err(Error::NonFinite {
            op: "finite_diff_check",
            detail: "objective returned non-finite value".into(),
        });
    }
    let grads = out.backward()?;
    let analytic = grads.get_or_zeros(&leaf);

    let base = x.to_vec();
    let mut numeric = vec![0.0f64; base.len()];
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += eps;
        minus[i] -= eps;
        let fp = f(&Tensor::new(x.shape(), plus)?)?.item()? as f64;
        let fm = f(&Tensor::new(x.shape(), minus)?)?.item()? as f64;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_diff_check",
                detail: format!("objective non-finite at perturbed coordinate {i}"),
            });
        }
        numeric[i] = (fp - fm) / (2.0 * eps as f64);
    }

    let scale = analytic
        .iter()
        .map(|v| (*v as f64).abs())
        .chain(numeric.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let max_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (*a as f64 - n).abs())
        .fold(0.0f64, f64::max);
    Ok(max_err / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const DYADIC_EPS: f32 = 0.0078125; // 2^-7

    #[test]
    fn sum_of_squares_gradient_is_exact() {
        // f(x) = sum x^2 at x = [1, 2]: analytic grad [2, 4].
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let err = finite_diff_check(|x| x.sqr()?.sum_all(), &x, DYADIC_EPS).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn eps_outside_range_rejected() {
        let x = Tensor::new(&[1], vec![1.0]).unwrap();
        assert!(finite_diff_check(|x| x.sum_all(), &x, 1e-5).is_err());
        assert!(finite_diff_check(|x| x.sum_all(), &x, 0.5).is_err());
    }

    #[test]
    fn non_finite_objective_rejected() {
        let x = Tensor::new(&[1], vec![100.0]).unwrap();
        // exp overflows f32 at the perturbed points -> op errors.
        let r = finite_diff_check(|x| x.mul_scalar(1e6)?.exp()?.sum_all(), &x, 1e-3);
        assert!(r.is_err());
    }

    /// Every differentiable op composition agrees with central differences
    /// on randomized small shapes, 20+ seeds.
    #[test]
    fn randomized_composite_graphs_pass() {
        for seed in 0..24u64 {
            let mut rng = Rng::new(seed);
            let x = Tensor::randn(&[3, 4], &mut rng);
            let w = Tensor::randn(&[4, 3], &mut rng);
            let b = Tensor::randn(&[3], &mut rng);
            let err = finite_diff_check(
                |x| {
                    let h = x.matmul(&w)?.add(&b)?.silu()?;
                    let s = h.softmax_last_dim()?;
                    let m = s.mul(&h)?.box_blur(3)?;
                    m.sqr()?.mean_all()
                },
                &x,
                0.005,
            )
            .unwrap();
            assert!(err < 1e-3, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn blur_and_resample_gradients_pass() {
        for seed in 0..20u64 {
            let mut rng = Rng::new(1000 + seed);
            let x = Tensor::randn(&[2, 4, 4], &mut rng);
            let err = finite_diff_check(
                |x| {
                    let d = x.resample_down(2)?.resample_up(2)?;
                    let lp = d.box_blur(3)?;
                    lp.sub(&d)?.sqr()?.sum_all()
                },
                &x,
                0.005,
            )
            .unwrap();
            assert!(err < 1e-3, "seed {seed}: rel err {err}");
        }
    }
}

//! Photometric and depth training losses, and evaluation metrics.
//!
//! The training objective is
//! `(1 − λ_ssim)·L1 + λ_ssim·(1 − SSIM) + λ_d·L_depth`.

mod depth;
mod ssim;

pub use depth::{loss_depth, normalize_depth, DEPTH_EPS};
pub use ssim::{gaussian_taps, C1, C2, WINDOW, WINDOW_SIGMA};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image};
use crate::scalar::Scalar;

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_ssim: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ssim: 0.2,
            lambda_d: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_ssim) || !(self.lambda_d >= 0.0) {
            return Err(Error::InvalidParameter(format!("loss weights out of range: {self:?}")));
        }
        Ok(())
    }
}

fn check_same<T: Scalar>(x: &Image<T>, y: &Image<T>) -> Result<()> {
    if !x.same_shape(y) {
        return Err(Error::contract(format!(
            "image sizes differ: {}x{} vs {}x{}",
            x.width, x.height, y.width, y.height
        )));
    }
    Ok(())
}

/// Mean absolute difference over all channels, with its gradient on `x`.
pub fn loss_l1<T: Scalar>(x: &Image<T>, x_ref: &Image<T>) -> Result<(T, Vec<T>)> {
    check_same(x, x_ref)?;
    let n = T::from_usize_lossy(x.data.len());
    let mut sum = T::zero();
    let grad = x
        .data
        .iter()
        .zip(&x_ref.data)
        .map(|(&a, &b)| {
            let d = a - b;
            sum += d.abs();
            if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((sum / n, grad))
}

/// `1 − SSIM(x, x_ref)` with its gradient on `x`.
pub fn loss_dssim<T: Scalar>(x: &Image<T>, x_ref: &Image<T>) -> Result<(T, Vec<T>)> {
    check_same(x, x_ref)?;
    let (s, g) = ssim::ssim_with_grad(x, x_ref, true);
    let grad = g.unwrap().into_iter().map(|v| -v).collect();
    Ok((T::one() - s, grad))
}

/// Mean SSIM, using the same window as [`loss_dssim`].
pub fn ssim_metric<T: Scalar>(x: &Image<T>, x_ref: &Image<T>) -> Result<f64> {
    check_same(x, x_ref)?;
    Ok(ssim::ssim_with_grad(x, x_ref, false).0.as_f64())
}

/// `10·log10(1 / MSE)`; identical images give `+∞`.
pub fn psnr<T: Scalar>(x: &Image<T>, x_ref: &Image<T>) -> Result<f64> {
    check_same(x, x_ref)?;
    let mse = x
        .data
        .iter()
        .zip(&x_ref.data)
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum::<f64>()
        / x.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Weighted loss value, its components, and gradients on the rendered color
/// and depth.
#[derive(Debug, Clone)]
pub struct TotalLoss<T> {
    pub total: T,
    pub l1: T,
    pub dssim: T,
    pub depth: T,
    pub grad_color: Vec<T>,
    pub grad_depth: Option<Vec<T>>,
}

/// Combined objective. The depth term is included when `depth` is given
/// and `lambda_d > 0`.
pub fn loss_total<T: Scalar>(
    x: &Image<T>,
    x_ref: &Image<T>,
    depth: Option<(&DepthMap<T>, &DepthMap<T>)>,
    w: &LossWeights,
) -> Result<TotalLoss<T>> {
    w.validate()?;
    let ls = T::lit(w.lambda_ssim);
    let ld = T::lit(w.lambda_d);
    let (l1, g_l1) = loss_l1(x, x_ref)?;
    let (dssim, g_dssim) = if w.lambda_ssim > 0.0 {
        loss_dssim(x, x_ref)?
    } else {
        (T::zero(), vec![T::zero(); x.data.len()])
    };
    let grad_color = g_l1
        .iter()
        .zip(&g_dssim)
        .map(|(&a, &b)| (T::one() - ls) * a + ls * b)
        .collect();
    let (depth_value, grad_depth) = match depth {
        Some((render, mono)) if w.lambda_d > 0.0 => {
            let (v, g) = loss_depth(render, mono)?;
            (v, Some(g.into_iter().map(|v| v * ld).collect()))
        }
        _ => (T::zero(), None),
    };
    Ok(TotalLoss {
        total: (T::one() - ls) * l1 + ls * dssim + ld * depth_value,
        l1,
        dssim,
        depth: depth_value,
        grad_color,
        grad_depth,
    })
}

//! Windowed SSIM with an 11×11 Gaussian window (σ = 1.5), zero padded to
//! the input size, and its analytic gradient.

use crate::image::Image;
use crate::scalar::Scalar;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps<T: Scalar>() -> [T; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    std::array::from_fn(|i| T::lit(raw[i] / sum))
}

/// Separable, zero-padded "same" convolution of a `w × h` plane. The window
/// is symmetric, so this is also its own adjoint.
pub(crate) fn blur<T: Scalar>(plane: &[T], w: usize, h: usize, taps: &[T; WINDOW]) -> Vec<T> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += t * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    acc += t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

struct ChannelSsim<T> {
    mean: T,
    /// d(mean SSIM of this channel · n_pixels)/dx, only when requested.
    grad: Option<Vec<T>>,
}

fn channel_ssim<T: Scalar>(x: &[T], y: &[T], w: usize, h: usize, want_grad: bool) -> ChannelSsim<T> {
    let taps = gaussian_taps::<T>();
    let n = w * h;
    let xx: Vec<T> = x.iter().map(|&v| v * v).collect();
    let yy: Vec<T> = y.iter().map(|&v| v * v).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a * b).collect();
    let mx = blur(x, w, h, &taps);
    let my = blur(y, w, h, &taps);
    let exx = blur(&xx, w, h, &taps);
    let eyy = blur(&yy, w, h, &taps);
    let exy = blur(&xy, w, h, &taps);
    let (c1, c2) = (T::lit(C1), T::lit(C2));
    let two = T::lit(2.0);

    let mut total = T::zero();
    let mut d_mx = vec![T::zero(); if want_grad { n } else { 0 }];
    let mut d_exx = d_mx.clone();
    let mut d_exy = d_mx.clone();
    for i in 0..n {
        let a1 = two * mx[i] * my[i] + c1;
        let a2 = two * (exy[i] - mx[i] * my[i]) + c2;
        let b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
        let b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + c2;
        let s = (a1 * a2) / (b1 * b2);
        total += s;
        if want_grad {
            let bb = b1 * b2;
            d_mx[i] = two * my[i] * (a2 - a1) / bb - s * two * mx[i] * (T::one() / b1 - T::one() / b2);
            d_exx[i] = -s / b2;
            d_exy[i] = two * a1 / bb;
        }
    }
    let grad = want_grad.then(|| {
        let g_mx = blur(&d_mx, w, h, &taps);
        let g_exx = blur(&d_exx, w, h, &taps);
        let g_exy = blur(&d_exy, w, h, &taps);
        (0..n)
            .map(|i| g_mx[i] + two * x[i] * g_exx[i] + y[i] * g_exy[i])
            .collect()
    });
    ChannelSsim {
        mean: total / T::from_usize_lossy(n),
        grad,
    }
}

/// Mean SSIM over pixels and channels, plus `d(mean SSIM)/dx` if requested.
pub(crate) fn ssim_with_grad<T: Scalar>(x: &Image<T>, y: &Image<T>, want_grad: bool) -> (T, Option<Vec<T>>) {
    let (w, h) = (x.width, x.height);
    let mut mean = T::zero();
    let mut grad = want_grad.then(|| vec![T::zero(); w * h * 3]);
    let count = T::from_usize_lossy(w * h * 3);
    for c in 0..3 {
        let xc = x.channel(c);
        let yc = y.channel(c);
        let r = channel_ssim(&xc, &yc, w, h, want_grad);
        mean += r.mean;
        if let (Some(out), Some(g)) = (grad.as_mut(), r.grad) {
            for (p, v) in g.into_iter().enumerate() {
                out[p * 3 + c] = v / count;
            }
        }
    }
    (mean / T::lit(3.0), grad)
}

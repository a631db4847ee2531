//! Differentiable software rasterizer for Gaussian clouds.
//!
//! Gaussians are sorted once per camera by camera-space depth, binned into
//! 16×16 pixel tiles, and composited front to back per pixel. Tiles are
//! independent, so the forward pass is data-parallel and bit-reproducible for
//! any worker count. The backward pass in [`backward`] replays the same
//! per-pixel sequence.

mod backward;

pub use backward::{render_backward, GradientBuffer, Upstream};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::sh::eval_sh_raw;
use crate::gaussian::{
    covariance_from_params, jacobian_times_rotation, perspective_jacobian, screen_covariance, Camera,
    GaussianCloud, LOW_PASS, NEAR_PLANE,
};
use crate::image::Image;
use crate::math;
use crate::scalar::Scalar;

pub const TILE_SIZE: usize = 16;
/// Per-Gaussian alpha is clipped to this value.
pub const ALPHA_MAX: f64 = 0.99;
/// Contributions below this alpha are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;

/// Screen-space record of a Gaussian that can touch the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat<T> {
    pub mean2d: [T; 2],
    /// Dilated covariance `(xx, xy, yy)`.
    pub cov2d: [T; 3],
    /// Inverse of `cov2d`, same layout.
    pub conic: [T; 3],
    pub depth: T,
    pub color: [T; 3],
    /// Channels whose raw SH value fell outside [0, 1].
    pub clamped: [bool; 3],
    pub opacity: T,
    pub radius: T,
    /// Inclusive pixel bounds `(x0, x1, y0, y1)`.
    pub bbox: [usize; 4],
}

/// Everything the backward pass needs from a forward render.
#[derive(Debug, Clone)]
pub struct ScreenCache<T> {
    /// Indexed by Gaussian; `None` for culled or off-screen Gaussians.
    pub splats: Vec<Option<Splat<T>>>,
    /// Visible Gaussians, front to back.
    pub order: Vec<u32>,
    pub(crate) tiles: Vec<Vec<u32>>,
    pub(crate) tiles_x: usize,
    /// Per pixel: how many entries of its tile list were consumed.
    pub(crate) n_consumed: Vec<u32>,
    pub final_transmittance: Vec<T>,
    pub(crate) sh_degree: usize,
    pub(crate) background: [T; 3],
}

impl<T> ScreenCache<T> {
    pub fn is_visible(&self, index: usize) -> bool {
        self.splats[index].is_some()
    }

    pub fn gaussian_count(&self) -> usize {
        self.splats.len()
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput<T> {
    pub color: Image<T>,
    /// Unnormalized expected depth `Σ zᵢ·αᵢ·Tᵢ`.
    pub depth: Vec<T>,
    pub alpha: Vec<T>,
    pub cache: ScreenCache<T>,
}

/// One composited term at a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution<T> {
    pub gaussian: usize,
    pub alpha: T,
    /// Transmittance in front of this Gaussian.
    pub transmittance: T,
}

fn tile_count(n: usize) -> usize {
    n.div_ceil(TILE_SIZE)
}

pub(crate) fn make_splat<T: Scalar>(
    g: &crate::gaussian::Gaussian<T>,
    sh_degree: usize,
    cam: &Camera<T>,
    cam_center: math::Vec3<T>,
) -> Option<Splat<T>> {
    let t = cam.world_to_camera(g.center);
    if !(t[2] > T::lit(NEAR_PLANE)) {
        return None;
    }
    let opacity = g.opacity();
    let reach = T::lit(255.0) * opacity;
    if !(reach > T::one()) {
        return None;
    }
    let sigma = covariance_from_params(g.unit_rotation(), g.scale()).ok()?;
    let inv_z = T::one() / t[2];
    let mean2d = [cam.cx + cam.fx * t[0] * inv_z, cam.cy + cam.fy * t[1] * inv_z];
    let jw = jacobian_times_rotation(&perspective_jacobian(cam, t), &cam.rotation);
    let mut cov2d = screen_covariance(&jw, &sigma);
    let dil = T::lit(LOW_PASS);
    cov2d[0] += dil;
    cov2d[2] += dil;
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > T::zero()) {
        return None;
    }
    let conic = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];
    let half = T::lit(0.5);
    let mid = half * (cov2d[0] + cov2d[2]);
    let lambda_max = mid + (mid * mid - det).max(T::zero()).sqrt();
    // Beyond this Mahalanobis reach the alpha is below the skip threshold.
    let radius = (T::lit(2.0) * reach.ln() * lambda_max).sqrt();
    let bound = |lo: T, hi: T, n: usize| -> Option<(usize, usize)> {
        let lo = lo.ceil().max(T::zero());
        let hi = hi.floor().min(T::from_usize_lossy(n - 1));
        if !(lo <= hi) {
            return None;
        }
        Some((lo.to_usize()?, hi.to_usize()?))
    };
    let (x0, x1) = bound(mean2d[0] - radius, mean2d[0] + radius, cam.width)?;
    let (y0, y1) = bound(mean2d[1] - radius, mean2d[1] + radius, cam.height)?;
    let dir = math::normalize(math::sub(g.center, cam_center));
    let raw = eval_sh_raw(&g.sh, sh_degree, dir);
    let clamped = raw.map(|v| v < T::zero() || v > T::one());
    let color = raw.map(|v| v.max(T::zero()).min(T::one()));
    Some(Splat {
        mean2d,
        cov2d,
        conic,
        depth: t[2],
        color,
        clamped,
        opacity,
        radius,
        bbox: [x0, x1, y0, y1],
    })
}

/// Gaussian falloff exponent at pixel `(px, py)`.
#[inline]
pub(crate) fn falloff_power<T: Scalar>(s: &Splat<T>, px: T, py: T) -> (T, T, T) {
    let dx = px - s.mean2d[0];
    let dy = py - s.mean2d[1];
    let half = T::lit(0.5);
    let power = -half * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    (power, dx, dy)
}

/// Alpha of splat `s` at a pixel, or `None` when it is skipped there.
#[inline]
pub(crate) fn splat_alpha<T: Scalar>(s: &Splat<T>, px: T, py: T) -> Option<(T, T, T, T, bool)> {
    let (power, dx, dy) = falloff_power(s, px, py);
    if power > T::zero() {
        return None;
    }
    let falloff = power.exp();
    let raw = s.opacity * falloff;
    let amax = T::lit(ALPHA_MAX);
    let (alpha, clipped) = if raw > amax { (amax, true) } else { (raw, false) };
    if alpha < T::lit(ALPHA_MIN) {
        return None;
    }
    Some((alpha, falloff, dx, dy, clipped))
}

struct TilePixels<T> {
    color: Vec<[T; 3]>,
    depth: Vec<T>,
    final_t: Vec<T>,
    consumed: Vec<u32>,
}

/// Renders `cloud` from `cam`, compositing over `background`.
pub fn render<T: Scalar>(cloud: &GaussianCloud<T>, cam: &Camera<T>, background: [T; 3]) -> Result<RenderOutput<T>> {
    cam.validate(T::lit(1e-4))?;
    cloud.validate()?;
    if let Some(index) = cloud.gaussians.iter().position(|g| !g.is_finite()) {
        return Err(Error::Render { index });
    }
    let (w, h) = (cam.width, cam.height);
    let cam_center = cam.center();
    let splats: Vec<Option<Splat<T>>> = cloud
        .gaussians
        .par_iter()
        .map(|g| make_splat(g, cloud.sh_degree, cam, cam_center))
        .collect();

    let mut order: Vec<u32> = (0..splats.len() as u32).filter(|&i| splats[i as usize].is_some()).collect();
    // Stable: equal depths keep index order.
    order.sort_by(|&a, &b| {
        let da = splats[a as usize].as_ref().unwrap().depth;
        let db = splats[b as usize].as_ref().unwrap().depth;
        da.partial_cmp(&db).unwrap()
    });

    let tiles_x = tile_count(w);
    let tiles_y = tile_count(h);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &gi in &order {
        let b = splats[gi as usize].as_ref().unwrap().bbox;
        for ty in b[2] / TILE_SIZE..=b[3] / TILE_SIZE {
            for tx in b[0] / TILE_SIZE..=b[1] / TILE_SIZE {
                tiles[ty * tiles_x + tx].push(gi);
            }
        }
    }

    let tmin = T::lit(TRANSMITTANCE_MIN);
    let per_tile: Vec<TilePixels<T>> = tiles
        .par_iter()
        .enumerate()
        .map(|(ti, list)| {
            let (tx, ty) = (ti % tiles_x, ti / tiles_x);
            let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w);
            let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h);
            let n = xs.len() * ys.len();
            let mut out = TilePixels {
                color: Vec::with_capacity(n),
                depth: Vec::with_capacity(n),
                final_t: Vec::with_capacity(n),
                consumed: Vec::with_capacity(n),
            };
            for y in ys {
                let py = T::from_usize_lossy(y);
                for x in xs.clone() {
                    let px = T::from_usize_lossy(x);
                    let mut trans = T::one();
                    let mut c = [T::zero(); 3];
                    let mut d = T::zero();
                    let mut consumed = 0u32;
                    for (k, &gi) in list.iter().enumerate() {
                        let s = splats[gi as usize].as_ref().unwrap();
                        let Some((alpha, ..)) = splat_alpha(s, px, py) else {
                            continue;
                        };
                        let wgt = alpha * trans;
                        for ch in 0..3 {
                            c[ch] += s.color[ch] * wgt;
                        }
                        d += s.depth * wgt;
                        trans *= T::one() - alpha;
                        consumed = k as u32 + 1;
                        if trans < tmin {
                            break;
                        }
                    }
                    for ch in 0..3 {
                        c[ch] += background[ch] * trans;
                    }
                    out.color.push(c);
                    out.depth.push(d);
                    out.final_t.push(trans);
                    out.consumed.push(consumed);
                }
            }
            out
        })
        .collect();

    let mut color = Image::zeros(w, h);
    let mut depth = vec![T::zero(); w * h];
    let mut alpha = vec![T::zero(); w * h];
    let mut final_t = vec![T::one(); w * h];
    let mut consumed = vec![0u32; w * h];
    for (ti, tile) in per_tile.into_iter().enumerate() {
        let (tx, ty) = (ti % tiles_x, ti / tiles_x);
        let mut k = 0;
        for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
            for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                let p = y * w + x;
                color.set_pixel(x, y, tile.color[k]);
                depth[p] = tile.depth[k];
                final_t[p] = tile.final_t[k];
                alpha[p] = T::one() - tile.final_t[k];
                consumed[p] = tile.consumed[k];
                k += 1;
            }
        }
    }

    Ok(RenderOutput {
        color,
        depth,
        alpha,
        cache: ScreenCache {
            splats,
            order,
            tiles,
            tiles_x,
            n_consumed: consumed,
            final_transmittance: final_t,
            sh_degree: cloud.sh_degree,
            background,
        },
    })
}

impl<T: Scalar> RenderOutput<T> {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    /// Front-to-back compositing terms at pixel `(x, y)`.
    pub fn contributions(&self, x: usize, y: usize) -> Vec<Contribution<T>> {
        let cache = &self.cache;
        let w = self.width();
        let list = &cache.tiles[(y / TILE_SIZE) * cache.tiles_x + x / TILE_SIZE];
        let consumed = cache.n_consumed[y * w + x] as usize;
        let (px, py) = (T::from_usize_lossy(x), T::from_usize_lossy(y));
        let mut trans = T::one();
        let mut out = Vec::new();
        for &gi in &list[..consumed] {
            let s = cache.splats[gi as usize].as_ref().unwrap();
            if let Some((alpha, ..)) = splat_alpha(s, px, py) {
                out.push(Contribution {
                    gaussian: gi as usize,
                    alpha,
                    transmittance: trans,
                });
                trans *= T::one() - alpha;
            }
        }
        out
    }
}

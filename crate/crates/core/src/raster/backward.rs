use rayon::prelude::*;

use super::{splat_alpha, RenderOutput, Splat, TILE_SIZE};
use crate::error::{Error, Result};
use crate::gaussian::sh::{sh_basis, sh_basis_grad};
use crate::gaussian::{
    covariance_from_params, jacobian_times_rotation, perspective_jacobian, Camera, Gaussian, GaussianCloud,
};
use crate::math::{self, Mat3, Vec3};
use crate::scalar::Scalar;

/// Loss gradients with respect to the rendered images.
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a, T> {
    /// `dL/dColor`, same layout as [`crate::image::Image::data`].
    pub color: &'a [T],
    /// `dL/dDepth` per pixel, if the loss used depth.
    pub depth: Option<&'a [T]>,
}

/// Per-Gaussian partial derivatives, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer<T> {
    pub center: Vec<Vec3<T>>,
    /// With respect to the unnormalized quaternion.
    pub rotation: Vec<[T; 4]>,
    pub log_scale: Vec<Vec3<T>>,
    pub opacity_logit: Vec<T>,
    pub sh: Vec<Vec<Vec3<T>>>,
    /// `dL/dmean2d` in pixels; zero for invisible Gaussians.
    pub mean2d: Vec<[T; 2]>,
}

impl<T: Scalar> GradientBuffer<T> {
    pub fn zeros(len: usize, sh_len: usize) -> Self {
        let z = T::zero();
        Self {
            center: vec![[z; 3]; len],
            rotation: vec![[z; 4]; len],
            log_scale: vec![[z; 3]; len],
            opacity_logit: vec![z; len],
            sh: vec![vec![[z; 3]; sh_len]; len],
            mean2d: vec![[z; 2]; len],
        }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.center.iter().flatten().all(|v| v.is_finite())
            && self.rotation.iter().flatten().all(|v| v.is_finite())
            && self.log_scale.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logit.iter().all(|v| v.is_finite())
            && self.sh.iter().flatten().flatten().all(|v| v.is_finite())
    }

    /// Adds `weight · other` into `self`.
    pub fn add_scaled(&mut self, other: &Self, weight: T) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.len() {
            for k in 0..3 {
                self.center[i][k] += weight * other.center[i][k];
                self.log_scale[i][k] += weight * other.log_scale[i][k];
            }
            for k in 0..4 {
                self.rotation[i][k] += weight * other.rotation[i][k];
            }
            self.opacity_logit[i] += weight * other.opacity_logit[i];
            for (a, b) in self.sh[i].iter_mut().zip(&other.sh[i]) {
                for k in 0..3 {
                    a[k] += weight * b[k];
                }
            }
            for k in 0..2 {
                self.mean2d[i][k] += weight * other.mean2d[i][k];
            }
        }
    }
}

/// Gradient with respect to one Gaussian's screen-space quantities.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGrad<T> {
    mean2d: [T; 2],
    conic: [T; 3],
    color: [T; 3],
    opacity: T,
    depth: T,
}

impl<T: Scalar> ScreenGrad<T> {
    fn add(&mut self, o: &Self) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

struct Term<T> {
    slot: usize,
    alpha: T,
    falloff: T,
    dx: T,
    dy: T,
    clipped: bool,
    trans: T,
}

/// Analytic gradients of a render with respect to every Gaussian parameter.
///
/// `rendered` must come from [`super::render`] on the same cloud and camera.
/// Per-tile partial sums are merged in tile index order, so the result does
/// not depend on the number of worker threads.
pub fn render_backward<T: Scalar>(
    cloud: &GaussianCloud<T>,
    cam: &Camera<T>,
    rendered: &RenderOutput<T>,
    upstream: Upstream<'_, T>,
) -> Result<GradientBuffer<T>> {
    let cache = &rendered.cache;
    let (w, h) = (cam.width, cam.height);
    if cache.splats.len() != cloud.len() || cache.sh_degree != cloud.sh_degree {
        return Err(Error::contract(format!(
            "render cache holds {} gaussians of degree {}, cloud has {} of degree {}",
            cache.splats.len(),
            cache.sh_degree,
            cloud.len(),
            cloud.sh_degree
        )));
    }
    if rendered.width() != w || rendered.height() != h {
        return Err(Error::contract("render cache was produced for a different image size"));
    }
    if upstream.color.len() != w * h * 3 || upstream.depth.is_some_and(|d| d.len() != w * h) {
        return Err(Error::contract("upstream gradient shape does not match the image"));
    }

    let bg = cache.background;
    let tiles_x = cache.tiles_x;
    let per_tile: Vec<Vec<ScreenGrad<T>>> = cache
        .tiles
        .par_iter()
        .enumerate()
        .map(|(ti, list)| {
            let mut acc = vec![ScreenGrad::<T>::default(); list.len()];
            if list.is_empty() {
                return acc;
            }
            let (tx, ty) = (ti % tiles_x, ti / tiles_x);
            let mut terms: Vec<Term<T>> = Vec::new();
            for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                let py = T::from_usize_lossy(y);
                for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let p = y * w + x;
                    let px = T::from_usize_lossy(x);
                    let g_color = [upstream.color[3 * p], upstream.color[3 * p + 1], upstream.color[3 * p + 2]];
                    let g_depth = upstream.depth.map_or(T::zero(), |d| d[p]);
                    if g_color.iter().all(|v| v.is_zero()) && g_depth.is_zero() {
                        continue;
                    }
                    terms.clear();
                    let consumed = cache.n_consumed[p] as usize;
                    let mut trans = T::one();
                    for (slot, &gi) in list[..consumed].iter().enumerate() {
                        let s = cache.splats[gi as usize].as_ref().unwrap();
                        if let Some((alpha, falloff, dx, dy, clipped)) = splat_alpha(s, px, py) {
                            terms.push(Term {
                                slot,
                                alpha,
                                falloff,
                                dx,
                                dy,
                                clipped,
                                trans,
                            });
                            trans *= T::one() - alpha;
                        }
                    }
                    // Contribution of everything behind the current term.
                    let mut behind = (g_color[0] * bg[0] + g_color[1] * bg[1] + g_color[2] * bg[2]) * trans;
                    for term in terms.iter().rev() {
                        let s: &Splat<T> = cache.splats[list[term.slot] as usize].as_ref().unwrap();
                        let wgt = term.alpha * term.trans;
                        let own = g_color[0] * s.color[0] + g_color[1] * s.color[1] + g_color[2] * s.color[2]
                            + g_depth * s.depth;
                        let d_alpha = term.trans * own - behind / (T::one() - term.alpha);
                        behind += own * wgt;

                        let a = &mut acc[term.slot];
                        for k in 0..3 {
                            a.color[k] += g_color[k] * wgt;
                        }
                        a.depth += g_depth * wgt;
                        if term.clipped {
                            continue;
                        }
                        a.opacity += d_alpha * term.falloff;
                        let d_power = d_alpha * term.alpha;
                        let half = T::lit(0.5);
                        // power = -½(a·dx² + c·dy²) - b·dx·dy, d = pixel - mean
                        a.mean2d[0] += d_power * (s.conic[0] * term.dx + s.conic[1] * term.dy);
                        a.mean2d[1] += d_power * (s.conic[1] * term.dx + s.conic[2] * term.dy);
                        a.conic[0] -= d_power * half * term.dx * term.dx;
                        a.conic[1] -= d_power * term.dx * term.dy;
                        a.conic[2] -= d_power * half * term.dy * term.dy;
                    }
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![ScreenGrad::<T>::default(); cloud.len()];
    for (list, acc) in cache.tiles.iter().zip(&per_tile) {
        for (&gi, g) in list.iter().zip(acc) {
            screen[gi as usize].add(g);
        }
    }

    let cam_center = cam.center();
    let sh_len = cloud.sh_len();
    let per_gaussian: Vec<GaussianGrad<T>> = cloud
        .gaussians
        .par_iter()
        .zip(cache.splats.par_iter())
        .zip(screen.par_iter())
        .map(|((g, splat), sg)| match splat {
            Some(s) => gaussian_backward(g, cloud.sh_degree, cam, cam_center, s, sg),
            None => GaussianGrad::zeros(sh_len),
        })
        .collect();

    let mut out = GradientBuffer::zeros(0, sh_len);
    for (gg, sg) in per_gaussian.into_iter().zip(&screen) {
        out.center.push(gg.center);
        out.rotation.push(gg.rotation);
        out.log_scale.push(gg.log_scale);
        out.opacity_logit.push(gg.opacity_logit);
        out.sh.push(gg.sh);
        out.mean2d.push(sg.mean2d);
    }
    Ok(out)
}

struct GaussianGrad<T> {
    center: Vec3<T>,
    rotation: [T; 4],
    log_scale: Vec3<T>,
    opacity_logit: T,
    sh: Vec<Vec3<T>>,
}

impl<T: Scalar> GaussianGrad<T> {
    fn zeros(sh_len: usize) -> Self {
        let z = T::zero();
        Self {
            center: [z; 3],
            rotation: [z; 4],
            log_scale: [z; 3],
            opacity_logit: z,
            sh: vec![[z; 3]; sh_len],
        }
    }
}

/// Chains screen-space gradients back through projection, covariance,
/// activations and SH evaluation.
fn gaussian_backward<T: Scalar>(
    g: &Gaussian<T>,
    degree: usize,
    cam: &Camera<T>,
    cam_center: Vec3<T>,
    s: &Splat<T>,
    sg: &ScreenGrad<T>,
) -> GaussianGrad<T> {
    let zero = T::zero();
    let two = T::lit(2.0);
    let mut out = GaussianGrad::zeros(g.sh.len());

    let sig = s.opacity;
    out.opacity_logit = sg.opacity * sig * (T::one() - sig);

    // Color → SH coefficients and view direction.
    let v = math::sub(g.center, cam_center);
    let dist = math::norm(v);
    let dir = math::scale(v, T::one() / dist);
    let d_rgb = [0, 1, 2].map(|c| if s.clamped[c] { zero } else { sg.color[c] });
    let basis = sh_basis(degree, dir);
    for (k, coef) in out.sh.iter_mut().enumerate() {
        for c in 0..3 {
            coef[c] = basis[k] * d_rgb[c];
        }
    }
    let mut d_center = [zero; 3];
    if degree > 0 {
        let basis_grad = sh_basis_grad(degree, dir);
        let mut d_dir = [zero; 3];
        for (k, coef) in g.sh.iter().enumerate().skip(1) {
            let w = coef[0] * d_rgb[0] + coef[1] * d_rgb[1] + coef[2] * d_rgb[2];
            for a in 0..3 {
                d_dir[a] += w * basis_grad[k][a];
            }
        }
        let proj = math::dot(dir, d_dir);
        for a in 0..3 {
            d_center[a] += (d_dir[a] - dir[a] * proj) / dist;
        }
    }

    // Conic → dilated 2D covariance.
    let [ca, cb, cc] = s.cov2d;
    let det = ca * cc - cb * cb;
    let inv_det2 = T::one() / (det * det);
    let [ga, gb, gc] = sg.conic;
    let d_cov_a = inv_det2 * (-cc * cc * ga + cb * cc * gb - cb * cb * gc);
    let d_cov_b = inv_det2 * (two * cb * cc * ga - (ca * cc + cb * cb) * gb + two * ca * cb * gc);
    let d_cov_c = inv_det2 * (-cb * cb * ga + ca * cb * gb - ca * ca * gc);

    // 2D covariance → 3D covariance and the projection Jacobian.
    let t = cam.world_to_camera(g.center);
    let j = perspective_jacobian(cam, t);
    let jw = jacobian_times_rotation(&j, &cam.rotation);
    let unit_q = g.unit_rotation();
    let scale = g.scale();
    let sigma = covariance_from_params(unit_q, scale).expect("finite parameters checked by render");
    let (u0, u1) = (jw[0], jw[1]);
    let mut d_sigma: Mat3<T> = [[zero; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            // Symmetrized so that dΣ matches the M·Mᵀ parameterization.
            d_sigma[i][k] = d_cov_a * u0[i] * u0[k]
                + d_cov_b * T::lit(0.5) * (u0[i] * u1[k] + u1[i] * u0[k])
                + d_cov_c * u1[i] * u1[k];
        }
    }
    let s_u0 = math::mat_vec(&sigma, u0);
    let s_u1 = math::mat_vec(&sigma, u1);
    let mut d_jw = [[zero; 3]; 2];
    for k in 0..3 {
        d_jw[0][k] = two * d_cov_a * s_u0[k] + d_cov_b * s_u1[k];
        d_jw[1][k] = d_cov_b * s_u0[k] + two * d_cov_c * s_u1[k];
    }
    let w = &cam.rotation;
    let mut d_j = [[zero; 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            d_j[r][k] = d_jw[r][0] * w[k][0] + d_jw[r][1] * w[k][1] + d_jw[r][2] * w[k][2];
        }
    }
    let inv_z = T::one() / t[2];
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;
    let (fx, fy) = (cam.fx, cam.fy);
    let mut d_t = [zero; 3];
    d_t[0] += d_j[0][2] * (-fx * inv_z2);
    d_t[1] += d_j[1][2] * (-fy * inv_z2);
    d_t[2] += d_j[0][0] * (-fx * inv_z2)
        + d_j[0][2] * (two * fx * t[0] * inv_z3)
        + d_j[1][1] * (-fy * inv_z2)
        + d_j[1][2] * (two * fy * t[1] * inv_z3);
    // Mean and depth.
    d_t[0] += sg.mean2d[0] * fx * inv_z;
    d_t[1] += sg.mean2d[1] * fy * inv_z;
    d_t[2] += -sg.mean2d[0] * fx * t[0] * inv_z2 - sg.mean2d[1] * fy * t[1] * inv_z2 + sg.depth;
    let d_world = math::mat_t_vec(w, d_t);
    out.center = math::add(d_center, d_world);

    // Σ = M·Mᵀ with M = R·diag(s).
    let r = math::quat_to_mat(unit_q);
    let mut m = r;
    for row in m.iter_mut() {
        for (c, val) in row.iter_mut().enumerate() {
            *val *= scale[c];
        }
    }
    let mut d_m = [[zero; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            d_m[i][k] = two * (d_sigma[i][0] * m[0][k] + d_sigma[i][1] * m[1][k] + d_sigma[i][2] * m[2][k]);
        }
    }
    let mut d_r = [[zero; 3]; 3];
    for c in 0..3 {
        let mut d_s = zero;
        for i in 0..3 {
            d_s += d_m[i][c] * r[i][c];
            d_r[i][c] = d_m[i][c] * scale[c];
        }
        out.log_scale[c] = d_s * scale[c];
    }
    let d_unit_q = math::quat_to_mat_backward(unit_q, &d_r);
    out.rotation = math::quat_normalize_backward(g.rotation, d_unit_q);
    out
}

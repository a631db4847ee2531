//! Pinhole cameras and perspective projection of 3D Gaussians.

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};
use crate::scalar::Scalar;

use super::{covariance_from_params, Gaussian};

/// Near clipping distance in camera space; centers at or in front of it are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic dilation added to every screen-space covariance, in px².
pub const LOW_PASS: f64 = 0.3;

/// Pinhole camera with a world-to-camera rigid pose.
///
/// Camera space is +x right, +y down, +z forward. Pixel `(i, j)` is sampled
/// at the continuous coordinate `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    pub width: usize,
    pub height: usize,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Scalar> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: Mat3<T>,
        translation: Vec3<T>,
    ) -> Result<Self> {
        let cam = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        };
        cam.validate(T::lit(1e-6))?;
        Ok(cam)
    }

    /// Checks intrinsics and that the rotation is orthonormal within `tol`.
    pub fn validate(&self, tol: T) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera has zero size".into()));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidParameter("focal lengths must be positive".into()));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.rotation.iter().flatten())
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("camera has non-finite fields".into()));
        }
        let err = math::orthonormality_error(&self.rotation);
        if err > tol {
            return Err(Error::InvalidParameter(format!(
                "camera rotation is not orthonormal (error {err})"
            )));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`; `up` is the world direction
    /// that should appear upwards in the image.
    pub fn look_at(
        width: usize,
        height: usize,
        fx: T,
        fy: T,
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
    ) -> Result<Self> {
        let forward = math::normalize(math::sub(target, eye));
        let right = math::cross(forward, up);
        if math::norm(right) < T::lit(1e-9) {
            return Err(Error::InvalidParameter("up vector parallel to view direction".into()));
        }
        let right = math::normalize(right);
        let down = math::cross(forward, right);
        let rotation = [right, down, forward];
        let t = math::mat_vec(&rotation, eye);
        let half = T::lit(0.5);
        Self::new(
            width,
            height,
            fx,
            fy,
            T::from_usize_lossy(width) * half,
            T::from_usize_lossy(height) * half,
            rotation,
            [-t[0], -t[1], -t[2]],
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        let c = math::mat_t_vec(&self.rotation, self.translation);
        [-c[0], -c[1], -c[2]]
    }

    /// World "up" as seen by this camera (negated image-down axis).
    pub fn up(&self) -> Vec3<T> {
        let d = self.rotation[1];
        [-d[0], -d[1], -d[2]]
    }

    pub fn forward(&self) -> Vec3<T> {
        self.rotation[2]
    }

    pub fn world_to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn cast<U: Scalar>(&self) -> Camera<U> {
        let c = |v: T| U::lit(v.as_f64());
        Camera {
            width: self.width,
            height: self.height,
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            rotation: self.rotation.map(|r| r.map(c)),
            translation: self.translation.map(c),
        }
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub mean2d: [T; 2],
    /// Symmetric 2×2 covariance stored as `(xx, xy, yy)`.
    pub cov2d: [T; 3],
    pub depth: T,
}

/// Perspective Jacobian at camera-space point `t`.
pub(crate) fn perspective_jacobian<T: Scalar>(cam: &Camera<T>, t: Vec3<T>) -> [[T; 3]; 2] {
    let inv_z = T::one() / t[2];
    let inv_z2 = inv_z * inv_z;
    [
        [cam.fx * inv_z, T::zero(), -cam.fx * t[0] * inv_z2],
        [T::zero(), cam.fy * inv_z, -cam.fy * t[1] * inv_z2],
    ]
}

/// `J·W·Σ·Wᵀ·Jᵀ` without dilation.
pub(crate) fn screen_covariance<T: Scalar>(jw: &[[T; 3]; 2], sigma: &Mat3<T>) -> [T; 3] {
    let mut tmp = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            tmp[r][c] = jw[r][0] * sigma[0][c] + jw[r][1] * sigma[1][c] + jw[r][2] * sigma[2][c];
        }
    }
    let dot2 = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    [dot2(&tmp[0], &jw[0]), dot2(&tmp[0], &jw[1]), dot2(&tmp[1], &jw[1])]
}

pub(crate) fn jacobian_times_rotation<T: Scalar>(j: &[[T; 3]; 2], w: &Mat3<T>) -> [[T; 3]; 2] {
    let mut jw = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jw[r][c] = j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c];
        }
    }
    jw
}

/// Projects a Gaussian into `cam`, returning `None` when its center lies at
/// or behind the near plane.
pub fn project_gaussian<T: Scalar>(g: &Gaussian<T>, cam: &Camera<T>) -> Result<Option<Projection<T>>> {
    let t = cam.world_to_camera(g.center);
    if !(t[2] > T::lit(NEAR_PLANE)) {
        return Ok(None);
    }
    let sigma = covariance_from_params(g.unit_rotation(), g.scale())?;
    Ok(Some(project_with_covariance(cam, t, &sigma, T::lit(LOW_PASS))))
}

pub(crate) fn project_with_covariance<T: Scalar>(
    cam: &Camera<T>,
    t: Vec3<T>,
    sigma: &Mat3<T>,
    dilation: T,
) -> Projection<T> {
    let inv_z = T::one() / t[2];
    let mean2d = [cam.cx + cam.fx * t[0] * inv_z, cam.cy + cam.fy * t[1] * inv_z];
    let j = perspective_jacobian(cam, t);
    let jw = jacobian_times_rotation(&j, &cam.rotation);
    let mut cov2d = screen_covariance(&jw, sigma);
    cov2d[0] += dilation;
    cov2d[2] += dilation;
    Projection {
        mean2d,
        cov2d,
        depth: t[2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::identity;

    fn axis_camera(fx: f64) -> Camera<f64> {
        Camera::new(64, 48, fx, fx, 32.0, 24.0, identity(), [0.0; 3]).unwrap()
    }

    fn gaussian_at(center: [f64; 3], scale: f64) -> Gaussian<f64> {
        Gaussian::new(center, [1.0, 0.0, 0.0, 0.0], [scale.ln(); 3], 0.0, vec![[0.0; 3]])
    }

    #[test]
    fn on_axis_point_projects_to_principal_point() {
        let cam = axis_camera(100.0);
        let p = project_gaussian(&gaussian_at([0.0, 0.0, 5.0], 1.0), &cam).unwrap().unwrap();
        assert_eq!(p.mean2d, [32.0, 24.0]);
        assert_eq!(p.depth, 5.0);
    }

    #[test]
    fn off_axis_point_follows_pinhole_formula() {
        let cam = axis_camera(100.0);
        let p = project_gaussian(&gaussian_at([1.0, 0.0, 5.0], 1.0), &cam).unwrap().unwrap();
        assert!((p.mean2d[0] - 52.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_covariance_scales_with_focal_over_depth() {
        let cam = axis_camera(100.0);
        let t = [0.0, 0.0, 4.0];
        let p = project_with_covariance(&cam, t, &identity(), 0.0);
        assert!((p.cov2d[0] - 625.0).abs() < 1e-9);
        assert!(p.cov2d[1].abs() < 1e-12);
        assert!((p.cov2d[2] - 625.0).abs() < 1e-9);
        let dilated = project_gaussian(&gaussian_at([0.0, 0.0, 4.0], 1.0), &cam).unwrap().unwrap();
        assert!((dilated.cov2d[0] - 625.3).abs() < 1e-9);
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let cam = axis_camera(100.0);
        assert!(project_gaussian(&gaussian_at([0.0, 0.0, 0.01], 1.0), &cam).unwrap().is_none());
        assert!(project_gaussian(&gaussian_at([0.0, 0.0, -3.0], 1.0), &cam).unwrap().is_none());
    }

    #[test]
    fn translation_equivariance_of_mean() {
        let cam = Camera::look_at(64, 64, 80.0, 80.0, [3.0, 1.0, 2.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let offset = [10.5, -3.25, 7.0];
        let shifted = Camera::look_at(
            64,
            64,
            80.0,
            80.0,
            math::add([3.0, 1.0, 2.0], offset),
            offset,
            [0.0, 0.0, 1.0],
        )
        .unwrap();
        let g = gaussian_at([0.2, -0.3, 0.4], 0.1);
        let mut g2 = g.clone();
        g2.center = math::add(g.center, offset);
        let a = project_gaussian(&g, &cam).unwrap().unwrap();
        let b = project_gaussian(&g2, &shifted).unwrap().unwrap();
        assert!((a.mean2d[0] - b.mean2d[0]).abs() < 1e-9);
        assert!((a.mean2d[1] - b.mean2d[1]).abs() < 1e-9);
    }

    #[test]
    fn look_at_is_orthonormal_and_centered() {
        let cam = Camera::<f64>::look_at(32, 32, 40.0, 40.0, [1.0, 2.0, 3.0], [0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert!(math::orthonormality_error(&cam.rotation) < 1e-12);
        let c = cam.center();
        for (a, b) in c.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let target = cam.world_to_camera([0.0; 3]);
        assert!(target[0].abs() < 1e-12 && target[1].abs() < 1e-12 && target[2] > 0.0);
        // World up projects above the target (smaller image y).
        let above = cam.world_to_camera([0.0, 0.0, 0.5]);
        assert!(above[1] < 0.0);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Camera::new(0, 4, 1.0, 1.0, 0.0, 0.0, identity(), [0.0; 3]).is_err());
        assert!(Camera::new(4, 4, -1.0, 1.0, 0.0, 0.0, identity(), [0.0; 3]).is_err());
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Camera::new(4, 4, 1.0, 1.0, 0.0, 0.0, skew, [0.0; 3]).is_err());
    }
}

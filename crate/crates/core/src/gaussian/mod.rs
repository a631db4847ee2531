//! The Gaussian primitive, its activations, and clouds of Gaussians.

mod camera;
pub mod sh;

pub use camera::{project_gaussian, Camera, Projection, LOW_PASS, NEAR_PLANE};
pub(crate) use camera::{jacobian_times_rotation, perspective_jacobian, screen_covariance};
pub use sh::{rgb_to_sh_dc, sh_coeffs_for_degree, sh_degree_from_coeffs, sh_to_rgb, MAX_SH_DEGREE};

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Quat, Vec3};
use crate::scalar::{sigmoid, Scalar};

/// One anisotropic 3D Gaussian in its unconstrained parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian<T> {
    pub center: Vec3<T>,
    /// Unnormalized quaternion (w, x, y, z); normalized on every use.
    pub rotation: Quat<T>,
    /// Log of the per-axis standard deviation.
    pub log_scale: Vec3<T>,
    /// Pre-sigmoid opacity.
    pub opacity_logit: T,
    /// One RGB triple per SH basis function.
    pub sh: Vec<Vec3<T>>,
}

impl<T: Scalar> Gaussian<T> {
    pub fn new(center: Vec3<T>, rotation: Quat<T>, log_scale: Vec3<T>, opacity_logit: T, sh: Vec<Vec3<T>>) -> Self {
        Self {
            center,
            rotation,
            log_scale,
            opacity_logit,
            sh,
        }
    }

    pub fn unit_rotation(&self) -> Quat<T> {
        math::quat_normalize(self.rotation)
    }

    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|s| s.exp())
    }

    pub fn max_scale(&self) -> T {
        let s = self.scale();
        s[0].max(s[1]).max(s[2])
    }

    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    pub fn is_finite(&self) -> bool {
        math::is_finite3(&self.center)
            && self.rotation.iter().all(|v| v.is_finite())
            && math::is_finite3(&self.log_scale)
            && self.opacity_logit.is_finite()
            && self.sh.iter().all(|c| math::is_finite3(c))
            && math::quat_norm(self.rotation) > T::zero()
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        3 + 4 + 3 + 1 + 3 * self.sh.len()
    }

    pub fn cast<U: Scalar>(&self) -> Gaussian<U> {
        let c = |v: T| U::lit(v.as_f64());
        Gaussian {
            center: self.center.map(c),
            rotation: self.rotation.map(c),
            log_scale: self.log_scale.map(c),
            opacity_logit: c(self.opacity_logit),
            sh: self.sh.iter().map(|s| s.map(c)).collect(),
        }
    }
}

/// `Σ = R·diag(s²)·Rᵀ` for a unit quaternion and positive scales.
pub fn covariance_from_params<T: Scalar>(q: Quat<T>, scale: Vec3<T>) -> Result<Mat3<T>> {
    if !(q.iter().all(|v| v.is_finite()) && math::is_finite3(&scale)) {
        return Err(Error::InvalidParameter("non-finite covariance parameters".into()));
    }
    let r = math::quat_to_mat(q);
    let mut m = r;
    for row in m.iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= scale[c];
        }
    }
    Ok(math::mat_mul(&m, &math::transpose(&m)))
}

/// An ordered set of Gaussians sharing one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud<T> {
    pub gaussians: Vec<Gaussian<T>>,
    pub sh_degree: usize,
}

impl<T: Scalar> GaussianCloud<T> {
    pub fn new(sh_degree: usize) -> Self {
        Self {
            gaussians: Vec::new(),
            sh_degree,
        }
    }

    pub fn from_gaussians(sh_degree: usize, gaussians: Vec<Gaussian<T>>) -> Result<Self> {
        let cloud = Self { gaussians, sh_degree };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn sh_len(&self) -> usize {
        sh_coeffs_for_degree(self.sh_degree)
    }

    pub fn push(&mut self, g: Gaussian<T>) -> Result<()> {
        if g.sh.len() != self.sh_len() {
            return Err(Error::InvalidParameter(format!(
                "gaussian has {} sh coefficients, cloud degree {} needs {}",
                g.sh.len(),
                self.sh_degree,
                self.sh_len()
            )));
        }
        self.gaussians.push(g);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidParameter(format!("sh degree {} > 3", self.sh_degree)));
        }
        let n = self.sh_len();
        if let Some(i) = self.gaussians.iter().position(|g| g.sh.len() != n) {
            return Err(Error::InvalidParameter(format!(
                "gaussian {i} sh length differs from degree {}",
                self.sh_degree
            )));
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.gaussians.iter().map(|g| g.center).collect()
    }

    /// Keeps the Gaussians whose flag is set; order is preserved.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len(), "keep mask length");
        let mut it = keep.iter();
        self.gaussians.retain(|_| *it.next().unwrap());
    }

    pub fn cast<U: Scalar>(&self) -> GaussianCloud<U> {
        GaussianCloud {
            gaussians: self.gaussians.iter().map(Gaussian::cast).collect(),
            sh_degree: self.sh_degree,
        }
    }
}

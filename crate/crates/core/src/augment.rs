//! Self-augmentation between stages: point handoff from the coarse model and
//! pseudo views rendered at novel cameras.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{sh_to_rgb, Camera, GaussianCloud};
use crate::image::{DepthMap, Image};
use crate::math::{self, Vec3};
use crate::raster::render;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewOrigin {
    Reference,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord<T> {
    pub image: Image<T>,
    pub camera: Camera<T>,
    /// Row-major, `true` marks the object.
    pub object_mask: Option<Vec<bool>>,
    pub depth: Option<DepthMap<T>>,
    pub origin: ViewOrigin,
}

impl<T: Scalar> ViewRecord<T> {
    pub fn reference(image: Image<T>, camera: Camera<T>) -> Result<Self> {
        let r = Self {
            image,
            camera,
            object_mask: None,
            depth: None,
            origin: ViewOrigin::Reference,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.camera.width, self.camera.height);
        if self.image.width != w || self.image.height != h {
            return Err(Error::InvalidParameter(format!(
                "image is {}x{} but camera is {w}x{h}",
                self.image.width, self.image.height
            )));
        }
        if self.object_mask.as_ref().is_some_and(|m| m.len() != w * h) {
            return Err(Error::InvalidParameter("object mask size does not match the camera".into()));
        }
        if self.depth.as_ref().is_some_and(|d| d.width != w || d.height != h) {
            return Err(Error::InvalidParameter("depth map size does not match the camera".into()));
        }
        if self.origin == ViewOrigin::Pseudo && self.object_mask.is_some() {
            return Err(Error::InvalidParameter("pseudo views carry no object mask".into()));
        }
        Ok(())
    }

    /// Training target: the image composited over `bg` through the object
    /// mask when one is present.
    pub fn target(&self, bg: [T; 3]) -> Image<T> {
        match &self.object_mask {
            Some(m) => self.image.composite_over(m, bg),
            None => self.image.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewSet<T> {
    pub records: Vec<ViewRecord<T>>,
}

impl<T: Scalar> ViewSet<T> {
    pub fn new(records: Vec<ViewRecord<T>>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn reference_count(&self) -> usize {
        self.records.iter().filter(|r| r.origin == ViewOrigin::Reference).count()
    }

    pub fn pseudo_count(&self) -> usize {
        self.len() - self.reference_count()
    }

    pub fn cameras(&self) -> Vec<Camera<T>> {
        self.records.iter().map(|r| r.camera.clone()).collect()
    }
}

/// Position and color handed from the coarse to the fine stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPoint<T> {
    pub position: Vec3<T>,
    pub color: Vec3<T>,
}

/// Keeps only centers and DC colors of the coarse model.
pub fn geometry_augment<T: Scalar>(coarse: &GaussianCloud<T>) -> Result<Vec<InitPoint<T>>> {
    if coarse.is_empty() {
        return Err(Error::EmptyInit);
    }
    let dir = [T::zero(), T::zero(), T::one()];
    coarse
        .gaussians
        .iter()
        .map(|g| {
            Ok(InitPoint {
                position: g.center,
                color: sh_to_rgb(&g.sh[..1], 0, dir)?,
            })
        })
        .collect()
}

/// Point closest to all optical axes in the least-squares sense, falling back
/// to the mean camera center when the axes are nearly parallel.
pub fn scene_centroid<T: Scalar>(cams: &[Camera<T>]) -> Result<Vec3<f64>> {
    if cams.is_empty() {
        return Err(Error::contract("no cameras"));
    }
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    let mut mean = [0.0f64; 3];
    for cam in cams {
        let c = cam.center().map(|x| x.as_f64());
        let d = math::normalize(cam.forward().map(|x| x.as_f64()));
        for i in 0..3 {
            mean[i] += c[i] / cams.len() as f64;
            for j in 0..3 {
                let p = f64::from(u8::from(i == j)) - d[i] * d[j];
                a[i][j] += p;
                b[i] += p * c[j];
            }
        }
    }
    let det = math::dot(a[0], math::cross(a[1], a[2]));
    if det.abs() < 1e-6 * cams.len().pow(3) as f64 {
        return Ok(mean);
    }
    // Cramer's rule on the symmetric system.
    let col = |k: usize| -> f64 {
        let mut m = a;
        for (row, bi) in m.iter_mut().zip(b) {
            row[k] = bi;
        }
        math::dot(m[0], math::cross(m[1], m[2])) / det
    };
    Ok([col(0), col(1), col(2)])
}

fn slerp_dir(a: Vec3<f64>, b: Vec3<f64>, t: f64) -> Vec3<f64> {
    let cos = math::dot(a, b).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if theta < 1e-9 {
        return math::normalize(math::add(math::scale(a, 1.0 - t), math::scale(b, t)));
    }
    let s = theta.sin();
    math::add(math::scale(a, ((1.0 - t) * theta).sin() / s), math::scale(b, (t * theta).sin() / s))
}

/// Spherical interpolation of a point about `pivot`: the direction follows the
/// great circle, the radius is interpolated linearly.
pub fn slerp_about(pivot: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>, t: f64) -> Vec3<f64> {
    let (ra, rb) = (math::sub(a, pivot), math::sub(b, pivot));
    let (la, lb) = (math::norm(ra), math::norm(rb));
    let dir = slerp_dir(math::scale(ra, 1.0 / la), math::scale(rb, 1.0 / lb), t);
    math::add(pivot, math::scale(dir, la + (lb - la) * t))
}

/// Indices of `cams` sorted by azimuth about the centroid, measured around the
/// mean camera up vector.
fn azimuth_order<T: Scalar>(cams: &[Camera<T>], pivot: Vec3<f64>) -> Vec<usize> {
    let mut up = [0.0; 3];
    for c in cams {
        up = math::add(up, c.up().map(|x| x.as_f64()));
    }
    let up = math::normalize(up);
    let rel = |c: &Camera<T>| {
        let r = math::sub(c.center().map(|x| x.as_f64()), pivot);
        math::sub(r, math::scale(up, math::dot(r, up)))
    };
    let e1 = math::normalize(rel(&cams[0]));
    let e2 = math::cross(up, e1);
    let mut order: Vec<(f64, usize)> = cams
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r = rel(c);
            let az = math::dot(r, e2).atan2(math::dot(r, e1));
            (az.rem_euclid(std::f64::consts::TAU), i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().map(|(_, i)| i).collect()
}

/// `n_prime` cameras spread over the arcs between azimuth-consecutive reference
/// cameras, aimed at the scene centroid. The seed rotates which arcs receive
/// the remainder when `n_prime` does not divide evenly.
pub fn sample_novel_cameras<T: Scalar>(refs: &[Camera<T>], n_prime: usize, seed: u64) -> Result<Vec<Camera<T>>> {
    if refs.len() < 2 {
        return Err(Error::contract(format!("novel cameras need at least 2 references, got {}", refs.len())));
    }
    if n_prime == 0 {
        return Ok(Vec::new());
    }
    let pivot = scene_centroid(refs)?;
    let order = azimuth_order(refs, pivot);
    let arcs: Vec<(usize, usize)> = if refs.len() == 2 {
        vec![(order[0], order[1])]
    } else {
        (0..order.len()).map(|i| (order[i], order[(i + 1) % order.len()])).collect()
    };
    let n_arcs = arcs.len();
    let offset = (seed % n_arcs as u64) as usize;
    let mut out = Vec::with_capacity(n_prime);
    for (j, &(a, b)) in arcs.iter().enumerate() {
        let rank = (j + n_arcs - offset) % n_arcs;
        let count = n_prime / n_arcs + usize::from(rank < n_prime % n_arcs);
        let (ca, cb) = (&refs[a], &refs[b]);
        let pa = ca.center().map(|x| x.as_f64());
        let pb = cb.center().map(|x| x.as_f64());
        let up = ca.up().map(|x| x.as_f64());
        for i in 0..count {
            let t = (i + 1) as f64 / (count + 1) as f64;
            let eye = slerp_about(pivot, pa, pb, t);
            let near = if t <= 0.5 { ca } else { cb };
            let cam = Camera::<f64>::look_at(near.width, near.height, 1.0, 1.0, eye, pivot, up)?;
            let mut cam: Camera<T> = cam.cast();
            cam.fx = near.fx;
            cam.fy = near.fy;
            cam.cx = near.cx;
            cam.cy = near.cy;
            out.push(cam);
        }
    }
    Ok(out)
}

/// Renders the coarse model at every camera as a pseudo view.
pub fn perceptual_augment<T: Scalar>(coarse: &GaussianCloud<T>, cams: &[Camera<T>], background: [T; 3]) -> Result<Vec<ViewRecord<T>>> {
    if coarse.is_empty() {
        return Err(Error::EmptyInit);
    }
    cams.par_iter()
        .map(|cam| {
            let out = render(coarse, cam, background)?;
            Ok(ViewRecord {
                image: out.color,
                camera: cam.clone(),
                object_mask: None,
                depth: None,
                origin: ViewOrigin::Pseudo,
            })
        })
        .collect()
}

/// References first, then pseudo views, order preserved.
pub fn build_fine_viewset<T: Scalar>(refs: &ViewSet<T>, pseudos: Vec<ViewRecord<T>>) -> ViewSet<T> {
    let mut records = refs.records.clone();
    records.extend(pseudos);
    ViewSet { records }
}

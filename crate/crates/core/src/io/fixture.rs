use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::{ViewRecord, ViewSet};
use crate::error::{Error, Result};
use crate::gaussian::{rgb_to_sh_dc, Camera, Gaussian, GaussianCloud};
use crate::image::{DepthMap, Image};
use crate::math;
use crate::raster::render;
use crate::scalar::logit;

use super::dataset::Dataset;
use super::png::quantize;

/// Synthetic ground-truth scene: random Gaussians near the origin seen by
/// cameras on a ring around it. Held-out cameras sit halfway between
/// training cameras in azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub seed: u64,
    pub gaussians: usize,
    pub train_views: usize,
    pub heldout_views: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub radius: f64,
    pub train_elevation_deg: f64,
    pub heldout_elevation_deg: f64,
    pub background: [f64; 3],
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            gaussians: 20,
            train_views: 4,
            heldout_views: 4,
            width: 64,
            height: 64,
            focal: 70.0,
            radius: 4.0,
            train_elevation_deg: 25.0,
            heldout_elevation_deg: 15.0,
            background: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub gt: GaussianCloud<f32>,
    pub dataset: Dataset<f32>,
}

const MASK_ALPHA: f32 = 0.01;
const DEPTH_ALPHA: f32 = 0.5;

fn ring_camera(cfg: &FixtureConfig, azimuth: f64, elevation_deg: f64) -> Result<Camera<f32>> {
    let el = elevation_deg.to_radians();
    let eye = [
        cfg.radius * el.cos() * azimuth.cos(),
        cfg.radius * el.sin(),
        cfg.radius * el.cos() * azimuth.sin(),
    ];
    let cam = Camera::<f64>::look_at(cfg.width, cfg.height, cfg.focal, cfg.focal, eye, [0.0; 3], [0.0, 1.0, 0.0])?;
    Ok(cam.cast())
}

fn gt_cloud(rng: &mut ChaCha8Rng, n: usize) -> Result<GaussianCloud<f32>> {
    let gs = (0..n)
        .map(|_| {
            let dir = math::normalize(std::array::from_fn(|_| StandardNormal.sample(&mut *rng)));
            let center = math::scale(dir, 0.8 * rng.random::<f64>().cbrt());
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
            let log_scale: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.08f64.ln()..0.25f64.ln()));
            let rgb: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
            let opacity = rng.random_range(0.7..0.95);
            Gaussian::new(center, math::quat_normalize(q), log_scale, logit(opacity), vec![rgb_to_sh_dc(rgb)]).cast()
        })
        .collect();
    GaussianCloud::from_gaussians(0, gs)
}

fn view(gt: &GaussianCloud<f32>, cam: Camera<f32>, bg: [f32; 3]) -> Result<ViewRecord<f32>> {
    let out = render(gt, &cam, bg)?;
    let data = out.color.data.iter().map(|&v| f32::from(quantize(v)) / 255.0).collect();
    let image = Image::from_vec(cam.width, cam.height, data)?;
    let mask = out.alpha.iter().map(|&a| a > MASK_ALPHA).collect();
    let valid: Vec<bool> = out.alpha.iter().map(|&a| a > DEPTH_ALPHA).collect();
    let values = out
        .depth
        .iter()
        .zip(&out.alpha)
        .zip(&valid)
        .map(|((&d, &a), &ok)| if ok { d / a } else { 0.0 })
        .collect();
    let mut record = ViewRecord::reference(image, cam.clone())?;
    record.object_mask = Some(mask);
    record.depth = Some(DepthMap::new(cam.width, cam.height, values, valid)?);
    Ok(record)
}

/// Renders the ground truth from every fixture camera. Images are quantized to
/// 8 bits so that writing and reloading them is lossless.
pub fn make_fixture(cfg: &FixtureConfig) -> Result<Fixture> {
    if cfg.gaussians == 0 || cfg.train_views == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::InvalidParameter("fixture needs gaussians, training views and a nonzero size".into()));
    }
    if !(cfg.radius > 1.0 && cfg.focal > 0.0) {
        return Err(Error::InvalidParameter("fixture ring must lie outside the object and focal must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gt = gt_cloud(&mut rng, cfg.gaussians)?;
    let bg = cfg.background.map(|c| c as f32);
    let tau = std::f64::consts::TAU;
    let phase = rng.random_range(0.0..tau);
    let mut ds = Dataset::default();
    let mut train = Vec::new();
    for i in 0..cfg.train_views {
        let az = phase + tau * i as f64 / cfg.train_views as f64;
        train.push(view(&gt, ring_camera(cfg, az, cfg.train_elevation_deg)?, bg)?);
        ds.train_names.push(format!("train_{i:03}"));
    }
    let mut heldout = Vec::new();
    for i in 0..cfg.heldout_views {
        let az = phase + tau * (i as f64 + 0.5) / cfg.heldout_views as f64;
        heldout.push(view(&gt, ring_camera(cfg, az, cfg.heldout_elevation_deg)?, bg)?);
        ds.heldout_names.push(format!("heldout_{i:03}"));
    }
    ds.train = ViewSet::new(train)?;
    ds.heldout = ViewSet::new(heldout)?;
    Ok(Fixture { gt, dataset: ds })
}

//! Adaptive density control: gradient statistics, clone/split densification,
//! pruning and opacity resets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::math;
use crate::raster::{GradientBuffer, ScreenCache};
use crate::scalar::{logit, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// Mean screen-space gradient (NDC units) that triggers densification.
    pub grad_threshold: f64,
    pub prune_opacity: f64,
    /// Gaussians smaller than this fraction of the scene extent are cloned,
    /// larger ones split.
    pub split_scale_ratio: f64,
    /// Gaussians larger than this fraction of the scene extent are pruned.
    pub world_scale_ratio: f64,
    pub split_factor: f64,
    pub every: usize,
    pub start: usize,
    /// Densification stops at this fraction of the stage budget.
    pub stop_fraction: f64,
    pub opacity_reset_every: usize,
    pub opacity_ceiling: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            grad_threshold: 2e-4,
            prune_opacity: 0.005,
            split_scale_ratio: 0.01,
            world_scale_ratio: 0.1,
            split_factor: 1.6,
            every: 100,
            start: 500,
            stop_fraction: 0.5,
            opacity_reset_every: 3000,
            opacity_ceiling: 0.01,
        }
    }
}

impl DensifyConfig {
    pub fn stop_iteration(&self, budget: usize) -> usize {
        (budget as f64 * self.stop_fraction).floor() as usize
    }

    pub fn densify_due(&self, iteration: usize, budget: usize) -> bool {
        self.enabled
            && self.every > 0
            && iteration >= self.start
            && iteration < self.stop_iteration(budget)
            && iteration % self.every == 0
    }

    /// Resets only happen while densification is still active, so pruning
    /// can clean up after them.
    pub fn reset_due(&self, iteration: usize, budget: usize) -> bool {
        self.enabled
            && self.opacity_reset_every > 0
            && iteration > 0
            && iteration % self.opacity_reset_every == 0
            && iteration < self.stop_iteration(budget)
    }
}

/// Per-Gaussian screen-space gradient statistics, aligned with the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyStats<T> {
    pub grad_accum: Vec<T>,
    pub count: Vec<u32>,
    pub max_radius: Vec<T>,
}

impl<T: Scalar> DensifyStats<T> {
    pub fn new(len: usize) -> Self {
        Self {
            grad_accum: vec![T::zero(); len],
            count: vec![0; len],
            max_radius: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    /// Adds `‖dL/dmean2d‖` (in NDC units) for every visible Gaussian.
    pub fn accumulate(&mut self, grads: &GradientBuffer<T>, cache: &ScreenCache<T>, width: usize, height: usize) -> Result<()> {
        if grads.len() != self.len() || cache.gaussian_count() != self.len() {
            return Err(Error::contract(format!(
                "stats for {} gaussians, gradients for {}, cache for {}",
                self.len(),
                grads.len(),
                cache.gaussian_count()
            )));
        }
        let half_w = T::from_usize_lossy(width) * T::lit(0.5);
        let half_h = T::from_usize_lossy(height) * T::lit(0.5);
        for (i, splat) in cache.splats.iter().enumerate() {
            let Some(s) = splat else { continue };
            let gx = grads.mean2d[i][0] * half_w;
            let gy = grads.mean2d[i][1] * half_h;
            self.grad_accum[i] += (gx * gx + gy * gy).sqrt();
            self.count[i] += 1;
            self.max_radius[i] = self.max_radius[i].max(s.radius);
        }
        Ok(())
    }

    pub fn mean_grad(&self, i: usize) -> T {
        if self.count[i] == 0 {
            T::zero()
        } else {
            self.grad_accum[i] / T::lit(self.count[i] as f64)
        }
    }

    pub fn retain_mask(&mut self, keep: &[bool]) {
        let mut k = keep.iter();
        self.grad_accum.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.count.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.max_radius.retain(|_| *k.next().unwrap());
    }
}

/// What one densify-and-prune pass did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensifyOutcome {
    /// For every Gaussian of the new cloud: the old index it was carried over
    /// from unchanged, or `None` for newly created ones.
    pub origin: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

impl DensifyOutcome {
    /// Net change in cloud size.
    pub fn delta(&self) -> isize {
        self.cloned as isize + self.split as isize - self.pruned as isize
    }
}

/// Clones small high-gradient Gaussians, splits large ones into two, then
/// prunes transparent or oversized ones. `stats` is reset at the new size.
pub fn densify_and_prune<T: Scalar, R: Rng>(
    cloud: &mut GaussianCloud<T>,
    stats: &mut DensifyStats<T>,
    scene_extent: f64,
    cfg: &DensifyConfig,
    rng: &mut R,
) -> Result<DensifyOutcome> {
    if stats.len() != cloud.len() {
        return Err(Error::contract("densify stats are not aligned with the cloud"));
    }
    let n = cloud.len();
    let threshold = T::lit(cfg.grad_threshold);
    let split_limit = T::lit(cfg.split_scale_ratio * scene_extent);
    let log_factor = T::lit(cfg.split_factor.ln());

    let mut gaussians = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    let mut clones = Vec::new();
    let mut children = Vec::new();
    let (mut cloned, mut split) = (0, 0);
    for (i, g) in cloud.gaussians.iter().enumerate() {
        let hot = stats.mean_grad(i) >= threshold;
        if hot && g.max_scale() < split_limit {
            clones.push(g.clone());
            cloned += 1;
        } else if hot {
            let rot = math::quat_to_mat(g.unit_rotation());
            let scale = g.scale();
            for _ in 0..2 {
                let z: [T; 3] = std::array::from_fn(|k| {
                    let n: f64 = StandardNormal.sample(rng);
                    T::lit(n) * scale[k]
                });
                let mut child = g.clone();
                child.center = math::add(g.center, math::mat_vec(&rot, z));
                child.log_scale = g.log_scale.map(|s| s - log_factor);
                children.push(child);
            }
            split += 1;
            continue;
        }
        gaussians.push(g.clone());
        origin.push(Some(i));
    }
    for g in clones.into_iter().chain(children) {
        gaussians.push(g);
        origin.push(None);
    }

    let prune_opacity = T::lit(cfg.prune_opacity);
    let world_limit = T::lit(cfg.world_scale_ratio * scene_extent);
    let keep: Vec<bool> = gaussians
        .iter()
        .map(|g| !(g.opacity() < prune_opacity || g.max_scale() > world_limit))
        .collect();
    let pruned = keep.iter().filter(|&&k| !k).count();
    let mut k = keep.iter();
    gaussians.retain(|_| *k.next().unwrap());
    let mut k = keep.iter();
    origin.retain(|_| *k.next().unwrap());

    cloud.gaussians = gaussians;
    *stats = DensifyStats::new(cloud.len());
    Ok(DensifyOutcome {
        origin,
        cloned,
        split,
        pruned,
    })
}

/// Caps every activated opacity at `ceiling`.
pub fn reset_opacity<T: Scalar>(cloud: &mut GaussianCloud<T>, ceiling: f64) -> Result<()> {
    if !(ceiling > 0.0 && ceiling < 1.0) {
        return Err(Error::InvalidParameter(format!("opacity ceiling {ceiling} outside (0, 1)")));
    }
    let cap = T::lit(logit(ceiling));
    for g in &mut cloud.gaussians {
        g.opacity_logit = g.opacity_logit.min(cap);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Camera, Gaussian};
    use crate::raster::{render, render_backward, Upstream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(center: [f64; 3], scale: f64, opacity: f64) -> Gaussian<f64> {
        Gaussian::new(center, [1.0, 0.0, 0.0, 0.0], [scale.ln(); 3], logit(opacity), vec![[0.0; 3]])
    }

    fn cloud(gs: Vec<Gaussian<f64>>) -> GaussianCloud<f64> {
        GaussianCloud::from_gaussians(0, gs).unwrap()
    }

    fn hot_stats(len: usize, hot: &[usize]) -> DensifyStats<f64> {
        let mut s = DensifyStats::new(len);
        for &i in hot {
            s.grad_accum[i] = 1.0;
            s.count[i] = 1;
        }
        s
    }

    #[test]
    fn quiet_cloud_is_unchanged() {
        let mut c = cloud(vec![g([0.0; 3], 0.01, 0.5), g([1.0, 0.0, 0.0], 0.02, 0.3)]);
        let before = c.clone();
        let mut s = DensifyStats::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(&mut c, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
        assert_eq!(c, before);
        assert_eq!(out.delta(), 0);
        assert_eq!(out.origin, vec![Some(0), Some(1)]);
    }

    #[test]
    fn small_hot_gaussian_is_cloned() {
        let mut c = cloud(vec![g([0.0; 3], 0.005, 0.5), g([1.0, 0.0, 0.0], 0.005, 0.5)]);
        let mut s = hot_stats(2, &[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(&mut c, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(out.cloned, 1);
        assert_eq!(c.gaussians[2], c.gaussians[1]);
        assert_eq!(out.origin, vec![Some(0), Some(1), None]);
        assert_eq!(s, DensifyStats::new(3));
    }

    #[test]
    fn large_hot_gaussian_is_split() {
        let parent = g([0.0; 3], 0.05, 0.5);
        let mut c = cloud(vec![parent.clone()]);
        let mut s = hot_stats(1, &[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = densify_and_prune(&mut c, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
        assert_eq!((out.split, c.len()), (1, 2));
        for child in &c.gaussians {
            for k in 0..3 {
                assert!((child.log_scale[k] - (parent.log_scale[k] - 1.6_f64.ln())).abs() < 1e-12);
            }
            assert_ne!(child.center, parent.center);
            assert_eq!(child.opacity_logit, parent.opacity_logit);
        }
        assert_eq!(out.origin, vec![None, None]);
    }

    #[test]
    fn split_is_deterministic_for_a_seed() {
        let run = |seed| {
            let mut c = cloud(vec![g([0.0; 3], 0.05, 0.5); 4]);
            let mut s = hot_stats(4, &[0, 2]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            densify_and_prune(&mut c, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
            c
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn transparent_and_oversized_are_pruned() {
        let mut c = cloud(vec![g([0.0; 3], 0.01, 0.001), g([0.0; 3], 0.5, 0.9), g([0.0; 3], 0.01, 0.9)]);
        let mut s = DensifyStats::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(&mut c, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
        assert_eq!(out.pruned, 2);
        assert_eq!(out.origin, vec![Some(2)]);
        let mut empty = GaussianCloud::<f64>::new(0);
        let mut s = DensifyStats::new(0);
        densify_and_prune(&mut empty, &mut s, 1.0, &DensifyConfig::default(), &mut rng).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn opacity_reset_is_elementwise_min() {
        let ops = [0.9, 0.005, 0.01, 0.5, 0.0001];
        let mut c = cloud(ops.iter().map(|&o| g([0.0; 3], 0.1, o)).collect());
        reset_opacity(&mut c, 0.01).unwrap();
        for (gs, &o) in c.gaussians.iter().zip(&ops) {
            assert!((gs.opacity() - f64::min(o, 0.01)).abs() < 1e-9);
        }
        let mut low = cloud(vec![g([0.0; 3], 0.1, 0.003)]);
        let before = low.clone();
        reset_opacity(&mut low, 0.01).unwrap();
        assert_eq!(low, before);
        assert!(reset_opacity(&mut low, 1.0).is_err());
    }

    #[test]
    fn accumulation_counts_visible_only_and_adds_norms() {
        let cam = Camera::new(16, 16, 20.0, 20.0, 8.0, 8.0, math::identity(), [0.0; 3]).unwrap();
        let c = cloud(vec![g([0.1, 0.0, 3.0], 0.2, 0.8), g([0.0, 0.0, -3.0], 0.2, 0.8)]);
        let out = render(&c, &cam, [1.0; 3]).unwrap();
        let up = vec![0.3; 16 * 16 * 3];
        let grads = render_backward(&c, &cam, &out, Upstream { color: &up, depth: None }).unwrap();
        let mut s = DensifyStats::new(2);
        s.accumulate(&grads, &out.cache, 16, 16).unwrap();
        let first = s.grad_accum[0];
        s.accumulate(&grads, &out.cache, 16, 16).unwrap();
        assert_eq!(s.count, vec![2, 0]);
        assert!((s.grad_accum[0] - 2.0 * first).abs() < 1e-15);
        let expect = ((grads.mean2d[0][0] * 8.0).powi(2) + (grads.mean2d[0][1] * 8.0).powi(2)).sqrt();
        assert!((first - expect).abs() < 1e-15);

        let zero = GradientBuffer::zeros(2, 1);
        let mut z = DensifyStats::new(2);
        z.accumulate(&zero, &out.cache, 16, 16).unwrap();
        assert_eq!(z.grad_accum, vec![0.0, 0.0]);
        assert_eq!(z.count, vec![1, 0]);
        assert!(DensifyStats::<f64>::new(3).accumulate(&zero, &out.cache, 16, 16).is_err());
    }
}

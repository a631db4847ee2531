//! Adam with per-group step sizes and an exponentially decaying position rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::raster::GradientBuffer;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr_position_init: f64,
    pub lr_position_final: f64,
    /// Multiply the position rates by the scene extent.
    pub scale_position_lr: bool,
    pub lr_sh: f64,
    /// Higher-order SH coefficients use `lr_sh * sh_rest_factor`.
    pub sh_rest_factor: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            lr_position_init: 1.6e-4,
            lr_position_final: 1.6e-6,
            scale_position_lr: true,
            lr_sh: 2.5e-3,
            sh_rest_factor: 0.05,
            lr_opacity: 5e-2,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.lr_position_init,
            self.lr_position_final,
            self.lr_sh,
            self.sh_rest_factor,
            self.lr_opacity,
            self.lr_scale,
            self.lr_rotation,
            self.eps,
        ];
        if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter("optimizer step sizes must be positive".into()));
        }
        for b in [self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("moment decay {b} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Log-linear interpolation between the initial and final position rate.
    pub fn position_lr(&self, iteration: usize, budget: usize, extent: f64) -> f64 {
        let t = if budget == 0 {
            1.0
        } else {
            (iteration as f64 / budget as f64).clamp(0.0, 1.0)
        };
        let lr = (self.lr_position_init.ln() * (1.0 - t) + self.lr_position_final.ln() * t).exp();
        if self.scale_position_lr {
            lr * extent
        } else {
            lr
        }
    }
}

const FIXED: usize = 11;

/// First and second moments for every parameter, one row per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    stride: usize,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, sh_len: usize) -> Self {
        let stride = FIXED + 3 * sh_len;
        Self {
            stride,
            m: vec![T::zero(); len * stride],
            v: vec![T::zero(); len * stride],
            step: 0,
        }
    }

    pub fn for_cloud(cloud: &GaussianCloud<T>) -> Self {
        Self::new(cloud.len(), cloud.sh_len())
    }

    pub fn len(&self) -> usize {
        self.m.len() / self.stride
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moments `(m, v)` of the row for Gaussian `i`.
    pub fn row(&self, i: usize) -> (&[T], &[T]) {
        let r = i * self.stride..(i + 1) * self.stride;
        (&self.m[r.clone()], &self.v[r])
    }

    pub fn retain_mask(&mut self, keep: &[bool]) {
        let origin: Vec<Option<usize>> = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| Some(i))
            .collect();
        self.remap(&origin);
    }

    /// Rebuilds rows: `Some(i)` carries old row `i`, `None` starts from zero.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let s = self.stride;
        let mut m = vec![T::zero(); origin.len() * s];
        let mut v = vec![T::zero(); origin.len() * s];
        for (new, old) in origin.iter().enumerate() {
            if let Some(old) = *old {
                m[new * s..(new + 1) * s].copy_from_slice(&self.m[old * s..(old + 1) * s]);
                v[new * s..(new + 1) * s].copy_from_slice(&self.v[old * s..(old + 1) * s]);
            }
        }
        self.m = m;
        self.v = v;
    }

    pub fn reset_opacity_moments(&mut self) {
        let s = self.stride;
        for i in 0..self.len() {
            self.m[i * s + 10] = T::zero();
            self.v[i * s + 10] = T::zero();
        }
    }
}

/// One Adam update of every parameter.
pub fn optimizer_step<T: Scalar>(
    cloud: &mut GaussianCloud<T>,
    grads: &GradientBuffer<T>,
    state: &mut AdamState<T>,
    iteration: usize,
    budget: usize,
    extent: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    let n = cloud.len();
    let sh_len = cloud.sh_len();
    if grads.len() != n || state.len() != n || state.stride != FIXED + 3 * sh_len {
        return Err(Error::contract(format!(
            "optimizer shapes disagree: cloud {n}, gradients {}, state {}",
            grads.len(),
            state.len()
        )));
    }
    if grads.sh.iter().any(|s| s.len() != sh_len) {
        return Err(Error::contract("gradient SH length does not match the cloud"));
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let bias1 = T::lit(1.0 - cfg.beta1.powi(t));
    let bias2_sqrt = T::lit((1.0 - cfg.beta2.powi(t)).sqrt());
    let eps = T::lit(cfg.eps);
    let lr_pos = T::lit(cfg.position_lr(iteration, budget, extent));
    let lr_rot = T::lit(cfg.lr_rotation);
    let lr_scale = T::lit(cfg.lr_scale);
    let lr_op = T::lit(cfg.lr_opacity);
    let lr_dc = T::lit(cfg.lr_sh);
    let lr_rest = T::lit(cfg.lr_sh * cfg.sh_rest_factor);

    let s = state.stride;
    for (i, g) in cloud.gaussians.iter_mut().enumerate() {
        let m = &mut state.m[i * s..(i + 1) * s];
        let v = &mut state.v[i * s..(i + 1) * s];
        let mut k = 0;
        let mut update = |p: &mut T, grad: T, lr: T| {
            m[k] = b1 * m[k] + (T::one() - b1) * grad;
            v[k] = b2 * v[k] + (T::one() - b2) * grad * grad;
            let denom = v[k].sqrt() / bias2_sqrt + eps;
            *p -= lr / bias1 * m[k] / denom;
            k += 1;
        };
        for a in 0..3 {
            update(&mut g.center[a], grads.center[i][a], lr_pos);
        }
        for a in 0..4 {
            update(&mut g.rotation[a], grads.rotation[i][a], lr_rot);
        }
        for a in 0..3 {
            update(&mut g.log_scale[a], grads.log_scale[i][a], lr_scale);
        }
        update(&mut g.opacity_logit, grads.opacity_logit[i], lr_op);
        for (j, (c, gc)) in g.sh.iter_mut().zip(&grads.sh[i]).enumerate() {
            let lr = if j == 0 { lr_dc } else { lr_rest };
            for a in 0..3 {
                update(&mut c[a], gc[a], lr);
            }
        }
    }
    Ok(())
}

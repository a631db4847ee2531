//! Structure-aware masking: random point removal and FPS/kNN patch removal.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::math::{self, Vec3};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSchedule {
    pub point_ratio: f64,
    pub point_gap: usize,
    pub patch_ratio: f64,
    pub patch_gap: usize,
    pub patch_count: usize,
    /// Points per patch. `None` means `ceil(P / patch_count)`.
    pub patch_size: Option<usize>,
    pub seed: u64,
    pub min_points: usize,
}

impl Default for MaskSchedule {
    fn default() -> Self {
        Self {
            point_ratio: 0.05,
            point_gap: 500,
            patch_ratio: 0.1,
            patch_gap: 1000,
            patch_count: 64,
            patch_size: None,
            seed: 0,
            min_points: 100,
        }
    }
}

impl MaskSchedule {
    /// A schedule that never removes anything.
    pub fn disabled() -> Self {
        Self {
            point_ratio: 0.0,
            patch_ratio: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("point_ratio", self.point_ratio), ("patch_ratio", self.patch_ratio)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidParameter(format!("{name} = {r} outside [0, 1)")));
            }
        }
        if self.point_gap == 0 || self.patch_gap == 0 {
            return Err(Error::InvalidParameter("mask gaps must be at least 1".into()));
        }
        if self.patch_count == 0 || self.patch_size == Some(0) {
            return Err(Error::InvalidParameter("patch count and size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn point_mask_due(&self, iteration: usize) -> bool {
        self.point_ratio > 0.0 && iteration > 0 && iteration % self.point_gap == 0
    }

    pub fn patch_mask_due(&self, iteration: usize) -> bool {
        self.patch_ratio > 0.0 && iteration > 0 && iteration % self.patch_gap == 0
    }
}

fn round_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

fn remove_indices<T: Scalar>(cloud: &mut GaussianCloud<T>, removed: &[usize]) -> Vec<bool> {
    let mut keep = vec![true; cloud.len()];
    for &i in removed {
        keep[i] = false;
    }
    cloud.retain_mask(&keep);
    keep
}

/// Removes `round(ratio * P)` Gaussians chosen uniformly without replacement.
/// Returns the keep mask over the original indices.
pub fn point_mask<T: Scalar, R: Rng>(
    cloud: &mut GaussianCloud<T>,
    ratio: f64,
    min_points: usize,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("point mask ratio {ratio} outside [0, 1)")));
    }
    let p = cloud.len();
    if p < min_points {
        log::info!("point mask skipped: {p} points below floor {min_points}");
        return Ok(vec![true; p]);
    }
    let m = round_count(ratio, p);
    let mut removed = index::sample(rng, p, m).into_vec();
    removed.sort_unstable();
    Ok(remove_indices(cloud, &removed))
}

fn dist2<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    let d = math::sub(a, b);
    math::dot(d, d)
}

/// Farthest point sampling starting at `start`. Ties go to the lowest index.
pub fn fps<T: Scalar>(positions: &[Vec3<T>], count: usize, start: usize) -> Result<Vec<usize>> {
    let p = positions.len();
    if count == 0 || count > p {
        return Err(Error::contract(format!("fps of {count} centers from {p} points")));
    }
    if start >= p {
        return Err(Error::contract(format!("fps start {start} out of range for {p} points")));
    }
    let mut chosen = vec![false; p];
    let mut min_d: Vec<T> = positions.iter().map(|&x| dist2(x, positions[start])).collect();
    chosen[start] = true;
    let mut centers = Vec::with_capacity(count);
    centers.push(start);
    while centers.len() < count {
        let mut best: Option<usize> = None;
        for i in 0..p {
            if chosen[i] {
                continue;
            }
            if best.is_none_or(|b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        let next = best.expect("count <= P leaves an unchosen point");
        chosen[next] = true;
        centers.push(next);
        for i in 0..p {
            let d = dist2(positions[i], positions[next]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    Ok(centers)
}

/// The `k` nearest points to each center, the center itself first and the
/// rest sorted by distance then index.
pub fn knn_patch<T: Scalar>(positions: &[Vec3<T>], centers: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let p = positions.len();
    if k == 0 || k > p {
        return Err(Error::contract(format!("knn patch of size {k} from {p} points")));
    }
    centers
        .iter()
        .map(|&c| {
            if c >= p {
                return Err(Error::contract(format!("center {c} out of range for {p} points")));
            }
            let mut others: Vec<(T, usize)> = (0..p)
                .filter(|&i| i != c)
                .map(|i| (dist2(positions[i], positions[c]), i))
                .collect();
            let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1));
            if k - 1 < others.len() {
                others.select_nth_unstable_by(k - 1, cmp);
                others.truncate(k - 1);
            }
            others.sort_unstable_by(cmp);
            let mut patch = Vec::with_capacity(k);
            patch.push(c);
            patch.extend(others.into_iter().map(|(_, i)| i));
            Ok(patch)
        })
        .collect()
}

/// Removes the union of `round(patch_ratio * C)` randomly chosen kNN patches
/// around FPS centers. Returns the keep mask over the original indices.
pub fn patch_mask<T: Scalar, R: Rng>(cloud: &mut GaussianCloud<T>, schedule: &MaskSchedule, rng: &mut R) -> Result<Vec<bool>> {
    schedule.validate()?;
    let p = cloud.len();
    if p < schedule.min_points || p == 0 {
        log::info!("patch mask skipped: {p} points below floor {}", schedule.min_points);
        return Ok(vec![true; p]);
    }
    let c = schedule.patch_count.min(p);
    let k = schedule.patch_size.unwrap_or(p.div_ceil(c)).min(p);
    let positions = cloud.positions();
    let start = rng.random_range(0..p);
    let centers = fps(&positions, c, start)?;
    let patches = knn_patch(&positions, &centers, k)?;
    let picks = index::sample(rng, c, round_count(schedule.patch_ratio, c));

    let mut removed = vec![false; p];
    let mut n_removed = 0;
    for pick in picks {
        let patch = &patches[pick];
        let fresh = patch.iter().filter(|&&i| !removed[i]).count();
        if p - n_removed - fresh < schedule.min_points {
            log::info!("patch mask truncated to keep at least {} points", schedule.min_points);
            break;
        }
        for &i in patch {
            removed[i] = true;
        }
        n_removed += fresh;
    }
    let removed: Vec<usize> = (0..p).filter(|&i| removed[i]).collect();
    Ok(remove_indices(cloud, &removed))
}

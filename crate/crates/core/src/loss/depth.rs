//! Median / mean-absolute-deviation depth normalization and the
//! shift-and-scale invariant depth loss built on it.

use crate::error::{Error, Result};
use crate::image::DepthMap;
use crate::scalar::Scalar;

/// Denominator floor for constant-depth regions.
pub const DEPTH_EPS: f64 = 1e-8;

struct Normalized<T> {
    /// Indices of the participating pixels.
    idx: Vec<usize>,
    values: Vec<T>,
    median: T,
    spread: T,
    floored: bool,
    /// Positions (within `idx`) of the order statistics forming the median,
    /// with their weights.
    median_terms: Vec<(usize, T)>,
}

fn normalize_over<T: Scalar>(values: &[T], mask: &[bool]) -> Option<Normalized<T>> {
    let idx: Vec<usize> = (0..values.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return None;
    }
    let m = idx.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[idx[a]].partial_cmp(&values[idx[b]]).unwrap());
    let median_terms = if m % 2 == 1 {
        vec![(order[m / 2], T::one())]
    } else {
        let half = T::lit(0.5);
        vec![(order[m / 2 - 1], half), (order[m / 2], half)]
    };
    let median = median_terms.iter().map(|&(k, wt)| values[idx[k]] * wt).sum::<T>();
    let spread = idx.iter().map(|&i| (values[i] - median).abs()).sum::<T>() / T::from_usize_lossy(m);
    let eps = T::lit(DEPTH_EPS);
    let floored = spread < eps;
    let denom = spread.max(eps);
    let normalized = idx.iter().map(|&i| (values[i] - median) / denom).collect();
    Some(Normalized {
        idx,
        values: normalized,
        median,
        spread: denom,
        floored,
        median_terms,
    })
}

/// `(D − median(D)) / mean|D − median(D)|` over valid pixels. Invalid pixels
/// are passed through unchanged and stay invalid.
pub fn normalize_depth<T: Scalar>(d: &DepthMap<T>) -> Result<DepthMap<T>> {
    let norm = normalize_over(&d.values, &d.valid).ok_or(Error::EmptyDepth)?;
    let mut out = d.clone();
    for (k, &i) in norm.idx.iter().enumerate() {
        out.values[i] = norm.values[k];
    }
    Ok(out)
}

/// Mean L1 between normalized depths over the pixels valid in both maps.
///
/// Returns the loss and its gradient with respect to `d_render` (zero
/// outside the shared mask). An empty intersection yields zero.
pub fn loss_depth<T: Scalar>(d_render: &DepthMap<T>, d_mono: &DepthMap<T>) -> Result<(T, Vec<T>)> {
    if d_render.width != d_mono.width || d_render.height != d_mono.height {
        return Err(Error::contract("depth maps differ in size"));
    }
    let n = d_render.values.len();
    let mask: Vec<bool> = (0..n).map(|i| d_render.valid[i] && d_mono.valid[i]).collect();
    let (Some(r), Some(p)) = (normalize_over(&d_render.values, &mask), normalize_over(&d_mono.values, &mask)) else {
        log::warn!("depth maps share no valid pixels; skipping depth term");
        return Ok((T::zero(), vec![T::zero(); n]));
    };
    let m = T::from_usize_lossy(r.idx.len());
    let mut loss = T::zero();
    let g: Vec<T> = r
        .values
        .iter()
        .zip(&p.values)
        .map(|(&a, &b)| {
            loss += (a - b).abs();
            sign(a - b) / m
        })
        .collect();
    loss /= m;

    let mut grad = vec![T::zero(); n];
    if r.floored {
        // Constant render depth: the floored denominator has no gradient
        // and the numerator is identically zero.
        for (k, &i) in r.idx.iter().enumerate() {
            grad[i] = g[k] / r.spread;
        }
        let total_g: T = g.iter().copied().sum();
        for &(k, wt) in &r.median_terms {
            grad[r.idx[k]] -= wt * total_g / r.spread;
        }
        return Ok((loss, grad));
    }

    let s = r.spread;
    let residual: Vec<T> = r.idx.iter().map(|&i| d_render.values[i] - r.median).collect();
    let total_g: T = g.iter().copied().sum();
    let g_dot_r: T = g.iter().zip(&residual).map(|(&a, &b)| a * b).sum();
    let sign_sum: T = residual.iter().map(|&v| sign(v)).sum();
    let mut median_grad = vec![T::zero(); r.idx.len()];
    for &(k, wt) in &r.median_terms {
        median_grad[k] = wt;
    }
    for k in 0..r.idx.len() {
        let d_spread = (sign(residual[k]) - median_grad[k] * sign_sum) / m;
        grad[r.idx[k]] = g[k] / s - median_grad[k] * total_g / s - g_dot_r / (s * s) * d_spread;
    }
    Ok((loss, grad))
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

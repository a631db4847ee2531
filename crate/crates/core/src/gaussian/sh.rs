//! Real spherical harmonics up to degree 3 and the RGB color convention.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::Scalar;

pub const MAX_SH_DEGREE: usize = 3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn sh_coeffs_for_degree(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn sh_degree_from_coeffs(coeffs: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&d| sh_coeffs_for_degree(d) == coeffs)
}

/// DC coefficient whose degree-0 evaluation reproduces `rgb`.
pub fn rgb_to_sh_dc<T: Scalar>(rgb: Vec3<T>) -> Vec3<T> {
    let c0 = T::lit(SH_C0);
    let half = T::lit(0.5);
    [(rgb[0] - half) / c0, (rgb[1] - half) / c0, (rgb[2] - half) / c0]
}

/// Basis values at `dir` (assumed unit). Only the first `(degree+1)²`
/// entries are meaningful.
pub fn sh_basis<T: Scalar>(degree: usize, dir: Vec3<T>) -> [T; 16] {
    let mut out = [T::zero(); 16];
    out[0] = T::lit(SH_C0);
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir;
    let c1 = T::lit(SH_C1);
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let c2 = SH_C2.map(T::lit);
    let two = T::lit(2.0);
    out[4] = c2[0] * x * y;
    out[5] = c2[1] * y * z;
    out[6] = c2[2] * (two * zz - xx - yy);
    out[7] = c2[3] * x * z;
    out[8] = c2[4] * (xx - yy);
    if degree == 2 {
        return out;
    }
    let c3 = SH_C3.map(T::lit);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    out[9] = c3[0] * y * (three * xx - yy);
    out[10] = c3[1] * x * y * z;
    out[11] = c3[2] * y * (four * zz - xx - yy);
    out[12] = c3[3] * z * (two * zz - three * xx - three * yy);
    out[13] = c3[4] * x * (four * zz - xx - yy);
    out[14] = c3[5] * z * (xx - yy);
    out[15] = c3[6] * x * (xx - three * yy);
    out
}

/// Partial derivatives of each basis polynomial with respect to the
/// (unconstrained) direction components.
pub fn sh_basis_grad<T: Scalar>(degree: usize, dir: Vec3<T>) -> [Vec3<T>; 16] {
    let z0 = T::zero();
    let mut out = [[z0; 3]; 16];
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir;
    let c1 = T::lit(SH_C1);
    out[1] = [z0, -c1, z0];
    out[2] = [z0, z0, c1];
    out[3] = [-c1, z0, z0];
    if degree == 1 {
        return out;
    }
    let c2 = SH_C2.map(T::lit);
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    out[4] = [c2[0] * y, c2[0] * x, z0];
    out[5] = [z0, c2[1] * z, c2[1] * y];
    out[6] = [-two * c2[2] * x, -two * c2[2] * y, four * c2[2] * z];
    out[7] = [c2[3] * z, z0, c2[3] * x];
    out[8] = [two * c2[4] * x, -two * c2[4] * y, z0];
    if degree == 2 {
        return out;
    }
    let c3 = SH_C3.map(T::lit);
    let three = T::lit(3.0);
    let six = T::lit(6.0);
    let eight = T::lit(8.0);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[9] = [six * c3[0] * x * y, c3[0] * (three * xx - three * yy), z0];
    out[10] = [c3[1] * y * z, c3[1] * x * z, c3[1] * x * y];
    out[11] = [
        -two * c3[2] * x * y,
        c3[2] * (four * zz - xx - three * yy),
        eight * c3[2] * y * z,
    ];
    out[12] = [
        -six * c3[3] * x * z,
        -six * c3[3] * y * z,
        c3[3] * (six * zz - three * xx - three * yy),
    ];
    out[13] = [
        c3[4] * (four * zz - three * xx - yy),
        -two * c3[4] * x * y,
        eight * c3[4] * x * z,
    ];
    out[14] = [two * c3[5] * x * z, -two * c3[5] * y * z, c3[5] * (xx - yy)];
    out[15] = [c3[6] * (three * xx - three * yy), -six * c3[6] * x * y, z0];
    out
}

/// Unclamped `0.5 + Σ c_l·Y_l(dir)` per channel.
pub(crate) fn eval_sh_raw<T: Scalar>(sh: &[Vec3<T>], degree: usize, dir: Vec3<T>) -> Vec3<T> {
    let basis = sh_basis(degree, dir);
    let half = T::lit(0.5);
    let mut rgb = [half; 3];
    for (coef, &y) in sh.iter().zip(basis.iter()) {
        for c in 0..3 {
            rgb[c] += coef[c] * y;
        }
    }
    rgb
}

/// View-dependent color of a coefficient set, clamped to [0, 1].
pub fn sh_to_rgb<T: Scalar>(sh: &[Vec3<T>], degree: usize, view_dir: Vec3<T>) -> Result<Vec3<T>> {
    if degree > MAX_SH_DEGREE || sh.len() != sh_coeffs_for_degree(degree) {
        return Err(Error::InvalidParameter(format!(
            "{} sh coefficients for degree {degree}",
            sh.len()
        )));
    }
    let n = crate::math::norm(view_dir);
    if !n.is_finite() || (n - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::InvalidParameter(format!(
            "view direction norm {n} is not unit"
        )));
    }
    let raw = eval_sh_raw(sh, degree, view_dir);
    Ok(raw.map(|v| v.max(T::zero()).min(T::one())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normalize;

    // Independent basis oracle written in spherical coordinates.
    fn basis_oracle(l: usize, m: i32, dir: [f64; 3]) -> f64 {
        let [x, y, z] = dir;
        let theta = z.clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        let (st, ct) = (theta.sin(), theta.cos());
        let pi = std::f64::consts::PI;
        // Real SH with the sign convention used for splatting exports
        // (an extra (-1)^m relative to the textbook real basis).
        let v = match (l, m) {
            (0, 0) => 0.5 / pi.sqrt(),
            (1, -1) => -(3.0 / (4.0 * pi)).sqrt() * st * phi.sin(),
            (1, 0) => (3.0 / (4.0 * pi)).sqrt() * ct,
            (1, 1) => -(3.0 / (4.0 * pi)).sqrt() * st * phi.cos(),
            (2, -2) => 0.5 * (15.0 / pi).sqrt() * st * st * phi.sin() * phi.cos(),
            (2, -1) => -0.5 * (15.0 / pi).sqrt() * st * ct * phi.sin(),
            (2, 0) => 0.25 * (5.0 / pi).sqrt() * (3.0 * ct * ct - 1.0),
            (2, 1) => -0.5 * (15.0 / pi).sqrt() * st * ct * phi.cos(),
            (2, 2) => 0.25 * (15.0 / pi).sqrt() * st * st * (2.0 * phi).cos(),
            _ => unreachable!(),
        };
        v
    }

    fn sample_dirs() -> Vec<[f64; 3]> {
        let mut dirs = Vec::new();
        for i in 0..7 {
            for j in 0..9 {
                let th = 0.1 + 2.9 * i as f64 / 6.0;
                let ph = -3.0 + 6.0 * j as f64 / 8.0;
                dirs.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            }
        }
        dirs
    }

    #[test]
    fn basis_matches_spherical_oracle_through_degree_two() {
        let order = [(0, 0), (1, -1), (1, 0), (1, 1), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2)];
        for d in sample_dirs() {
            let b = sh_basis(2, d);
            for (k, &(l, m)) in order.iter().enumerate() {
                let o = basis_oracle(l, m, d);
                assert!((b[k] - o).abs() < 1e-12, "Y[{k}] at {d:?}: {} vs {o}", b[k]);
            }
        }
    }

    #[test]
    fn degree_three_basis_is_orthonormal() {
        // Monte-Carlo-free check: quadrature over a fine theta/phi grid.
        let n_t = 200;
        let n_p = 400;
        let mut gram = [[0.0_f64; 16]; 16];
        for i in 0..n_t {
            let th = (i as f64 + 0.5) * std::f64::consts::PI / n_t as f64;
            for j in 0..n_p {
                let ph = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / n_p as f64;
                let d = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                let w = th.sin() * (std::f64::consts::PI / n_t as f64) * (2.0 * std::f64::consts::PI / n_p as f64);
                let b = sh_basis(3, d);
                for a in 0..16 {
                    for c in 0..16 {
                        gram[a][c] += w * b[a] * b[c];
                    }
                }
            }
        }
        for a in 0..16 {
            for c in 0..16 {
                let expect = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] - expect).abs() < 1e-3, "gram[{a}][{c}] = {}", gram[a][c]);
            }
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        for d in sample_dirs() {
            let g = sh_basis_grad(3, d);
            for axis in 0..3 {
                let mut p = d;
                let mut m = d;
                p[axis] += 1e-6;
                m[axis] -= 1e-6;
                let bp = sh_basis(3, p);
                let bm = sh_basis(3, m);
                for k in 0..16 {
                    let fd = (bp[k] - bm[k]) / 2e-6;
                    assert!((fd - g[k][axis]).abs() < 1e-6, "dY{k}/d{axis}");
                }
            }
        }
    }

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let rgb = sh_to_rgb(&[[0.0_f64; 3]], 0, [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(rgb, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn inverse_c0_saturates_to_white() {
        let c = 1.0 / 0.282_094_791_8;
        let rgb = sh_to_rgb(&[[c, c, c]], 0, [1.0, 0.0, 0.0_f64]).unwrap();
        assert_eq!(rgb, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn degree_zero_is_view_independent() {
        let sh = [[0.3_f64, -0.7, 1.1]];
        let first = sh_to_rgb(&sh, 0, [0.0, 0.0, 1.0]).unwrap();
        for d in sample_dirs() {
            assert_eq!(sh_to_rgb(&sh, 0, d).unwrap(), first);
        }
    }

    #[test]
    fn degree_one_antipodal_difference() {
        let sh = [[0.1_f64, 0.0, -0.1], [0.05, -0.1, 0.2], [0.2, 0.1, 0.0], [-0.15, 0.05, 0.1]];
        for d in sample_dirs() {
            let neg = [-d[0], -d[1], -d[2]];
            let a = sh_to_rgb(&sh, 1, d).unwrap();
            let b = sh_to_rgb(&sh, 1, neg).unwrap();
            for c in 0..3 {
                // Independent evaluation of the linear band through the oracle.
                let lin = sh[1][c] * basis_oracle(1, -1, d)
                    + sh[2][c] * basis_oracle(1, 0, d)
                    + sh[3][c] * basis_oracle(1, 1, d);
                assert!((a[c] - b[c] - 2.0 * lin).abs() < 1e-12);
                // 2·C1·(linear coefficient contribution) written out by hand.
                let by_hand = 2.0 * SH_C1 * (-sh[1][c] * d[1] + sh[2][c] * d[2] - sh[3][c] * d[0]);
                assert!((a[c] - b[c] - by_hand).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_length_mismatch_and_non_unit_direction() {
        assert!(sh_to_rgb(&[[0.0_f64; 3]; 3], 1, [0.0, 0.0, 1.0]).is_err());
        assert!(sh_to_rgb(&[[0.0_f64; 3]], 0, [0.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn dc_inverse_round_trips() {
        let rgb = [0.2_f64, 0.55, 0.9];
        let dc = rgb_to_sh_dc(rgb);
        let back = sh_to_rgb(&[dc], 0, normalize([1.0, 1.0, 1.0])).unwrap();
        for c in 0..3 {
            assert!((back[c] - rgb[c]).abs() < 1e-12);
        }
    }
}

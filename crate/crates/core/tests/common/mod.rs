#![allow(dead_code)]

use auggs::gaussian::{Camera, Gaussian, GaussianCloud};
use auggs::raster::{render, render_backward, GradientBuffer, Upstream};
use auggs::gaussian::sh::sh_basis;
use auggs::math;
use auggs::raster::{ALPHA_MAX, ALPHA_MIN, TRANSMITTANCE_MIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradScene {
    pub cloud: GaussianCloud<f64>,
    pub camera: Camera<f64>,
    pub background: [f64; 3],
    pub up_color: Vec<f64>,
    pub up_depth: Vec<f64>,
}

/// Random scene of at most 8 Gaussians in front of a 16×16 camera, with
/// random linear functionals on color and depth as the "loss".
///
/// Draws are repeated until the scene sits at a point where the rendered
/// objective is differentiable with margin: no pixel alpha within 1% of the
/// skip threshold or the clip value, no raw color within 1e-3 of the clamp
/// bounds, and no transmittance within 1% of the early-stop cutoff. Central
/// differences straddling one of those steps or kinks do not estimate a
/// derivative.
pub fn random_grad_scene(seed: u64) -> GradScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let scene = draw_grad_scene(&mut rng);
        if has_differentiability_margin(&scene) {
            return scene;
        }
    }
}

fn draw_grad_scene(rng: &mut ChaCha8Rng) -> GradScene {
    let n = rng.random_range(1..=8);
    let degree = rng.random_range(0..=3usize);
    let k = (degree + 1) * (degree + 1);
    let mut gs = Vec::new();
    for _ in 0..n {
        let center = [
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        ];
        let rotation = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let log_scale = [
            rng.random_range(-2.5..-1.0),
            rng.random_range(-2.5..-1.0),
            rng.random_range(-2.5..-1.0),
        ];
        let opacity_logit = rng.random_range(-1.5..2.5);
        let mut sh = vec![[0.0; 3]; k];
        for (i, c) in sh.iter_mut().enumerate() {
            let amp = if i == 0 { 0.8 } else { 0.25 };
            for v in c.iter_mut() {
                *v = rng.random_range(-amp..amp);
            }
        }
        gs.push(Gaussian::new(center, rotation, log_scale, opacity_logit, sh));
    }
    let cloud = GaussianCloud::from_gaussians(degree, gs).unwrap();
    let eye = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        -3.0 + rng.random_range(-0.5..0.5),
    ];
    let camera = Camera::look_at(16, 16, 18.0, 18.0, eye, [0.0; 3], [0.0, -1.0, 0.0]).unwrap();
    let up_color = (0..16 * 16 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up_depth = (0..16 * 16).map(|_| rng.random_range(-0.3..0.3)).collect();
    let background = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    GradScene {
        cloud,
        camera,
        background,
        up_color,
        up_depth,
    }
}

fn objective(scene: &GradScene, cloud: &GaussianCloud<f64>) -> f64 {
    let out = render(cloud, &scene.camera, scene.background).unwrap();
    let c: f64 = out.color.data.iter().zip(&scene.up_color).map(|(a, b)| a * b).sum();
    let d: f64 = out.depth.iter().zip(&scene.up_depth).map(|(a, b)| a * b).sum();
    c + d
}

pub fn analytic_gradient(scene: &GradScene) -> GradientBuffer<f64> {
    let out = render(&scene.cloud, &scene.camera, scene.background).unwrap();
    render_backward(
        &scene.cloud,
        &scene.camera,
        &out,
        Upstream {
            color: &scene.up_color,
            depth: Some(&scene.up_depth),
        },
    )
    .unwrap()
}

#[derive(Debug)]
pub struct Mismatch {
    pub gaussian: usize,
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic partial against central differences of the
/// rendered objective (step `h` on the pre-activation parameter).
pub fn check_gradients(scene: &GradScene, h: f64, rel: f64, abs: f64) -> (usize, Vec<Mismatch>) {
    let grads = analytic_gradient(scene);
    let mut checked = 0;
    let mut bad = Vec::new();
    for i in 0..scene.cloud.len() {
        let mut params: Vec<(String, f64)> = Vec::new();
        for k in 0..3 {
            params.push((format!("center[{k}]"), grads.center[i][k]));
        }
        for k in 0..4 {
            params.push((format!("rotation[{k}]"), grads.rotation[i][k]));
        }
        for k in 0..3 {
            params.push((format!("log_scale[{k}]"), grads.log_scale[i][k]));
        }
        params.push(("opacity_logit".into(), grads.opacity_logit[i]));
        for (j, c) in grads.sh[i].iter().enumerate() {
            for k in 0..3 {
                params.push((format!("sh[{j}][{k}]"), c[k]));
            }
        }
        for (p, (name, analytic)) in params.into_iter().enumerate() {
            let eval = |delta: f64| {
                let mut c = scene.cloud.clone();
                let g = &mut c.gaussians[i];
                match p {
                    0..=2 => g.center[p] += delta,
                    3..=6 => g.rotation[p - 3] += delta,
                    7..=9 => g.log_scale[p - 7] += delta,
                    10 => g.opacity_logit += delta,
                    _ => {
                        let q = p - 11;
                        g.sh[q / 3][q % 3] += delta;
                    }
                }
                objective(scene, &c)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            checked += 1;
            let diff = (analytic - numeric).abs();
            if diff > abs && diff > rel * analytic.abs().max(numeric.abs()) {
                bad.push(Mismatch {
                    gaussian: i,
                    param: name,
                    analytic,
                    numeric,
                });
            }
        }
    }
    (checked, bad)
}

fn near(v: f64, edge: f64, rel: f64) -> bool {
    (v - edge).abs() <= rel * edge
}

pub fn has_differentiability_margin(scene: &GradScene) -> bool {
    let out = render(&scene.cloud, &scene.camera, scene.background).unwrap();
    let cam_center = scene.camera.center();
    // Raw (unclamped) colors away from the clamp bounds.
    for g in &scene.cloud.gaussians {
        let dir = math::normalize(math::sub(g.center, cam_center));
        let basis = sh_basis(scene.cloud.sh_degree, dir);
        for c in 0..3 {
            let raw: f64 = 0.5 + g.sh.iter().zip(basis.iter()).map(|(s, b)| s[c] * b).sum::<f64>();
            if raw.abs() < 1e-3 || (raw - 1.0).abs() < 1e-3 {
                return false;
            }
        }
    }
    let (w, h) = (scene.camera.width, scene.camera.height);
    for y in 0..h {
        for x in 0..w {
            for s in out.cache.splats.iter().flatten() {
                let dx = x as f64 - s.mean2d[0];
                let dy = y as f64 - s.mean2d[1];
                let power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
                let alpha = s.opacity * power.exp();
                if near(alpha, ALPHA_MIN, 1e-2) || near(alpha, ALPHA_MAX, 1e-2) {
                    return false;
                }
            }
            let mut t = 1.0;
            for term in out.contributions(x, y) {
                t = term.transmittance * (1.0 - term.alpha);
            }
            if near(t, TRANSMITTANCE_MIN, 1e-2) {
                return false;
            }
        }
    }
    true
}

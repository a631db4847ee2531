//! Two-stage training: coarse optimization with point masks, the augmentation
//! handoff, and fine optimization with patch masks.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{self, InitPoint, ViewOrigin, ViewRecord, ViewSet};
use crate::density::{densify_and_prune, reset_opacity, DensifyConfig, DensifyStats};
use crate::error::{Error, Result};
use crate::gaussian::{rgb_to_sh_dc, sh_coeffs_for_degree, Camera, Gaussian, GaussianCloud, MAX_SH_DEGREE};
use crate::image::DepthMap;
use crate::io;
use crate::loss::{loss_total, psnr, ssim_metric, LossWeights};
use crate::masking::{patch_mask, point_mask, MaskSchedule};
use crate::math::{self, Vec3};
use crate::optim::{optimizer_step, AdamState, OptimizerConfig};
use crate::raster::{render, render_backward, Upstream};
use crate::scalar::{logit, Scalar};

/// Where the coarse init sphere is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCenter {
    /// Center of the camera-center bounding sphere.
    #[default]
    Cameras,
    /// Least-squares intersection of the optical axes.
    Focus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Random points for the coarse stage.
    pub point_count: usize,
    /// Multiplier on the radius of the camera-center bounding sphere.
    pub radius_scale: f64,
    pub center: InitCenter,
    pub color: f64,
    pub opacity: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            point_count: 10_000,
            radius_scale: 1.0,
            center: InitCenter::Cameras,
            color: 0.5,
            opacity: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub coarse_iters: usize,
    pub fine_iters: usize,
    pub sh_degree: usize,
    /// Iterations between raising the active SH degree by one; 0 trains all
    /// bands from the start.
    pub sh_increase_every: usize,
    pub loss: LossWeights,
    pub masks: MaskSchedule,
    pub densify: DensifyConfig,
    pub optimizer: OptimizerConfig,
    pub init: InitConfig,
    pub background: [f64; 3],
    pub seed: u64,
    pub eval_every: usize,
    /// Pseudo views per reference view.
    pub pseudo_view_factor: usize,
    pub pseudo_weight: f64,
    pub use_depth: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            coarse_iters: 5000,
            fine_iters: 6000,
            sh_degree: 3,
            sh_increase_every: 1000,
            loss: LossWeights::default(),
            masks: MaskSchedule::default(),
            densify: DensifyConfig::default(),
            optimizer: OptimizerConfig::default(),
            init: InitConfig::default(),
            background: [1.0; 3],
            seed: 0,
            eval_every: 500,
            pseudo_view_factor: 3,
            pseudo_weight: 1.0,
            use_depth: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_iters == 0 {
            return Err(Error::InvalidParameter("coarse_iters must be at least 1".into()));
        }
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidParameter(format!("SH degree {} above {MAX_SH_DEGREE}", self.sh_degree)));
        }
        if self.init.point_count == 0 || !(self.init.radius_scale > 0.0) {
            return Err(Error::InvalidParameter("init needs a positive point count and radius".into()));
        }
        if !(self.init.opacity > 0.0 && self.init.opacity < 1.0) {
            return Err(Error::InvalidParameter(format!("init opacity {} outside (0, 1)", self.init.opacity)));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParameter("background must lie in [0, 1]".into()));
        }
        if !(self.pseudo_weight >= 0.0 && self.pseudo_weight.is_finite()) {
            return Err(Error::InvalidParameter("pseudo_weight must be nonnegative".into()));
        }
        self.loss.validate()?;
        self.masks.validate()?;
        self.optimizer.validate()
    }

    fn background<T: Scalar>(&self) -> [T; 3] {
        self.background.map(T::lit)
    }

    fn active_sh_degree(&self, iteration: usize) -> usize {
        if self.sh_increase_every == 0 {
            self.sh_degree
        } else {
            (iteration / self.sh_increase_every).min(self.sh_degree)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Coarse,
    Fine,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PointMask,
    PatchMask,
    Densify,
}

/// A change in the number of Gaussians.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEvent {
    pub iteration: usize,
    pub kind: EventKind,
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub train_psnr: f64,
    pub train_ssim: f64,
    pub heldout_psnr: Option<f64>,
    pub heldout_ssim: Option<f64>,
    pub points: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub budget: usize,
    pub initial_points: usize,
    pub final_points: usize,
    pub evals: Vec<EvalPoint>,
    pub events: Vec<SizeEvent>,
    /// Total loss at every iteration.
    pub loss_trace: Vec<f64>,
    pub best_iteration: Option<usize>,
    pub wall_ms: u64,
}

impl StageReport {
    /// Point count implied by replaying the size events.
    pub fn replayed_points(&self) -> usize {
        let delta: isize = self
            .events
            .iter()
            .map(|e| e.after as isize - e.before as isize)
            .sum();
        (self.initial_points as isize + delta) as usize
    }
}

#[derive(Debug, Clone)]
pub struct StageOutput<T> {
    pub cloud: GaussianCloud<T>,
    pub report: StageReport,
    /// Snapshot with the best mean held-out PSNR, when held-out views exist.
    pub best: Option<GaussianCloud<T>>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// PSNR and SSIM of the cloud's render against every view's target.
pub fn evaluate_views<T: Scalar>(cloud: &GaussianCloud<T>, views: &ViewSet<T>, background: [T; 3]) -> Result<Vec<ViewMetrics>> {
    views
        .records
        .par_iter()
        .map(|r| {
            let out = render(cloud, &r.camera, background)?;
            let target = r.target(background);
            Ok(ViewMetrics {
                psnr: psnr(&out.color, &target)?,
                ssim: ssim_metric(&out.color, &target)?,
            })
        })
        .collect()
}

pub fn mean_psnr(m: &[ViewMetrics]) -> f64 {
    mean(m.iter().map(|v| v.psnr))
}

pub fn mean_ssim(m: &[ViewMetrics]) -> f64 {
    mean(m.iter().map(|v| v.ssim))
}

/// Radius around the mean camera center that encloses every camera.
pub fn scene_extent<T: Scalar>(cams: &[Camera<T>]) -> f64 {
    let centers: Vec<Vec3<f64>> = cams.iter().map(|c| c.center().map(|x| x.as_f64())).collect();
    bounding_sphere(&centers).1.max(1e-6)
}

fn bounding_sphere(points: &[Vec3<f64>]) -> (Vec3<f64>, f64) {
    let n = points.len().max(1) as f64;
    let c = points
        .iter()
        .fold([0.0; 3], |acc, &p| math::add(acc, math::scale(p, 1.0 / n)));
    let r = points.iter().map(|&p| math::norm(math::sub(p, c))).fold(0.0, f64::max);
    (c, r)
}

fn reference_cameras<T: Scalar>(views: &ViewSet<T>) -> Vec<Camera<T>> {
    let refs: Vec<_> = views
        .records
        .iter()
        .filter(|r| r.origin == ViewOrigin::Reference)
        .map(|r| r.camera.clone())
        .collect();
    if refs.is_empty() {
        views.cameras()
    } else {
        refs
    }
}

const NN_RANK: usize = 3;
const MIN_INIT_SCALE: f64 = 1e-6;

/// Distance from each point to its third nearest neighbour.
pub fn nearest_neighbor_scales<T: Scalar>(points: &[Vec3<T>]) -> Vec<T> {
    let n = points.len();
    if n < 2 {
        return vec![T::lit(0.01); n];
    }
    let rank = NN_RANK.min(n - 1);
    points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut best = [T::infinity(); NN_RANK];
            for (j, &q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = math::sub(p, q);
                let d2 = math::dot(d, d);
                if d2 < best[rank - 1] {
                    let mut k = rank - 1;
                    while k > 0 && best[k - 1] > d2 {
                        best[k] = best[k - 1];
                        k -= 1;
                    }
                    best[k] = d2;
                }
            }
            best[rank - 1].sqrt().max(T::lit(MIN_INIT_SCALE))
        })
        .collect()
}

/// Isotropic Gaussians at the given points with nearest-neighbour scales,
/// identity rotation and DC color set from each point's color.
pub fn init_from_points<T: Scalar>(points: &[InitPoint<T>], sh_degree: usize, opacity: f64) -> Result<GaussianCloud<T>> {
    if points.is_empty() {
        return Err(Error::EmptyInit);
    }
    let positions: Vec<Vec3<T>> = points.iter().map(|p| p.position).collect();
    let scales = nearest_neighbor_scales(&positions);
    let k = sh_coeffs_for_degree(sh_degree);
    let op = T::lit(logit(opacity));
    let gaussians = points
        .iter()
        .zip(scales)
        .map(|(p, s)| {
            let mut sh = vec![[T::zero(); 3]; k];
            sh[0] = rgb_to_sh_dc(p.color);
            Gaussian::new(p.position, [T::one(), T::zero(), T::zero(), T::zero()], [s.ln(); 3], op, sh)
        })
        .collect();
    GaussianCloud::from_gaussians(sh_degree, gaussians)
}

/// Uniform random points inside the bounding sphere of the camera centers.
pub fn coarse_init<T: Scalar>(cams: &[Camera<T>], cfg: &TrainingConfig) -> Result<GaussianCloud<T>> {
    if cams.is_empty() {
        return Err(Error::contract("coarse init needs at least one camera"));
    }
    let centers: Vec<Vec3<f64>> = cams.iter().map(|c| c.center().map(|x| x.as_f64())).collect();
    let (c, r) = bounding_sphere(&centers);
    let r = if r > 0.0 { r } else { 1.0 } * cfg.init.radius_scale;
    let c = match cfg.init.center {
        InitCenter::Cameras => c,
        InitCenter::Focus => augment::scene_centroid(cams)?,
    };
    let mut rng = stage_rng(cfg.seed, 1);
    let color = T::lit(cfg.init.color);
    let points: Vec<InitPoint<T>> = (0..cfg.init.point_count)
        .map(|_| {
            let dir = math::normalize(std::array::from_fn(|_| StandardNormal.sample(&mut rng)));
            let rad = r * rng.random::<f64>().cbrt();
            InitPoint {
                position: math::add(c, math::scale(dir, rad)).map(T::lit),
                color: [color; 3],
            }
        })
        .collect();
    init_from_points(&points, cfg.sh_degree, cfg.init.opacity)
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Round-robin over a fresh seeded shuffle each epoch.
struct ViewCycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl ViewCycler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn optimize<T: Scalar>(
    stage: Stage,
    mut cloud: GaussianCloud<T>,
    views: &ViewSet<T>,
    heldout: Option<&ViewSet<T>>,
    cfg: &TrainingConfig,
) -> Result<StageOutput<T>> {
    let start = Instant::now();
    let (budget, stream) = match stage {
        Stage::Coarse => (cfg.coarse_iters, 10),
        Stage::Fine => (cfg.fine_iters, 20),
    };
    let bg = cfg.background::<T>();
    let extent = scene_extent(&reference_cameras(views));
    let mut cycler = ViewCycler::new(views.len(), stage_rng(cfg.seed, stream));
    let mut densify_rng = stage_rng(cfg.seed, stream + 1);
    let mut mask_rng = stage_rng(cfg.seed ^ cfg.masks.seed, stream + 2);
    let heldout = heldout.filter(|h| !h.is_empty());

    let mut state = AdamState::for_cloud(&cloud);
    let mut stats = DensifyStats::new(cloud.len());
    let mut report = StageReport {
        stage,
        budget,
        initial_points: cloud.len(),
        final_points: cloud.len(),
        evals: Vec::new(),
        events: Vec::new(),
        loss_trace: Vec::with_capacity(budget),
        best_iteration: None,
        wall_ms: 0,
    };
    let mut best: Option<(f64, GaussianCloud<T>)> = None;
    let pseudo_weight = T::lit(cfg.pseudo_weight);
    let densify_stop = cfg.densify.stop_iteration(budget);

    for it in 1..=budget {
        let view = &views.records[cycler.next()];
        let target = view.target(bg);
        let out = render(&cloud, &view.camera, bg)?;
        let depth_pair = match (&view.depth, cfg.use_depth && cfg.loss.lambda_d > 0.0) {
            (Some(d), true) => Some(DepthMap::new(
                out.color.width,
                out.color.height,
                out.depth.clone(),
                vec![true; out.depth.len()],
            )?)
            .map(|r| (r, d)),
            _ => None,
        };
        let loss = loss_total(&out.color, &target, depth_pair.as_ref().map(|(r, d)| (r, *d)), &cfg.loss)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                stage: stage.to_string(),
                iteration: it,
            });
        }
        let weight = if view.origin == ViewOrigin::Pseudo { pseudo_weight } else { T::one() };
        report.loss_trace.push((loss.total * weight).as_f64());
        let mut grad_color = loss.grad_color;
        let mut grad_depth = loss.grad_depth;
        if weight != T::one() {
            grad_color.iter_mut().for_each(|g| *g *= weight);
            if let Some(gd) = grad_depth.as_mut() {
                gd.iter_mut().for_each(|g| *g *= weight);
            }
        }
        let mut grads = render_backward(
            &cloud,
            &view.camera,
            &out,
            Upstream {
                color: &grad_color,
                depth: grad_depth.as_deref(),
            },
        )?;
        let active = sh_coeffs_for_degree(cfg.active_sh_degree(it).min(cloud.sh_degree));
        for sh in &mut grads.sh {
            sh[active..].iter_mut().for_each(|c| *c = [T::zero(); 3]);
        }
        if cfg.densify.enabled && it < densify_stop {
            stats.accumulate(&grads, &out.cache, view.camera.width, view.camera.height)?;
        }
        optimizer_step(&mut cloud, &grads, &mut state, it, budget, extent, &cfg.optimizer)?;

        // Nothing trains after the last iteration, so masking there only loses points.
        let mask_kind = match stage {
            _ if it == budget => None,
            Stage::Coarse if cfg.masks.point_mask_due(it) => Some(EventKind::PointMask),
            Stage::Fine if cfg.masks.patch_mask_due(it) => Some(EventKind::PatchMask),
            _ => None,
        };
        if let Some(kind) = mask_kind {
            let before = cloud.len();
            let keep = match kind {
                EventKind::PointMask => point_mask(&mut cloud, cfg.masks.point_ratio, cfg.masks.min_points, &mut mask_rng)?,
                _ => patch_mask(&mut cloud, &cfg.masks, &mut mask_rng)?,
            };
            state.retain_mask(&keep);
            stats.retain_mask(&keep);
            report.events.push(SizeEvent {
                iteration: it,
                kind,
                before,
                after: cloud.len(),
            });
        }
        if cfg.densify.densify_due(it, budget) {
            let before = cloud.len();
            let outcome = densify_and_prune(&mut cloud, &mut stats, extent, &cfg.densify, &mut densify_rng)?;
            state.remap(&outcome.origin);
            log::debug!(
                "{stage} {it}: cloned {} split {} pruned {} -> {}",
                outcome.cloned,
                outcome.split,
                outcome.pruned,
                cloud.len()
            );
            report.events.push(SizeEvent {
                iteration: it,
                kind: EventKind::Densify,
                before,
                after: cloud.len(),
            });
        }
        if cfg.densify.reset_due(it, budget) {
            reset_opacity(&mut cloud, cfg.densify.opacity_ceiling)?;
            state.reset_opacity_moments();
        }

        if (cfg.eval_every > 0 && it % cfg.eval_every == 0) || it == budget {
            let train = evaluate_views(&cloud, views, bg)?;
            let held = heldout.map(|h| evaluate_views(&cloud, h, bg)).transpose()?;
            let point = EvalPoint {
                iteration: it,
                train_psnr: mean_psnr(&train),
                train_ssim: mean_ssim(&train),
                heldout_psnr: held.as_deref().map(mean_psnr),
                heldout_ssim: held.as_deref().map(mean_ssim),
                points: cloud.len(),
                wall_ms: start.elapsed().as_millis() as u64,
            };
            log::info!(
                "{stage} {it}/{budget}: loss {:.5} train PSNR {:.2} points {}",
                loss.total.as_f64(),
                point.train_psnr,
                point.points
            );
            if let Some(p) = point.heldout_psnr {
                if best.as_ref().is_none_or(|(b, _)| p > *b) {
                    best = Some((p, cloud.clone()));
                    report.best_iteration = Some(it);
                }
            }
            report.evals.push(point);
        }
    }
    report.final_points = cloud.len();
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(StageOutput {
        cloud,
        report,
        best: best.map(|(_, c)| c),
    })
}

/// Coarse stage from random points inside the camera bounding sphere.
pub fn train_coarse<T: Scalar>(views: &ViewSet<T>, heldout: Option<&ViewSet<T>>, cfg: &TrainingConfig) -> Result<StageOutput<T>> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::contract("coarse stage needs at least one view"));
    }
    let cloud = coarse_init(&views.cameras(), cfg)?;
    optimize(Stage::Coarse, cloud, views, heldout, cfg)
}

/// Fine stage initialized from the handed-over points.
pub fn train_fine<T: Scalar>(
    init: &[InitPoint<T>],
    views: &ViewSet<T>,
    heldout: Option<&ViewSet<T>>,
    cfg: &TrainingConfig,
) -> Result<StageOutput<T>> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::contract("fine stage needs initial points"));
    }
    if views.is_empty() {
        return Err(Error::contract("fine stage needs at least one view"));
    }
    let cloud = init_from_points(init, cfg.sh_degree, cfg.init.opacity)?;
    optimize(Stage::Fine, cloud, views, heldout, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub coarse_ms: u64,
    pub augment_ms: u64,
    pub fine_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainingConfig,
    pub reference_views: usize,
    pub pseudo_views: usize,
    pub heldout_views: usize,
    pub coarse: StageReport,
    pub fine: StageReport,
    pub coarse_train: Vec<ViewMetrics>,
    pub coarse_heldout: Vec<ViewMetrics>,
    pub fine_train: Vec<ViewMetrics>,
    pub fine_heldout: Vec<ViewMetrics>,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub coarse: StageOutput<T>,
    pub fine: StageOutput<T>,
    pub pseudo_views: Vec<ViewRecord<T>>,
    pub report: RunReport,
}

/// Coarse stage, augmentation, fine stage. With `out` set, writes
/// `coarse.ply`, `fine.ply`, `best.ply` (when held-out views exist), the
/// pseudo views under `pseudo/` and `report.json`.
pub fn run_pipeline<T: Scalar>(
    train: &ViewSet<T>,
    heldout: &ViewSet<T>,
    cfg: &TrainingConfig,
    out: Option<&Path>,
) -> Result<PipelineOutput<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let held = Some(heldout).filter(|h| !h.is_empty());
    let coarse = train_coarse(train, held, cfg)?;
    let coarse_ms = start.elapsed().as_millis() as u64;

    let aug_start = Instant::now();
    let bg = cfg.background::<T>();
    let init = augment::geometry_augment(&coarse.cloud)?;
    let refs = train.cameras();
    let n_prime = cfg.pseudo_view_factor * train.len();
    let novel = if refs.len() >= 2 {
        augment::sample_novel_cameras(&refs, n_prime, cfg.seed)?
    } else {
        log::warn!("a single reference view cannot seed novel cameras");
        Vec::new()
    };
    let pseudo_views = augment::perceptual_augment(&coarse.cloud, &novel, bg)?;
    let fine_views = augment::build_fine_viewset(train, pseudo_views.clone());
    let augment_ms = aug_start.elapsed().as_millis() as u64;

    let fine_start = Instant::now();
    let fine = if cfg.fine_iters == 0 {
        let cloud = init_from_points(&init, cfg.sh_degree, cfg.init.opacity)?;
        StageOutput {
            report: StageReport {
                stage: Stage::Fine,
                budget: 0,
                initial_points: cloud.len(),
                final_points: cloud.len(),
                evals: Vec::new(),
                events: Vec::new(),
                loss_trace: Vec::new(),
                best_iteration: None,
                wall_ms: 0,
            },
            cloud,
            best: None,
        }
    } else {
        train_fine(&init, &fine_views, held, cfg)?
    };
    let fine_ms = fine_start.elapsed().as_millis() as u64;

    let report = RunReport {
        config: cfg.clone(),
        reference_views: train.len(),
        pseudo_views: pseudo_views.len(),
        heldout_views: heldout.len(),
        coarse_train: evaluate_views(&coarse.cloud, train, bg)?,
        coarse_heldout: evaluate_views(&coarse.cloud, heldout, bg)?,
        fine_train: evaluate_views(&fine.cloud, train, bg)?,
        fine_heldout: evaluate_views(&fine.cloud, heldout, bg)?,
        coarse: coarse.report.clone(),
        fine: fine.report.clone(),
        timings: Timings {
            coarse_ms,
            augment_ms,
            fine_ms,
            total_ms: start.elapsed().as_millis() as u64,
        },
    };
    let output = PipelineOutput {
        coarse,
        fine,
        pseudo_views,
        report,
    };
    if let Some(dir) = out {
        write_artifacts(&output, dir)?;
    }
    Ok(output)
}

fn write_artifacts<T: Scalar>(run: &PipelineOutput<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_ply(&run.coarse.cloud, &dir.join("coarse.ply"))?;
    io::save_ply(&run.fine.cloud, &dir.join("fine.ply"))?;
    if let Some(best) = run.fine.best.as_ref().or(run.coarse.best.as_ref()) {
        io::save_ply(best, &dir.join("best.ply"))?;
    }
    let pseudo = dir.join("pseudo");
    std::fs::create_dir_all(&pseudo).map_err(|e| Error::io(&pseudo, e))?;
    for (i, v) in run.pseudo_views.iter().enumerate() {
        io::save_image(&v.image, &pseudo.join(format!("pseudo_{i:03}.png")))?;
    }
    io::save_report(&run.report, &dir.join("report.json"))
}

#[cfg(test)]
mod tests;

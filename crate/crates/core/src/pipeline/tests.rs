use super::*;
use crate::gaussian::sh_to_rgb;
use crate::io::{make_fixture, FixtureConfig};

fn tiny_fixture() -> crate::io::Fixture {
    make_fixture(&FixtureConfig {
        gaussians: 6,
        width: 16,
        height: 16,
        focal: 18.0,
        ..FixtureConfig::default()
    })
    .unwrap()
}

fn tiny_config() -> TrainingConfig {
    let mut cfg = TrainingConfig {
        coarse_iters: 60,
        fine_iters: 40,
        sh_degree: 1,
        sh_increase_every: 20,
        eval_every: 20,
        ..TrainingConfig::default()
    };
    cfg.init.point_count = 150;
    cfg.init.radius_scale = 0.3;
    cfg.densify.start = 10;
    cfg.densify.every = 10;
    cfg.densify.opacity_reset_every = 20;
    cfg.masks.point_gap = 15;
    cfg.masks.patch_gap = 15;
    cfg.masks.patch_count = 8;
    cfg.masks.point_ratio = 0.1;
    cfg.masks.patch_ratio = 0.25;
    cfg.masks.min_points = 20;
    cfg
}

#[test]
fn defaults_and_validation() {
    let cfg = TrainingConfig::default();
    assert_eq!((cfg.coarse_iters, cfg.fine_iters), (5000, 6000));
    assert_eq!(cfg.init.point_count, 10_000);
    assert_eq!(cfg.background, [1.0; 3]);
    cfg.validate().unwrap();
    for bad in [
        TrainingConfig { coarse_iters: 0, ..TrainingConfig::default() },
        TrainingConfig { sh_degree: 4, ..TrainingConfig::default() },
        TrainingConfig { background: [1.0, 2.0, 0.0], ..TrainingConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter(_))));
    }
    let mut bad = TrainingConfig::default();
    bad.optimizer.lr_scale = 0.0;
    assert!(bad.validate().is_err());
}

#[test]
fn sh_bands_open_on_schedule() {
    let cfg = TrainingConfig { sh_degree: 2, sh_increase_every: 100, ..TrainingConfig::default() };
    let got: Vec<usize> = [0, 99, 100, 250, 10_000].iter().map(|&i| cfg.active_sh_degree(i)).collect();
    assert_eq!(got, vec![0, 0, 1, 2, 2]);
    let all = TrainingConfig { sh_increase_every: 0, ..cfg };
    assert_eq!(all.active_sh_degree(0), 2);
}

#[test]
fn init_inverts_the_color_convention() {
    let pts: Vec<InitPoint<f64>> = (0..5)
        .map(|i| InitPoint {
            position: [i as f64, 0.0, 0.0],
            color: [0.1 * i as f64, 0.9, 0.37],
        })
        .collect();
    let cloud = init_from_points(&pts, 2, 0.1).unwrap();
    assert_eq!(cloud.sh_len(), 9);
    for (g, p) in cloud.gaussians.iter().zip(&pts) {
        let rgb = sh_to_rgb(&g.sh, 2, [0.0, 0.0, 1.0]).unwrap();
        for c in 0..3 {
            assert!((rgb[c] - p.color[c]).abs() < 1e-6);
        }
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert!((g.opacity() - 0.1).abs() < 1e-12);
        assert_eq!(g.log_scale[0], g.log_scale[2]);
    }
    let scales: Vec<f64> = cloud.gaussians.iter().map(|g| g.scale()[0]).collect();
    for (s, want) in scales.iter().zip([3.0, 2.0, 2.0, 2.0, 3.0]) {
        assert!((s - want).abs() < 1e-12);
    }
    assert!(matches!(init_from_points::<f64>(&[], 0, 0.1), Err(Error::EmptyInit)));
}

#[test]
fn coincident_points_get_a_floor_scale() {
    let s = nearest_neighbor_scales(&[[1.0f64; 3]; 6]);
    assert!(s.iter().all(|&x| x == MIN_INIT_SCALE));
}

#[test]
fn coarse_init_fills_the_camera_sphere() {
    let fx = tiny_fixture();
    let cams = fx.dataset.train.cameras();
    let cfg = tiny_config();
    let a: GaussianCloud<f32> = coarse_init(&cams, &cfg).unwrap();
    assert_eq!(a.len(), 150);
    assert_eq!(a, coarse_init(&cams, &cfg).unwrap());
    let centers: Vec<Vec3<f64>> = cams.iter().map(|c| c.center().map(f64::from)).collect();
    let (c, r) = bounding_sphere(&centers);
    for g in &a.gaussians {
        let d = math::norm(math::sub(g.center.map(f64::from), c));
        assert!(d <= r * cfg.init.radius_scale + 1e-4);
        let rgb = sh_to_rgb(&g.sh[..1], 0, [0.0, 0.0, 1.0]).unwrap();
        assert!(rgb.iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    let mut focus = tiny_config();
    focus.init.center = InitCenter::Focus;
    let b: GaussianCloud<f32> = coarse_init(&cams, &focus).unwrap();
    let f = augment::scene_centroid(&cams).unwrap();
    assert!(math::norm(f) < 1e-3);
    for g in &b.gaussians {
        assert!(math::norm(math::sub(g.center.map(f64::from), f)) <= r * focus.init.radius_scale + 1e-4);
    }
}

#[test]
fn extent_of_a_ring() {
    let fx = tiny_fixture();
    let e = scene_extent(&fx.dataset.train.cameras());
    let r = 4.0 * 25f64.to_radians().cos();
    assert!((e - r).abs() < 1e-4, "{e}");
}

#[test]
fn epochs_visit_every_view_once() {
    let mut c = ViewCycler::new(5, stage_rng(3, 0));
    for _ in 0..4 {
        let mut epoch: Vec<usize> = (0..5).map(|_| c.next()).collect();
        epoch.sort_unstable();
        assert_eq!(epoch, vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn static_run_keeps_point_count() {
    let fx = tiny_fixture();
    let mut cfg = tiny_config();
    cfg.masks.point_ratio = 0.0;
    cfg.densify.enabled = false;
    let out = train_coarse(&fx.dataset.train, None, &cfg).unwrap();
    assert!(out.report.events.is_empty());
    assert_eq!(out.cloud.len(), 150);
    assert!(out.report.evals.iter().all(|e| e.points == 150));
    assert!(out.best.is_none());
}

#[test]
fn events_replay_to_the_point_count() {
    let fx = tiny_fixture();
    let cfg = tiny_config();
    let out = train_coarse(&fx.dataset.train, Some(&fx.dataset.heldout), &cfg).unwrap();
    let r = &out.report;
    assert!(r.events.iter().any(|e| e.kind == EventKind::PointMask && e.after < e.before));
    assert!(r.events.iter().any(|e| e.kind == EventKind::Densify));
    assert_eq!(r.replayed_points(), out.cloud.len());
    assert_eq!(r.final_points, out.cloud.len());
    for w in r.events.windows(2) {
        assert_eq!(w[0].after, w[1].before);
    }
    let iters: Vec<usize> = r.evals.iter().map(|e| e.iteration).collect();
    assert_eq!(iters, vec![20, 40, 60]);
    assert_eq!(r.loss_trace.len(), 60);
    assert!(r.loss_trace.iter().all(|l| l.is_finite()));
    assert!(out.best.is_some() && r.best_iteration.is_some());
}

#[test]
fn training_is_deterministic() {
    let fx = tiny_fixture();
    let cfg = tiny_config();
    let a = train_coarse(&fx.dataset.train, None, &cfg).unwrap();
    let b = train_coarse(&fx.dataset.train, None, &cfg).unwrap();
    assert_eq!(a.cloud, b.cloud);
    assert_eq!(a.report.loss_trace, b.report.loss_trace);
    let c = train_coarse(&fx.dataset.train, None, &TrainingConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.cloud, c.cloud);
}

#[test]
fn empty_inputs_are_rejected() {
    let cfg = tiny_config();
    let empty = ViewSet::<f32>::default();
    assert!(matches!(train_coarse(&empty, None, &cfg), Err(Error::Contract(_))));
    let fx = tiny_fixture();
    assert!(matches!(train_fine::<f32>(&[], &fx.dataset.train, None, &cfg), Err(Error::Contract(_))));
}

#[test]
fn zero_fine_budget_returns_the_initialized_points() {
    let fx = tiny_fixture();
    let cfg = TrainingConfig { fine_iters: 0, ..tiny_config() };
    let run = run_pipeline(&fx.dataset.train, &fx.dataset.heldout, &cfg, None).unwrap();
    let init = augment::geometry_augment(&run.coarse.cloud).unwrap();
    let expect = init_from_points(&init, cfg.sh_degree, cfg.init.opacity).unwrap();
    assert_eq!(run.fine.cloud, expect);
    assert_eq!(run.report.pseudo_views, 12);
    assert_eq!(run.pseudo_views.len(), 12);
}

#[test]
fn pipeline_writes_its_artifacts() {
    let fx = tiny_fixture();
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&fx.dataset.train, &fx.dataset.heldout, &cfg, Some(dir.path())).unwrap();
    for f in ["coarse.ply", "fine.ply", "best.ply", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let pngs = std::fs::read_dir(dir.path().join("pseudo")).unwrap().count();
    assert_eq!(pngs, 12);
    let fine: GaussianCloud<f32> = io::load_ply(&dir.path().join("fine.ply")).unwrap();
    assert_eq!(fine, run.fine.cloud);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.config, cfg);
    assert_eq!(report.fine_heldout.len(), 4);
    assert_eq!((report.coarse.budget, report.fine.budget), (60, 40));
    assert_eq!(report.fine.replayed_points(), run.fine.cloud.len());
    assert!(report.fine.events.iter().any(|e| e.kind == EventKind::PatchMask));
}

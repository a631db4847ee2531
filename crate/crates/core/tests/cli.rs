use std::path::Path;
use std::process::{Command, Output};

use auggs::augment::ViewSet;
use auggs::io::{self, CameraEntry};
use auggs::raster::render;

fn auggs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auggs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        "coarse_iters = 40\nfine_iters = 30\nsh_degree = 0\neval_every = 20\n\
         [init]\npoint_count = 300\nradius_scale = 0.3\n\
         [densify]\nstart = 10\nevery = 10\n",
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn fixture_train_evaluate_render() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("run");
    let (scene_s, out_s) = (scene.to_str().unwrap(), out.to_str().unwrap());

    let o = auggs(&["make-fixture", "--out", scene_s, "--size", "24"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(scene.join("scene.json").is_file() && scene.join("gt.ply").is_file());

    let cfg = small_config(tmp.path());
    let o = auggs(&["train", "--scene", scene_s, "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["coarse.ply", "fine.ply", "best.ply", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let fine = out.join("fine.ply");
    let o = auggs(&["evaluate", "--ply", fine.to_str().unwrap(), "--scene", scene_s]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("heldout_000\tpsnr "));
    assert!(lines[4].starts_with("mean\tpsnr "));

    let gt = scene.join("gt.ply");
    let o = auggs(&["evaluate", "--ply", gt.to_str().unwrap(), "--scene", scene_s, "--split", "train"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let mean: f64 = text.lines().last().unwrap().split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(mean > 40.0, "{text}");

    let ds = io::load_dataset::<f32>(&scene).unwrap();
    let cam = &ds.train.records[0].camera;
    let cam_path = tmp.path().join("cam.json");
    io::save_json(&CameraEntry::from_camera(cam), &cam_path).unwrap();
    let png = tmp.path().join("view.png");
    let o = auggs(&[
        "render", "--ply", fine.to_str().unwrap(), "--camera", cam_path.to_str().unwrap(), "--out", png.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cloud = io::load_ply::<f32>(&fine).unwrap();
    let direct = render(&cloud, cam, [1.0; 3]).unwrap().color;
    let direct_png = tmp.path().join("direct.png");
    io::save_image(&direct, &direct_png).unwrap();
    assert_eq!(std::fs::read(&png).unwrap(), std::fs::read(&direct_png).unwrap());
    let _: ViewSet<f32> = ds.heldout;
}

#[test]
fn user_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let m = missing.to_str().unwrap();
    assert_eq!(auggs(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(auggs(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(auggs(&[]).status.code(), Some(1));
    assert_eq!(auggs(&["evaluate", "--ply", m, "--scene", m]).status.code(), Some(1));
    assert_eq!(auggs(&["train", "--scene", m, "--out", m]).status.code(), Some(1));
    assert_eq!(auggs(&["render", "--ply", m, "--camera", m, "--out", m, "--background", "2,0,0"]).status.code(), Some(1));
    assert_eq!(auggs(&["--help"]).status.code(), Some(0));

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_auggs"))
        .args(["make-fixture", "--out", tmp.path().to_str().unwrap()])
        .env("AUGGS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn internal_errors_exit_with_two() {
    assert_eq!(auggs::cli::exit_code(&auggs::Error::Contract("x".into())), 2);
    assert_eq!(auggs::cli::exit_code(&auggs::Error::Render { index: 0 }), 2);
    assert_eq!(auggs::cli::exit_code(&auggs::Error::Format("x".into())), 1);
}

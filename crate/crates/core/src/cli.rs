//! The `auggs` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::gaussian::GaussianCloud;
use crate::io::{self, CameraEntry, FixtureConfig};
use crate::pipeline::{self, TrainingConfig};
use crate::raster::render;

pub const THREADS_ENV: &str = "AUGGS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "auggs", version, about = "Coarse-to-fine Gaussian splatting from sparse views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Heldout,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the coarse and fine models on a scene directory.
    Train {
        #[arg(long)]
        scene: PathBuf,
        /// JSON or TOML training config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        coarse_iters: Option<usize>,
        #[arg(long)]
        fine_iters: Option<usize>,
    },
    /// Render a saved cloud from a camera description.
    Render {
        #[arg(long)]
        ply: PathBuf,
        /// JSON camera: width, height, fx, fy, cx, cy, rotation (9, row-major), translation.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_rgb, default_value = "1,1,1")]
        background: [f64; 3],
    },
    /// Print PSNR and SSIM of a saved cloud on a scene's views.
    Evaluate {
        #[arg(long)]
        ply: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Views to score; held-out views by default, training views if there are none.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long, value_parser = parse_rgb, default_value = "1,1,1")]
        background: [f64; 3],
    },
    /// Write the synthetic ground-truth scene.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        train_views: Option<usize>,
        #[arg(long)]
        heldout_views: Option<usize>,
        /// Image width and height in pixels.
        #[arg(long)]
        size: Option<usize>,
    },
}

fn parse_rgb(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([r, g, b]),
        _ => Err(format!("expected three values in [0, 1], got `{s}`")),
    }
}

/// 1 for problems with the inputs, 2 for failures inside the engine.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Load { .. } | Error::Format(_) | Error::Io { .. } => 1,
        _ => 2,
    }
}

/// Worker count from `AUGGS_THREADS`; unset or 0 means one per core.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV}={v} is not a thread count"))),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = threads_from_env().and_then(|n| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| execute(cli.command))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            scene,
            config,
            out,
            seed,
            coarse_iters,
            fine_iters,
        } => {
            let mut cfg = match config {
                Some(p) => io::load_config(&p)?,
                None => TrainingConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = coarse_iters {
                cfg.coarse_iters = n;
            }
            if let Some(n) = fine_iters {
                cfg.fine_iters = n;
            }
            train(&scene, &cfg, &out)
        }
        Command::Render {
            ply,
            camera,
            out,
            background,
        } => {
            let cloud: GaussianCloud<f32> = io::load_ply(&ply)?;
            let text = std::fs::read_to_string(&camera).map_err(|e| Error::io(&camera, e))?;
            let entry: CameraEntry =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", camera.display())))?;
            let cam = entry.to_camera::<f32>()?;
            let img = render(&cloud, &cam, background.map(|c| c as f32))?.color;
            io::save_image(&img, &out)
        }
        Command::Evaluate {
            ply,
            scene,
            split,
            background,
        } => evaluate(&ply, &scene, split, background),
        Command::MakeFixture {
            out,
            seed,
            train_views,
            heldout_views,
            size,
        } => {
            let d = FixtureConfig::default();
            let cfg = FixtureConfig {
                seed: seed.unwrap_or(d.seed),
                train_views: train_views.unwrap_or(d.train_views),
                heldout_views: heldout_views.unwrap_or(d.heldout_views),
                width: size.unwrap_or(d.width),
                height: size.unwrap_or(d.height),
                focal: d.focal * size.map_or(1.0, |s| s as f64 / d.width as f64),
                ..d
            };
            let fixture = io::make_fixture(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            io::save_dataset(&out, &fixture.dataset)?;
            io::save_ply(&fixture.gt, &out.join("gt.ply"))?;
            io::save_json(&cfg, &out.join("fixture.json"))?;
            println!(
                "wrote {} training and {} held-out views to {}",
                fixture.dataset.train.len(),
                fixture.dataset.heldout.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn train(scene: &Path, cfg: &TrainingConfig, out: &Path) -> Result<()> {
    let ds = io::load_dataset::<f32>(scene)?;
    if ds.train.is_empty() {
        return Err(Error::InvalidParameter(format!("{} has no training views", scene.display())));
    }
    let run = pipeline::run_pipeline(&ds.train, &ds.heldout, cfg, Some(out))?;
    let r = &run.report;
    println!("coarse: {} points, train PSNR {:.3}", run.coarse.cloud.len(), pipeline::mean_psnr(&r.coarse_train));
    println!("fine: {} points, train PSNR {:.3}", run.fine.cloud.len(), pipeline::mean_psnr(&r.fine_train));
    if !r.fine_heldout.is_empty() {
        println!(
            "held-out PSNR coarse {:.3} fine {:.3}",
            pipeline::mean_psnr(&r.coarse_heldout),
            pipeline::mean_psnr(&r.fine_heldout)
        );
    }
    println!("artifacts in {} ({} ms)", out.display(), r.timings.total_ms);
    Ok(())
}

fn evaluate(ply: &Path, scene: &Path, split: Option<SplitArg>, background: [f64; 3]) -> Result<()> {
    let cloud: GaussianCloud<f32> = io::load_ply(ply)?;
    let ds = io::load_dataset::<f32>(scene)?;
    let use_train = match split {
        Some(SplitArg::Train) => true,
        Some(SplitArg::Heldout) => false,
        None => ds.heldout.is_empty(),
    };
    let (views, names) = if use_train {
        (&ds.train, &ds.train_names)
    } else {
        (&ds.heldout, &ds.heldout_names)
    };
    if views.is_empty() {
        return Err(Error::InvalidParameter("no views to evaluate".into()));
    }
    let metrics = pipeline::evaluate_views(&cloud, views, background.map(|c| c as f32))?;
    for (name, m) in names.iter().zip(&metrics) {
        println!("{name}\tpsnr {:.4}\tssim {:.4}", m.psnr, m.ssim);
    }
    println!(
        "mean\tpsnr {:.4}\tssim {:.4}",
        pipeline::mean_psnr(&metrics),
        pipeline::mean_ssim(&metrics)
    );
    Ok(())
}

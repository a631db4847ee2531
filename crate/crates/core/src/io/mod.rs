//! Files in and out: datasets, point clouds, images, depth maps, reports and
//! the synthetic fixture.

mod dataset;
mod depth;
mod fixture;
mod ply;
mod png;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{RunReport, TrainingConfig};

pub use dataset::{load_dataset, save_dataset, CameraEntry, Dataset, Manifest, Split, ViewEntry, MANIFEST};
pub use depth::{decode_depth, encode_depth, load_depth, save_depth, DEPTH_HEADER, DEPTH_MAGIC};
pub use fixture::{make_fixture, Fixture, FixtureConfig};
pub use ply::{decode_ply, encode_ply, load_ply, save_ply};
pub use png::{load_image, load_mask, quantize, save_image, save_mask};

/// Writes through a temporary file in the target directory and renames it into
/// place. The temporary file is removed if `fill` fails.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".auggs-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| w.write_all(bytes).map_err(|e| Error::io(path, e)))
}

pub fn save_json<V: Serialize>(value: &V, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

pub fn save_report(report: &RunReport, path: &Path) -> Result<()> {
    save_json(report, path)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads a training config from JSON or TOML, chosen by extension. Missing
/// fields take their defaults.
pub fn load_config(path: &Path) -> Result<TrainingConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: TrainingConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        _ => serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

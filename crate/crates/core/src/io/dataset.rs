use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{ViewOrigin, ViewRecord, ViewSet};
use crate::error::{Error, Result};
use crate::gaussian::Camera;
use crate::math;
use crate::scalar::Scalar;

use super::{depth, png, save_json};

pub const MANIFEST: &str = "scene.json";
const ROTATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Heldout,
}

/// Pinhole camera, world-to-camera, `+z` forward, rotation row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl CameraEntry {
    pub fn from_camera<T: Scalar>(c: &Camera<T>) -> Self {
        let r = c.rotation;
        Self {
            width: c.width,
            height: c.height,
            fx: c.fx.as_f64(),
            fy: c.fy.as_f64(),
            cx: c.cx.as_f64(),
            cy: c.cy.as_f64(),
            rotation: std::array::from_fn(|i| r[i / 3][i % 3].as_f64()),
            translation: c.translation.map(|x| x.as_f64()),
        }
    }

    /// Checks the rotation against a loose tolerance suited to hand-written or
    /// exported poses.
    pub fn to_camera<T: Scalar>(&self) -> Result<Camera<T>> {
        let r64: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| self.rotation[3 * i + j]));
        let err = math::orthonormality_error(&r64);
        if !(err <= ROTATION_TOL) {
            return Err(Error::InvalidParameter(format!("rotation is not orthonormal (error {err:.2e})")));
        }
        let cam = Camera {
            width: self.width,
            height: self.height,
            fx: T::lit(self.fx),
            fy: T::lit(self.fy),
            cx: T::lit(self.cx),
            cy: T::lit(self.cy),
            rotation: r64.map(|row| row.map(T::lit)),
            translation: self.translation.map(T::lit),
        };
        cam.validate(T::lit(ROTATION_TOL))?;
        Ok(cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub name: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    pub split: Split,
    pub camera: CameraEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: Vec<ViewEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    pub train: ViewSet<T>,
    pub heldout: ViewSet<T>,
    pub train_names: Vec<String>,
    pub heldout_names: Vec<String>,
}

fn load_entry<T: Scalar>(root: &Path, e: &ViewEntry) -> Result<ViewRecord<T>> {
    let camera = e.camera.to_camera::<T>()?;
    let image = png::load_image::<T>(&root.join(&e.image))?;
    let object_mask = match &e.mask {
        Some(p) => {
            let (w, h, m) = png::load_mask(&root.join(p))?;
            if (w, h) != (image.width, image.height) {
                return Err(Error::InvalidParameter(format!("mask is {w}x{h}, image is {}x{}", image.width, image.height)));
            }
            Some(m)
        }
        None => None,
    };
    let depth = e.depth.as_ref().map(|p| depth::load_depth::<T>(&root.join(p))).transpose()?;
    let record = ViewRecord {
        image,
        camera,
        object_mask,
        depth,
        origin: ViewOrigin::Reference,
    };
    record.validate()?;
    Ok(record)
}

/// Reads `scene.json` under `root` and every file it names.
pub fn load_dataset<T: Scalar>(root: &Path) -> Result<Dataset<T>> {
    let path = root.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut ds = Dataset::default();
    for e in &manifest.views {
        let record = load_entry(root, e).map_err(|err| Error::Load {
            entry: e.name.clone(),
            reason: err.to_string(),
        })?;
        match e.split {
            Split::Train => {
                ds.train.records.push(record);
                ds.train_names.push(e.name.clone());
            }
            Split::Heldout => {
                ds.heldout.records.push(record);
                ds.heldout_names.push(e.name.clone());
            }
        }
    }
    Ok(ds)
}

/// Writes images, masks and depth maps under `root` with a manifest listing
/// them. Views without names are called `<split>_<index>`.
pub fn save_dataset<T: Scalar>(root: &Path, ds: &Dataset<T>) -> Result<Manifest> {
    for sub in ["images", "masks", "depth"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut views = Vec::new();
    let splits = [
        (Split::Train, &ds.train, &ds.train_names, "train"),
        (Split::Heldout, &ds.heldout, &ds.heldout_names, "heldout"),
    ];
    for (split, set, names, tag) in splits {
        for (i, r) in set.records.iter().enumerate() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("{tag}_{i:03}"));
            let image = PathBuf::from("images").join(format!("{name}.png"));
            png::save_image(&r.image, &root.join(&image))?;
            let mask = match &r.object_mask {
                Some(m) => {
                    let p = PathBuf::from("masks").join(format!("{name}.png"));
                    png::save_mask(m, r.image.width, r.image.height, &root.join(&p))?;
                    Some(p)
                }
                None => None,
            };
            let depth = match &r.depth {
                Some(d) => {
                    let p = PathBuf::from("depth").join(format!("{name}.dpth"));
                    depth::save_depth(d, &root.join(&p))?;
                    Some(p)
                }
                None => None,
            };
            views.push(ViewEntry {
                name,
                image,
                mask,
                depth,
                split,
                camera: CameraEntry::from_camera(&r.camera),
            });
        }
    }
    let manifest = Manifest { views };
    save_json(&manifest, &root.join(MANIFEST))?;
    Ok(manifest)
}

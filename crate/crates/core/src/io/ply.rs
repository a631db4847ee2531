use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, ElementDef, Encoding, Ply, Property, PropertyAccess, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;

use crate::error::{Error, Result};
use crate::gaussian::{sh_coeffs_for_degree, sh_degree_from_coeffs, Gaussian, GaussianCloud};
use crate::scalar::Scalar;

use super::{read_bytes, write_bytes};

const VERTEX: &str = "vertex";
const FIXED: usize = 14;

/// Position of a property in a row: the fixed block first, `f_rest_*` after.
fn slot(name: &str) -> Option<usize> {
    let fixed = match name {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        "f_dc_0" => 3,
        "f_dc_1" => 4,
        "f_dc_2" => 5,
        "opacity" => 6,
        "scale_0" => 7,
        "scale_1" => 8,
        "scale_2" => 9,
        "rot_0" => 10,
        "rot_1" => 11,
        "rot_2" => 12,
        "rot_3" => 13,
        _ => return name.strip_prefix("f_rest_")?.parse::<usize>().ok().map(|i| FIXED + i),
    };
    Some(fixed)
}

fn property_names(n_rest: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"].map(String::from).to_vec();
    names.extend((0..n_rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

#[derive(Debug, Default)]
struct Row(Vec<f32>);

impl PropertyAccess for Row {
    fn new() -> Self {
        Self::default()
    }

    fn set_property(&mut self, name: String, property: Property) {
        if let (Some(i), Property::Float(v)) = (slot(&name), property) {
            if self.0.len() <= i {
                self.0.resize(i + 1, 0.0);
            }
            self.0[i] = v;
        }
    }

    fn get_float(&self, name: &String) -> Option<f32> {
        slot(name).and_then(|i| self.0.get(i).copied())
    }
}

/// Binary little-endian PLY in the common splatting layout.
pub fn encode_ply<T: Scalar>(cloud: &GaussianCloud<T>) -> Result<Vec<u8>> {
    let k = cloud.sh_len();
    let n_rest = 3 * (k - 1);
    let mut ply = Ply::<Row>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    let mut element = ElementDef::new(VERTEX.into());
    for name in property_names(n_rest) {
        element
            .properties
            .add(PropertyDef::new(name, PropertyType::Scalar(ScalarType::Float)));
    }
    ply.header.elements.add(element);
    let f = |v: T| v.as_f64() as f32;
    let rows = cloud
        .gaussians
        .iter()
        .map(|g| {
            let mut r = vec![0.0f32; FIXED + n_rest];
            for a in 0..3 {
                r[a] = f(g.center[a]);
                r[3 + a] = f(g.sh[0][a]);
                r[7 + a] = f(g.log_scale[a]);
            }
            r[6] = f(g.opacity_logit);
            for a in 0..4 {
                r[10 + a] = f(g.rotation[a]);
            }
            // Channel-major: all red coefficients, then green, then blue.
            for c in 0..3 {
                for j in 1..k {
                    r[FIXED + c * (k - 1) + j - 1] = f(g.sh[j][c]);
                }
            }
            Row(r)
        })
        .collect();
    ply.payload.insert(VERTEX.into(), rows);
    let mut out = Vec::new();
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out)
}

pub fn decode_ply<T: Scalar>(bytes: &[u8]) -> Result<GaussianCloud<T>> {
    let ply = Parser::<Row>::new()
        .read_ply(&mut &bytes[..])
        .map_err(|e| Error::Format(format!("malformed PLY: {e}")))?;
    let element = ply
        .header
        .elements
        .get(VERTEX)
        .ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let mut n_rest = 0;
    for (name, def) in &element.properties {
        if let Some(i) = slot(name) {
            if def.data_type != PropertyType::Scalar(ScalarType::Float) {
                return Err(Error::Format(format!("property {name} is not a float")));
            }
            if i >= FIXED {
                n_rest = n_rest.max(i + 1 - FIXED);
            }
        }
    }
    let k = if n_rest % 3 == 0 { sh_degree_from_coeffs(n_rest / 3 + 1) } else { None }
        .ok_or_else(|| Error::Format(format!("{n_rest} f_rest properties do not form an SH degree")))?;
    let expected = property_names(n_rest);
    if let Some(missing) = expected.iter().find(|n| !element.properties.contains_key(*n)) {
        return Err(Error::Format(format!("missing property {missing}")));
    }
    let coeffs = sh_coeffs_for_degree(k);
    let rows = ply.payload.get(VERTEX).map(Vec::as_slice).unwrap_or(&[]);
    let l = |v: f32| T::lit(f64::from(v));
    let gaussians = rows
        .iter()
        .map(|Row(r)| {
            let mut sh = vec![[T::zero(); 3]; coeffs];
            sh[0] = [l(r[3]), l(r[4]), l(r[5])];
            for c in 0..3 {
                for j in 1..coeffs {
                    sh[j][c] = l(r[FIXED + c * (coeffs - 1) + j - 1]);
                }
            }
            Gaussian::new(
                [l(r[0]), l(r[1]), l(r[2])],
                [l(r[10]), l(r[11]), l(r[12]), l(r[13])],
                [l(r[7]), l(r[8]), l(r[9])],
                l(r[6]),
                sh,
            )
        })
        .collect();
    GaussianCloud::from_gaussians(k, gaussians)
}

pub fn save_ply<T: Scalar>(cloud: &GaussianCloud<T>, path: &Path) -> Result<()> {
    write_bytes(path, &encode_ply(cloud)?)
}

pub fn load_ply<T: Scalar>(path: &Path) -> Result<GaussianCloud<T>> {
    decode_ply(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::DepthMap;
use crate::scalar::Scalar;

use super::{read_bytes, write_bytes};

pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";
pub const DEPTH_HEADER: usize = 16;

/// `DPTH`, u32 width, u32 height, u32 reserved, then little-endian f32 values
/// row by row. Invalid pixels are stored as NaN.
pub fn encode_depth<T: Scalar>(d: &DepthMap<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER + 4 * d.values.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(d.width as u32).to_le_bytes());
    out.extend_from_slice(&(d.height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for (&v, &ok) in d.values.iter().zip(&d.valid) {
        let x = if ok { v.as_f64() as f32 } else { f32::NAN };
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_depth<T: Scalar>(bytes: &[u8]) -> Result<DepthMap<T>> {
    if bytes.len() < DEPTH_HEADER || &bytes[..4] != DEPTH_MAGIC {
        return Err(Error::Format("missing DPTH header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let body = &bytes[DEPTH_HEADER..];
    if body.len() != 4 * w * h {
        return Err(Error::Format(format!("depth body of {} bytes for {w}x{h}", body.len())));
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let valid = values.iter().map(|v| v.is_finite()).collect();
    let values = values
        .into_iter()
        .map(|v| if v.is_finite() { T::lit(f64::from(v)) } else { T::zero() })
        .collect();
    DepthMap::new(w, h, values, valid)
}

pub fn save_depth<T: Scalar>(d: &DepthMap<T>, path: &Path) -> Result<()> {
    write_bytes(path, &encode_depth(d))
}

pub fn load_depth<T: Scalar>(path: &Path) -> Result<DepthMap<T>> {
    decode_depth(&read_bytes(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip() {
        let d = DepthMap::new(3, 2, vec![1.5f32, 0.0, -2.0, 7.25, 3.0, 0.0], vec![true, false, true, true, true, false]).unwrap();
        let bytes = encode_depth(&d);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(&bytes[..4], b"DPTH");
        assert_eq!(decode_depth::<f32>(&bytes).unwrap(), d);
    }

    #[test]
    fn malformed_depth_is_rejected() {
        assert!(decode_depth::<f32>(b"DPT").is_err());
        assert!(decode_depth::<f32>(b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_depth::<f32>(b"DPTH\x02\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
    }
}

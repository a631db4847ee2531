use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

use super::write_atomic;

/// `[0, 1]` to a byte, rounding half up; out-of-range values are clamped.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let x = v.as_f64();
    if x.is_nan() {
        return 0;
    }
    (x.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode(path: &Path, write: impl FnOnce(&mut std::io::Cursor<Vec<u8>>) -> image::ImageResult<()>) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    write(&mut buf).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    write_atomic(path, |w| w.write_all(buf.get_ref()).map_err(|e| Error::io(path, e)))
}

pub fn save_image<T: Scalar>(img: &Image<T>, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let rgb = RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::contract("image buffer does not match its size"))?;
    encode(path, |c| rgb.write_to(c, ImageFormat::Png))
}

/// Object pixels are written as 255, background as 0.
pub fn save_mask(mask: &[bool], width: usize, height: usize, path: &Path) -> Result<()> {
    let bytes = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let gray = GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::contract("mask buffer does not match its size"))?;
    encode(path, |c| gray.write_to(c, ImageFormat::Png))
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn load_image<T: Scalar>(path: &Path) -> Result<Image<T>> {
    let rgb = open(path)?.into_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| T::lit(f64::from(b) / 255.0)).collect();
    Image::from_vec(w as usize, h as usize, data)
}

/// Single-channel mask; values above 127 mark the object.
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let gray = open(path)?.into_luma8();
    let (w, h) = gray.dimensions();
    Ok((w as usize, h as usize, gray.into_raw().into_iter().map(|b| b > 127).collect()))
}

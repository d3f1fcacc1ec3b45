//! Image file I/O: binary PGM (P5, maxval 255) and 8-bit grayscale PNG.
//!
//! Intensities map `v / 255` on load and `round(v * 255)` on save, so a
//! load/save round trip of an 8-bit file is exact.

use std::fs;
use std::path::Path;

use crate::error::{PixinfoError, Result};
use crate::fsio::{png_gray_bytes, write_atomic};
use crate::imaging::GrayImage;

/// Encode as binary PGM bytes.
pub fn to_pgm_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &to_pgm_bytes(img))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    from_pgm_bytes(&bytes).map_err(|e| match e {
        PixinfoError::Data(msg) => PixinfoError::Data(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}

pub fn from_pgm_bytes(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;

    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
        skip_ws(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(PixinfoError::Data("malformed PGM header".into()));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PixinfoError::Data("malformed PGM header".into()))
    }

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PixinfoError::Data("not a binary PGM (P5) file".into()));
    }
    pos = 2;
    let width = read_token(bytes, &mut pos)?;
    let height = read_token(bytes, &mut pos)?;
    let maxval = read_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(PixinfoError::Data(format!(
            "unsupported PGM maxval {} (expected 255)",
            maxval
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let expected = width * height;
    if bytes.len() < pos + expected {
        return Err(PixinfoError::Data("PGM raster truncated".into()));
    }
    let data = bytes[pos..pos + expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    GrayImage::from_data(width, height, data)
}

pub fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let pixels: Vec<u8> = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    write_atomic(path, &png_gray_bytes(img.width(), img.height(), pixels)?)
}

pub fn read_png(path: &Path) -> Result<GrayImage> {
    let dynimg = image::open(path)
        .map_err(|e| PixinfoError::Data(format!("png read {}: {}", path.display(), e)))?;
    let gray = dynimg.into_luma8();
    let (width, height) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    GrayImage::from_data(width as usize, height as usize, data)
}

/// Load by extension: `.pgm` or `.png`.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        Some("png") => read_png(path),
        other => Err(PixinfoError::Data(format!(
            "unsupported image extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}

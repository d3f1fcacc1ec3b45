//! Atomic file writes: artifacts land under a temp name in the target
//! directory and are renamed into place, so readers never see a partial
//! file.

use std::fs;
use std::path::Path;

use crate::error::{PixinfoError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| PixinfoError::Data(format!("bad artifact path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Encode an 8-bit grayscale PNG in memory.
pub fn png_gray_bytes(width: usize, height: usize, pixels: Vec<u8>) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let mut bytes = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut bytes);
    encoder
        .write_image(
            &pixels,
            width as u32,
            height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| PixinfoError::Data(format!("png encode: {}", e)))?;
    Ok(bytes)
}

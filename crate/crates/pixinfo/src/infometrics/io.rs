//! Serialization of entropy and weight maps.
//!
//! Rasters are stored as a single compact JSON header line followed by a
//! little-endian 32-bit float blob in row-major order; heatmap PNGs are a
//! convenience view for eyeballing maps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PixinfoError, Result};
use crate::fsio::{png_gray_bytes, write_atomic};
use crate::infometrics::{EntropyMap, WeightMap};

/// Header line for a serialized scalar raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub kind: String,
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub bins: usize,
    pub log_base: f64,
}

/// Encode header + f32 blob.
pub fn raster_bytes(header: &RasterHeader, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != header.width * header.height {
        return Err(PixinfoError::Shape {
            context: "raster length",
            left: format!("{}x{}", header.width, header.height),
            right: values.len().to_string(),
        });
    }
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn write_raster(path: &Path, header: &RasterHeader, values: &[f64]) -> Result<()> {
    write_atomic(path, &raster_bytes(header, values)?)
}

pub fn read_raster(path: &Path) -> Result<(RasterHeader, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| PixinfoError::Data(format!("{}: missing raster header", path.display())))?;
    let header: RasterHeader = serde_json::from_slice(&bytes[..newline])?;
    let blob = &bytes[newline + 1..];
    let expected = header.width * header.height * 4;
    if blob.len() != expected {
        return Err(PixinfoError::Data(format!(
            "{}: raster blob is {} bytes, expected {}",
            path.display(),
            blob.len(),
            expected
        )));
    }
    let values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, values))
}

pub fn write_entropy_map(path: &Path, em: &EntropyMap) -> Result<()> {
    let header = RasterHeader {
        kind: "entropy".into(),
        width: em.width(),
        height: em.height(),
        k: em.patch_side(),
        bins: em.bins(),
        log_base: em.log_base(),
    };
    write_raster(path, &header, em.values())
}

pub fn read_entropy_map(path: &Path) -> Result<EntropyMap> {
    let (header, values) = read_raster(path)?;
    if header.kind != "entropy" {
        return Err(PixinfoError::Data(format!(
            "{}: raster kind {:?} is not an entropy map",
            path.display(),
            header.kind
        )));
    }
    EntropyMap::from_parts(
        header.width,
        header.height,
        values,
        header.k,
        header.bins,
        header.log_base,
    )
}

pub fn write_weight_map(
    path: &Path,
    wm: &WeightMap,
    k: usize,
    bins: usize,
    log_base: f64,
) -> Result<()> {
    let header = RasterHeader {
        kind: "weight".into(),
        width: wm.width(),
        height: wm.height(),
        k,
        bins,
        log_base,
    };
    write_raster(path, &header, wm.weights())
}

pub fn read_weight_map(path: &Path) -> Result<WeightMap> {
    let (header, values) = read_raster(path)?;
    if header.kind != "weight" {
        return Err(PixinfoError::Data(format!(
            "{}: raster kind {:?} is not a weight map",
            path.display(),
            header.kind
        )));
    }
    WeightMap::from_weights(header.width, header.height, values)
}

/// Render any scalar raster to an 8-bit PNG, scaling valid values to the
/// full gray range. Negative (invalid) entries render black.
pub fn write_heatmap_png(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(PixinfoError::Shape {
            context: "heatmap raster length",
            left: format!("{}x{}", width, height),
            right: values.len().to_string(),
        });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter().filter(|&&v| v >= 0.0) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                0
            } else {
                (((v - lo) / span) * 255.0).round() as u8
            }
        })
        .collect();
    write_atomic(path, &png_gray_bytes(width, height, pixels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;
    use crate::infometrics::{entropy_map, exp_weight_map};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn entropy_map_round_trip() {
        let mut rng = rng_from_seed(6);
        let data: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = GrayImage::from_data(20, 20, data).unwrap();
        let em = entropy_map(&img, 10, 64).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("em.f32");
        write_entropy_map(&path, &em).unwrap();
        let back = read_entropy_map(&path).unwrap();
        assert_eq!(back.patch_side(), 10);
        assert_eq!(back.bins(), 64);
        // f32 round trip: equal within single precision.
        for (a, b) in em.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_map_round_trip_and_kind_check() {
        let mut rng = rng_from_seed(8);
        let data: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = GrayImage::from_data(20, 20, data).unwrap();
        let em = entropy_map(&img, 10, 64).unwrap();
        let wm = exp_weight_map(&em, 0.3).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wm.f32");
        write_weight_map(&path, &wm, 10, 64, std::f64::consts::E).unwrap();
        let back = read_weight_map(&path).unwrap();
        assert_eq!(back.width(), 20);
        assert!(read_entropy_map(&path).is_err());
    }
}

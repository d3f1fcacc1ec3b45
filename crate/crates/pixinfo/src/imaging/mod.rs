//! Grayscale image substrate: normalized rasters, patch extraction, and
//! histogram construction.
//!
//! Everything downstream (entropy maps, mutual information, encoders) works
//! on these types. Images hold row-major `f64` intensities in `[0, 1]`;
//! binning for histograms maps an intensity `v` to `floor(v * bins)` with
//! `v = 1` folded into the last bin.

pub mod io;

use crate::error::{PixinfoError, Result};

/// A 2D grayscale raster with normalized intensities and physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    /// Millimetres per pixel; 1.0 for synthetic data so radii read as pixels.
    spacing: f64,
}

impl GrayImage {
    /// Build from row-major data already in `[0, 1]`.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(PixinfoError::Shape {
                context: "image data length",
                left: format!("{}x{}", width, height),
                right: data.len().to_string(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v) || v.is_nan()) {
            return Err(PixinfoError::Data(format!(
                "intensity {} outside [0, 1]",
                v
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            spacing: 1.0,
        })
    }

    pub fn with_spacing(mut self, spacing_mm: f64) -> Self {
        self.spacing = spacing_mm;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }
}

/// A square window cut from a [`GrayImage`], keeping its source center.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    side: usize,
    data: Vec<f64>,
    center: (usize, usize),
}

impl Patch {
    /// Build directly from raw values, mainly for tests and synthetic inputs.
    pub fn from_data(side: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 || data.len() != side * side {
            return Err(PixinfoError::Shape {
                context: "patch data length",
                left: format!("{}x{}", side, side),
                right: data.len().to_string(),
            });
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v) || v.is_nan()) {
            return Err(PixinfoError::Data("patch intensity outside [0, 1]".into()));
        }
        Ok(Self {
            side,
            data,
            center: (side / 2, side / 2),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.side + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Occupancy counts of intensity bins for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Probabilities over occupied bins; empty bins yield 0.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Co-occurrence counts of bin pairs for two equally sized patches.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[x * self.bins + y]
    }

    /// Marginal over the first patch (sums each row).
    pub fn row_marginal(&self) -> Histogram {
        let mut counts = vec![0u64; self.bins];
        for x in 0..self.bins {
            for y in 0..self.bins {
                counts[x] += self.count(x, y);
            }
        }
        Histogram {
            counts,
            total: self.total,
        }
    }

    /// Marginal over the second patch (sums each column).
    pub fn col_marginal(&self) -> Histogram {
        let mut counts = vec![0u64; self.bins];
        for x in 0..self.bins {
            for y in 0..self.bins {
                counts[y] += self.count(x, y);
            }
        }
        Histogram {
            counts,
            total: self.total,
        }
    }
}

/// Map an intensity in `[0, 1]` to its bin index; `v = 1` lands in the last bin.
#[inline]
pub fn bin_index(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Affinely rescale a raw raster into a normalized [`GrayImage`].
///
/// Values are clamped to `[clip_lo, clip_hi]` first, so out-of-window inputs
/// saturate at 0 or 1.
pub fn normalize_intensity(
    width: usize,
    height: usize,
    raw: &[f64],
    clip_lo: f64,
    clip_hi: f64,
) -> Result<GrayImage> {
    if !(clip_lo < clip_hi) {
        return Err(PixinfoError::InvalidRange {
            lo: clip_lo,
            hi: clip_hi,
        });
    }
    if raw.len() != width * height {
        return Err(PixinfoError::Shape {
            context: "raw raster length",
            left: format!("{}x{}", width, height),
            right: raw.len().to_string(),
        });
    }
    let span = clip_hi - clip_lo;
    let data = raw
        .iter()
        .map(|&v| (v.clamp(clip_lo, clip_hi) - clip_lo) / span)
        .collect();
    GrayImage::from_data(width, height, data)
}

/// Half-window offset before the center pixel: `floor(k / 2)`.
///
/// For even `k` the window is asymmetric, covering `[c - k/2, c + k/2 - 1]`.
#[inline]
pub fn patch_margin(side: usize) -> usize {
    side / 2
}

/// Cut the `k x k` window centered at `(row, col)`.
///
/// The window's top-left corner is `(row - floor(k/2), col - floor(k/2))` and
/// must lie fully inside the image; callers iterating whole images should
/// pre-filter with the valid-region margin.
pub fn extract_patch(img: &GrayImage, center: (usize, usize), side: usize) -> Result<Patch> {
    let (row, col) = center;
    let lo = patch_margin(side);
    let fits = row >= lo
        && col >= lo
        && row - lo + side <= img.height()
        && col - lo + side <= img.width();
    if side == 0 || !fits {
        return Err(PixinfoError::Border {
            row,
            col,
            side,
            width: img.width(),
            height: img.height(),
        });
    }
    let top = row - lo;
    let left = col - lo;
    let mut data = Vec::with_capacity(side * side);
    for r in 0..side {
        let start = (top + r) * img.width() + left;
        data.extend_from_slice(&img.data()[start..start + side]);
    }
    Ok(Patch {
        side,
        data,
        center,
    })
}

/// Histogram of a patch's intensities over `bins` equal-width bins.
pub fn gray_histogram(patch: &Patch, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(PixinfoError::Parameter(format!(
            "histogram bins must be >= 2, got {}",
            bins
        )));
    }
    let mut counts = vec![0u64; bins];
    for &v in patch.data() {
        counts[bin_index(v, bins)] += 1;
    }
    Ok(Histogram {
        counts,
        total: patch.data().len() as u64,
    })
}

/// Joint histogram of two patches paired at identical within-patch offsets.
pub fn joint_histogram(p: &Patch, q: &Patch, bins: usize) -> Result<JointHistogram> {
    if p.side() != q.side() {
        return Err(PixinfoError::Shape {
            context: "joint histogram patch sides",
            left: p.side().to_string(),
            right: q.side().to_string(),
        });
    }
    if bins < 2 {
        return Err(PixinfoError::Parameter(format!(
            "histogram bins must be >= 2, got {}",
            bins
        )));
    }
    let mut counts = vec![0u64; bins * bins];
    for (&a, &b) in p.data().iter().zip(q.data()) {
        counts[bin_index(a, bins) * bins + bin_index(b, bins)] += 1;
    }
    Ok(JointHistogram {
        bins,
        counts,
        total: p.data().len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(width: usize, height: usize, v: f64) -> GrayImage {
        GrayImage::from_data(width, height, vec![v; width * height]).unwrap()
    }

    #[test]
    fn normalize_lower_and_upper_bounds() {
        let img = normalize_intensity(2, 2, &[-5.0; 4], -5.0, 3.0).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        let img = normalize_intensity(2, 2, &[3.0; 4], -5.0, 3.0).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn normalize_hand_evaluated_affine_map() {
        // CT-style clipping: {-300, 100, 500} into (-200, 400).
        let img = normalize_intensity(3, 1, &[-300.0, 100.0, 500.0], -200.0, 400.0).unwrap();
        assert_eq!(img.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_rejects_inverted_range() {
        let err = normalize_intensity(1, 1, &[0.0], 1.0, 1.0).unwrap_err();
        assert!(matches!(err, PixinfoError::InvalidRange { .. }));
    }

    #[test]
    fn normalize_is_idempotent_on_unit_range() {
        let raw = vec![0.0, 0.25, 0.5, 1.0];
        let img = normalize_intensity(4, 1, &raw, 0.0, 1.0).unwrap();
        let again = normalize_intensity(4, 1, img.data(), 0.0, 1.0).unwrap();
        assert_eq!(img.data(), again.data());
    }

    #[test]
    fn extract_patch_constant_field() {
        let img = constant_image(5, 5, 0.7);
        let patch = extract_patch(&img, (2, 2), 3).unwrap();
        assert_eq!(patch.side(), 3);
        assert!(patch.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn extract_patch_rejects_out_of_bounds_window() {
        let img = constant_image(384, 384, 0.5);
        let err = extract_patch(&img, (0, 0), 10).unwrap_err();
        assert!(matches!(err, PixinfoError::Border { .. }));
    }

    #[test]
    fn extract_patch_identity_window() {
        let data: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let img = GrayImage::from_data(3, 3, data.clone()).unwrap();
        let patch = extract_patch(&img, (1, 1), 3).unwrap();
        assert_eq!(patch.data(), &data[..]);
    }

    #[test]
    fn extract_patch_even_side_uses_floor_center() {
        // k = 10 with center at (5, 5): window rows [0, 9].
        let img = constant_image(10, 10, 0.2);
        assert!(extract_patch(&img, (5, 5), 10).is_ok());
        assert!(extract_patch(&img, (4, 5), 10).is_err());
        assert!(extract_patch(&img, (6, 5), 10).is_err());
    }

    #[test]
    fn histogram_degenerate_distribution() {
        let patch = Patch::from_data(4, vec![0.3; 16]).unwrap();
        let h = gray_histogram(&patch, 256).unwrap();
        assert_eq!(h.total(), 16);
        assert_eq!(h.counts().iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts()[bin_index(0.3, 256)], 16);
    }

    #[test]
    fn histogram_two_value_symmetry() {
        let patch = Patch::from_data(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let h = gray_histogram(&patch, 2).unwrap();
        assert_eq!(h.counts(), &[2, 2]);
    }

    #[test]
    fn histogram_hundred_evenly_spaced_values_occupy_hundred_bins() {
        // Oracle: enumerate the bin index of each value independently.
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let mut expected = std::collections::BTreeSet::new();
        for &v in &values {
            expected.insert(((v * 256.0) as usize).min(255));
        }
        assert_eq!(expected.len(), 100);

        let patch = Patch::from_data(10, values).unwrap();
        let h = gray_histogram(&patch, 256).unwrap();
        let occupied: Vec<usize> = (0..256).filter(|&b| h.counts()[b] > 0).collect();
        assert_eq!(occupied.len(), 100);
        assert!(occupied.iter().all(|b| h.counts()[*b] == 1));
        assert!(occupied.iter().all(|b| expected.contains(b)));
    }

    #[test]
    fn histogram_normalized_sums_to_one() {
        let patch = Patch::from_data(3, (0..9).map(|i| i as f64 / 10.0).collect()).unwrap();
        let h = gray_histogram(&patch, 16).unwrap();
        let sum: f64 = h.normalized().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_histogram_identity_pairing_is_diagonal() {
        let data: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let p = Patch::from_data(4, data).unwrap();
        let j = joint_histogram(&p, &p, 8).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                if x != y {
                    assert_eq!(j.count(x, y), 0);
                }
            }
        }
        assert_eq!(j.total(), 16);
    }

    #[test]
    fn joint_histogram_degenerate_pair_single_cell() {
        let p = Patch::from_data(3, vec![0.2; 9]).unwrap();
        let q = Patch::from_data(3, vec![0.8; 9]).unwrap();
        let j = joint_histogram(&p, &q, 16).unwrap();
        assert_eq!(j.count(bin_index(0.2, 16), bin_index(0.8, 16)), 9);
    }

    #[test]
    fn joint_histogram_swap_transposes() {
        let p = Patch::from_data(2, vec![0.1, 0.4, 0.9, 0.3]).unwrap();
        let q = Patch::from_data(2, vec![0.6, 0.2, 0.7, 0.5]).unwrap();
        let j1 = joint_histogram(&p, &q, 8).unwrap();
        let j2 = joint_histogram(&q, &p, 8).unwrap();
        for x in 0..8 {
            for y in 0..8 {
                assert_eq!(j1.count(x, y), j2.count(y, x));
            }
        }
    }

    #[test]
    fn joint_histogram_rejects_size_mismatch() {
        let p = Patch::from_data(2, vec![0.0; 4]).unwrap();
        let q = Patch::from_data(3, vec![0.0; 9]).unwrap();
        assert!(matches!(
            joint_histogram(&p, &q, 8),
            Err(PixinfoError::Shape { .. })
        ));
    }

    #[test]
    fn joint_marginals_match_individual_histograms() {
        let p = Patch::from_data(3, vec![0.05, 0.3, 0.3, 0.7, 0.9, 0.2, 0.2, 0.6, 1.0]).unwrap();
        let q = Patch::from_data(3, vec![0.5, 0.1, 0.8, 0.8, 0.4, 0.4, 0.0, 0.35, 0.9]).unwrap();
        let j = joint_histogram(&p, &q, 12).unwrap();
        assert_eq!(j.row_marginal().counts(), gray_histogram(&p, 12).unwrap().counts());
        assert_eq!(j.col_marginal().counts(), gray_histogram(&q, 12).unwrap().counts());
    }
}

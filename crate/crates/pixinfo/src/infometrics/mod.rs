//! Per-pixel information analytics: entropy maps, mutual information,
//! three-way pixel categorization, and sampling weight maps.
//!
//! The entropy of a pixel is the Shannon entropy of the grayscale histogram
//! of the `k x k` patch centered on it. Pixels split into low/medium/high
//! information bands by thresholding that entropy, and weight maps turn the
//! entropy field into a sampling density. All entropies are in nats unless a
//! different log base is configured.

pub mod io;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{PixinfoError, Result};
use crate::imaging::{extract_patch, gray_histogram, joint_histogram, patch_margin, GrayImage, Patch};
use crate::rng::rng_from_seed;

/// Sentinel for pixels in the border band where no full patch fits.
pub const INVALID_ENTROPY: f64 = -1.0;

/// Information band of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Low,
    Medium,
    High,
    Invalid,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Low => "low",
            Category::Medium => "medium",
            Category::High => "high",
            Category::Invalid => "invalid",
        }
    }
}

/// Per-pixel patch entropy over an image interior.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    patch_side: usize,
    bins: usize,
    log_base: f64,
}

impl EntropyMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn log_base(&self) -> f64 {
        self.log_base
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col) >= 0.0
    }

    /// Width of the invalid border band.
    pub fn margin(&self) -> usize {
        patch_margin(self.patch_side)
    }

    /// Entropies of the valid interior only.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|&v| v >= 0.0)
    }

    /// Rebuild from previously serialized parts; validates the border band.
    pub fn from_parts(
        width: usize,
        height: usize,
        values: Vec<f64>,
        patch_side: usize,
        bins: usize,
        log_base: f64,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(PixinfoError::Shape {
                context: "entropy map length",
                left: format!("{}x{}", width, height),
                right: values.len().to_string(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
            patch_side,
            bins,
            log_base,
        })
    }
}

/// Per-pixel information band labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMap {
    width: usize,
    height: usize,
    labels: Vec<Category>,
    thresholds: (f64, f64),
}

impl CategoryMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Category] {
        &self.labels
    }

    pub fn thresholds(&self) -> (f64, f64) {
        self.thresholds
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Category {
        self.labels[row * self.width + col]
    }

    /// Count of pixels per band: (low, medium, high, invalid).
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for &l in &self.labels {
            match l {
                Category::Low => c.0 += 1,
                Category::Medium => c.1 += 1,
                Category::High => c.2 += 1,
                Category::Invalid => c.3 += 1,
            }
        }
        c
    }

    /// Positions of all valid pixels with the given label.
    pub fn positions(&self, category: Category) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(row, col) == category {
                    out.push((row, col));
                }
            }
        }
        out
    }
}

/// Per-pixel non-negative sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
    total: f64,
    normalized: bool,
}

impl WeightMap {
    pub fn from_weights(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(PixinfoError::Shape {
                context: "weight map length",
                left: format!("{}x{}", width, height),
                right: weights.len().to_string(),
            });
        }
        if weights.iter().any(|w| *w < 0.0 || w.is_nan()) {
            return Err(PixinfoError::Parameter("weights must be >= 0".into()));
        }
        let total = weights.iter().sum();
        Ok(Self {
            width,
            height,
            weights,
            total,
            normalized: false,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.width + col]
    }

    /// Scale weights to sum to 1.
    pub fn normalize(mut self) -> Result<Self> {
        if self.total <= 0.0 {
            return Err(PixinfoError::EmptySupport);
        }
        let total = self.total;
        for w in &mut self.weights {
            *w /= total;
        }
        self.total = 1.0;
        self.normalized = true;
        Ok(self)
    }

    /// Zero out all weights within `margin` pixels of the border.
    ///
    /// Used before sampling training pixels whose encoder patch is larger
    /// than the entropy patch.
    pub fn restrict_margin(mut self, margin: usize) -> Self {
        for row in 0..self.height {
            for col in 0..self.width {
                let inside = row >= margin
                    && col >= margin
                    && row + margin < self.height
                    && col + margin < self.width;
                if !inside {
                    self.weights[row * self.width + col] = 0.0;
                }
            }
        }
        self.total = self.weights.iter().sum();
        self.normalized = false;
        self
    }
}

/// A sampled pixel position together with its information band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledPixel {
    pub row: usize,
    pub col: usize,
    pub category: Category,
}

/// Shannon entropy of a histogram in the given log base; `0 ln 0 := 0`.
fn histogram_entropy(counts: &[u64], total: u64, log_base: f64) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    if log_base == std::f64::consts::E {
        h
    } else {
        h / log_base.ln()
    }
}

/// Image information entropy of one patch, in nats.
pub fn iie(patch: &Patch, bins: usize) -> Result<f64> {
    iie_with_base(patch, bins, std::f64::consts::E)
}

/// Image information entropy in an arbitrary log base.
pub fn iie_with_base(patch: &Patch, bins: usize, log_base: f64) -> Result<f64> {
    if log_base <= 1.0 {
        return Err(PixinfoError::Parameter(format!(
            "log base must be > 1, got {}",
            log_base
        )));
    }
    let h = gray_histogram(patch, bins)?;
    Ok(histogram_entropy(h.counts(), h.total(), log_base))
}

/// Per-pixel entropy over the whole image interior, in nats.
pub fn entropy_map(img: &GrayImage, patch_side: usize, bins: usize) -> Result<EntropyMap> {
    entropy_map_with_base(img, patch_side, bins, std::f64::consts::E)
}

/// Per-pixel entropy with a configurable log base.
///
/// The border band of width `floor(k/2)` is marked invalid on all four
/// sides; rows parallelize over a read-only image.
pub fn entropy_map_with_base(
    img: &GrayImage,
    patch_side: usize,
    bins: usize,
    log_base: f64,
) -> Result<EntropyMap> {
    if img.width() < patch_side || img.height() < patch_side {
        return Err(PixinfoError::TooSmall {
            width: img.width(),
            height: img.height(),
            side: patch_side,
        });
    }
    if bins < 2 {
        return Err(PixinfoError::Parameter(format!(
            "histogram bins must be >= 2, got {}",
            bins
        )));
    }
    if log_base <= 1.0 {
        return Err(PixinfoError::Parameter(format!(
            "log base must be > 1, got {}",
            log_base
        )));
    }
    let margin = patch_margin(patch_side);
    let width = img.width();
    let height = img.height();

    let values: Vec<f64> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut row_vals = vec![INVALID_ENTROPY; width];
            if row >= margin && row + margin < height {
                // Sliding histogram along the row: add the entering column,
                // remove the leaving one.
                let mut counts = vec![0u64; bins];
                let top = row - margin;
                for r in top..top + patch_side {
                    for c in 0..patch_side {
                        counts[crate::imaging::bin_index(img.get(r, c), bins)] += 1;
                    }
                }
                let total = (patch_side * patch_side) as u64;
                for col in margin..width.saturating_sub(margin) {
                    if col > margin {
                        let leave = col - margin - 1;
                        let enter = col - margin - 1 + patch_side;
                        for r in top..top + patch_side {
                            counts[crate::imaging::bin_index(img.get(r, leave), bins)] -= 1;
                            counts[crate::imaging::bin_index(img.get(r, enter), bins)] += 1;
                        }
                    }
                    row_vals[col] = histogram_entropy(&counts, total, log_base);
                }
            }
            row_vals.into_iter()
        })
        .collect();

    Ok(EntropyMap {
        width,
        height,
        values,
        patch_side,
        bins,
        log_base,
    })
}

/// Split valid pixels into low/medium/high bands by entropy thresholds.
///
/// `low: 0 <= H < t_lm`, `medium: t_lm <= H < t_mh`, `high: H >= t_mh`.
pub fn categorize(em: &EntropyMap, t_lm: f64, t_mh: f64) -> Result<CategoryMap> {
    if !(0.0 <= t_lm && t_lm < t_mh) {
        return Err(PixinfoError::Threshold { t_lm, t_mh });
    }
    let labels = em
        .values()
        .iter()
        .map(|&h| {
            if h < 0.0 {
                Category::Invalid
            } else if h < t_lm {
                Category::Low
            } else if h < t_mh {
                Category::Medium
            } else {
                Category::High
            }
        })
        .collect();
    Ok(CategoryMap {
        width: em.width(),
        height: em.height(),
        labels,
        thresholds: (t_lm, t_mh),
    })
}

/// Plug-in mutual information between two patches, in nats.
///
/// Marginals are taken from the joint histogram, so the identity
/// `I[p; p] = H(p)` holds exactly under shared binning.
pub fn mutual_information(p: &Patch, q: &Patch, bins: usize) -> Result<f64> {
    let joint = joint_histogram(p, q, bins)?;
    let row = joint.row_marginal();
    let col = joint.col_marginal();
    let n = joint.total() as f64;
    let mut mi = 0.0;
    for x in 0..bins {
        let px = row.counts()[x] as f64 / n;
        if px == 0.0 {
            continue;
        }
        for y in 0..bins {
            let cxy = joint.count(x, y);
            if cxy == 0 {
                continue;
            }
            let pxy = cxy as f64 / n;
            let py = col.counts()[y] as f64 / n;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    Ok(mi)
}

/// Exponential sampling weight map: `w = H^gamma`, with `0^0 := 1`.
pub fn exp_weight_map(em: &EntropyMap, gamma: f64) -> Result<WeightMap> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(PixinfoError::Parameter(format!(
            "exponent gamma must be >= 0, got {}",
            gamma
        )));
    }
    let weights = em
        .values()
        .iter()
        .map(|&h| {
            if h < 0.0 {
                0.0
            } else if gamma == 0.0 {
                1.0
            } else {
                h.powf(gamma)
            }
        })
        .collect::<Vec<_>>();
    let total = weights.iter().sum();
    Ok(WeightMap {
        width: em.width(),
        height: em.height(),
        weights,
        total,
        normalized: false,
    })
}

/// Piecewise sampling weight map: `w = 1` iff `H >= d`.
///
/// A cutoff above the attainable maximum gives a zero map; that only errors
/// later, at sampling time.
pub fn piecewise_weight_map(em: &EntropyMap, cutoff: f64) -> Result<WeightMap> {
    if cutoff < 0.0 || cutoff.is_nan() {
        return Err(PixinfoError::Parameter(format!(
            "cutoff must be >= 0, got {}",
            cutoff
        )));
    }
    let weights = em
        .values()
        .iter()
        .map(|&h| if h >= cutoff { 1.0 } else { 0.0 })
        .collect::<Vec<_>>();
    let total = weights.iter().sum();
    Ok(WeightMap {
        width: em.width(),
        height: em.height(),
        weights,
        total,
        normalized: false,
    })
}

/// Draw `n` i.i.d. pixel positions with probability proportional to weight.
pub fn sample_positions(wm: &WeightMap, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if wm.total() <= 0.0 {
        return Err(PixinfoError::EmptySupport);
    }
    // Cumulative sums once, then binary search per draw.
    let mut cumulative = Vec::with_capacity(wm.weights().len());
    let mut acc = 0.0;
    for &w in wm.weights() {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c <= u);
        let idx = idx.min(cumulative.len() - 1);
        out.push((idx / wm.width(), idx % wm.width()));
    }
    Ok(out)
}

/// Draw `n` pixels and tag each with its information band.
pub fn sample_pixels(
    wm: &WeightMap,
    cm: &CategoryMap,
    n: usize,
    seed: u64,
) -> Result<Vec<SampledPixel>> {
    if wm.width() != cm.width() || wm.height() != cm.height() {
        return Err(PixinfoError::Shape {
            context: "weight/category map dimensions",
            left: format!("{}x{}", wm.width(), wm.height()),
            right: format!("{}x{}", cm.width(), cm.height()),
        });
    }
    let positions = sample_positions(wm, n, seed)?;
    Ok(positions
        .into_iter()
        .map(|(row, col)| SampledPixel {
            row,
            col,
            category: cm.get(row, col),
        })
        .collect())
}

//! Photometric augmentation and information-matched intensity estimation.
//!
//! An augmentation intensity `A = {a_br, a_ct}` bounds a random brightness
//! offset and a random contrast factor. The estimator picks the intensity
//! whose expected patch-vs-augmented-patch mutual information matches a
//! target derived from cross-image MI at corresponding key points: stronger
//! augmentation erodes more shared information, so the search walks a ray of
//! increasing intensity until the gap closes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PixinfoError, Result};
use crate::imaging::{extract_patch, GrayImage, Patch};
use crate::infometrics::{iie, mutual_information, Category};
use crate::rng::{derive_seed, rng_from_seed};

/// Augmentation intensity: brightness offset half-range and contrast
/// factor half-range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub a_br: f64,
    pub a_ct: f64,
}

impl AugmentParams {
    pub fn new(a_br: f64, a_ct: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a_br) {
            return Err(PixinfoError::Parameter(format!(
                "a_br must be in [0, 1], got {}",
                a_br
            )));
        }
        if !(0.0..1.0).contains(&a_ct) {
            return Err(PixinfoError::Parameter(format!(
                "a_ct must be in [0, 1), got {}",
                a_ct
            )));
        }
        Ok(Self { a_br, a_ct })
    }

    pub fn identity() -> Self {
        Self { a_br: 0.0, a_ct: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.a_br == 0.0 && self.a_ct == 0.0
    }
}

/// Per-group augmentation intensities for the three information bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAugment {
    pub low: AugmentParams,
    pub medium: AugmentParams,
    pub high: AugmentParams,
}

impl GroupAugment {
    /// The same intensity for every band; the fixed-augmentation baseline.
    pub fn uniform(params: AugmentParams) -> Self {
        Self {
            low: params,
            medium: params,
            high: params,
        }
    }

    pub fn for_category(&self, category: Category) -> Option<&AugmentParams> {
        match category {
            Category::Low => Some(&self.low),
            Category::Medium => Some(&self.medium),
            Category::High => Some(&self.high),
            Category::Invalid => None,
        }
    }
}

/// The information budget an augmented positive pair should retain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiTarget {
    /// Scaled mean cross-image MI at corresponding key points, in nats.
    pub value: f64,
    pub group: Category,
    pub alpha_hat: f64,
    /// Number of non-reference images the target was averaged over.
    pub n_images: usize,
    pub k_points: usize,
    /// MI histogram bins the target was computed with; candidate MI during
    /// the search uses the same binning so the comparison is like-for-like.
    pub bins: usize,
}

/// Resolves a key point on the reference image to its corresponding pixel
/// in another image of the corpus.
///
/// Implementations: ground-truth affine maps from the synthetic generator,
/// or argmax feature matching with a warmup encoder.
pub trait Correspondence {
    fn resolve(&self, key_point: (usize, usize), image_index: usize) -> Result<(usize, usize)>;
}

/// Maps every key point to itself; the degenerate identical-views case.
pub struct IdentityCorrespondence;

impl Correspondence for IdentityCorrespondence {
    fn resolve(&self, key_point: (usize, usize), _image_index: usize) -> Result<(usize, usize)> {
        Ok(key_point)
    }
}

/// The brightness offset and contrast factor drawn for one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotometricDraw {
    pub brightness: f64,
    pub contrast: f64,
}

/// Draw the random offset/factor pair for an intensity, deterministically
/// per seed. Zero intensities yield exactly (0, 1).
pub fn photometric_draw(params: &AugmentParams, seed: u64) -> PhotometricDraw {
    let mut rng = rng_from_seed(seed);
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    PhotometricDraw {
        brightness: (2.0 * u - 1.0) * params.a_br,
        contrast: 1.0 + (2.0 * v - 1.0) * params.a_ct,
    }
}

/// Apply a concrete offset/factor pair: contrast scales about the patch
/// mean, then the offset shifts, then values clamp back into [0, 1].
pub fn apply_photometric_with(patch: &Patch, draw: PhotometricDraw) -> Patch {
    let mean = patch.mean();
    let data = patch
        .data()
        .iter()
        .map(|&v| (draw.contrast * (v - mean) + mean + draw.brightness).clamp(0.0, 1.0))
        .collect();
    Patch::from_data(patch.side(), data).expect("clamped values stay in range")
}

/// Randomly brighten/contrast-jitter a patch. `A = (0, 0)` is the exact
/// identity.
pub fn apply_photometric(patch: &Patch, params: &AugmentParams, seed: u64) -> Patch {
    apply_photometric_with(patch, photometric_draw(params, seed))
}

/// Monte-Carlo mean MI between a patch and its augmented views.
///
/// At zero intensity every draw is the identity, so the result equals the
/// patch entropy with no sampling noise.
pub fn expected_pair_mi(
    patch: &Patch,
    params: &AugmentParams,
    draws: usize,
    bins: usize,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(PixinfoError::Parameter("draws must be >= 1".into()));
    }
    let mut sum = 0.0;
    for d in 0..draws {
        let aug = apply_photometric(patch, params, derive_seed(seed, &[d as u64]));
        sum += mutual_information(patch, &aug, bins)?;
    }
    Ok(sum / draws as f64)
}

/// Estimate the minimal-necessary-MI target for one pixel group.
///
/// Averages the MI between each key-point patch on the reference image and
/// the patch at its corresponding pixel in every other image, then scales by
/// `alpha_hat`.
pub fn estimate_target_mi(
    images: &[GrayImage],
    key_points: &[(usize, usize)],
    correspondence: &dyn Correspondence,
    group: Category,
    k_patch: usize,
    bins: usize,
    alpha_hat: f64,
) -> Result<MiTarget> {
    if images.len() < 2 {
        return Err(PixinfoError::Parameter(
            "target estimation needs at least 2 images".into(),
        ));
    }
    if key_points.is_empty() {
        return Err(PixinfoError::Parameter("no key points supplied".into()));
    }
    if alpha_hat <= 0.0 {
        return Err(PixinfoError::Parameter(format!(
            "alpha_hat must be > 0, got {}",
            alpha_hat
        )));
    }
    let reference = &images[0];
    let n = images.len() - 1;
    let mut sum = 0.0;
    for &(row, col) in key_points {
        let anchor = extract_patch(reference, (row, col), k_patch)?;
        for (offset, image) in images.iter().enumerate().skip(1) {
            let resolved = correspondence.resolve((row, col), offset)?;
            let partner = extract_patch(image, resolved, k_patch).map_err(|_| {
                PixinfoError::Correspondence {
                    row,
                    col,
                    image: offset,
                }
            })?;
            sum += mutual_information(&anchor, &partner, bins)?;
        }
    }
    Ok(MiTarget {
        value: alpha_hat * sum / (n * key_points.len()) as f64,
        group,
        alpha_hat,
        n_images: n,
        k_points: key_points.len(),
        bins,
    })
}

/// Search-ray configuration for intensity estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    /// Upper end of the brightness half-range ray.
    pub a_br_max: f64,
    /// Upper end of the contrast half-range ray.
    pub a_ct_max: f64,
    /// Coarse scan points between 0 and 1 inclusive.
    pub steps: usize,
    /// Local refinement passes, each halving the step.
    pub refine_passes: usize,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            a_br_max: 0.8,
            a_ct_max: 0.8,
            steps: 50,
            refine_passes: 3,
        }
    }
}

impl SearchGrid {
    /// Intensity at ray position `t` in [0, 1].
    pub fn at(&self, t: f64) -> AugmentParams {
        AugmentParams {
            a_br: t * self.a_br_max,
            a_ct: t * self.a_ct_max,
        }
    }

    fn validate(&self) -> Result<()> {
        AugmentParams::new(self.a_br_max, self.a_ct_max)?;
        if self.steps == 0 {
            return Err(PixinfoError::Parameter("grid steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of the intensity search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    pub group: Category,
    pub a_br: f64,
    pub a_ct: f64,
    /// Position on the search ray.
    pub t: f64,
    pub target_mi: f64,
    pub alpha_hat: f64,
    /// Achieved |target - estimated pair MI| gap, in nats.
    pub objective: f64,
    /// Set when the target exceeds the identity-augmentation MI, which no
    /// intensity can reach.
    pub unreachable: bool,
}

impl EstimatedParams {
    pub fn params(&self) -> AugmentParams {
        AugmentParams {
            a_br: self.a_br,
            a_ct: self.a_ct,
        }
    }
}

/// Find the ray position whose expected augmented-pair MI best matches the
/// target: coarse scan, then local step-halving refinement.
///
/// Each (ray position, pool patch) evaluation derives its seed from stable
/// labels, so results are identical no matter how work is scheduled.
pub fn estimate_aug_params(
    patch_pool: &[Patch],
    target: &MiTarget,
    search: &SearchGrid,
    draws: usize,
    seed: u64,
) -> Result<EstimatedParams> {
    if patch_pool.is_empty() {
        return Err(PixinfoError::Parameter("empty patch pool".into()));
    }
    search.validate()?;
    if draws == 0 {
        return Err(PixinfoError::Parameter("draws must be >= 1".into()));
    }

    let bins = target.bins;
    let evaluate = |t: f64| -> Result<f64> {
        let sum: f64 = patch_pool
            .par_iter()
            .enumerate()
            .map(|(idx, patch)| {
                let eval_seed = derive_seed(seed, &[t.to_bits(), idx as u64]);
                expected_pair_mi(patch, &search.at(t), draws, bins, eval_seed)
            })
            .try_reduce(|| 0.0, |a, b| Ok(a + b))?;
        Ok(sum / patch_pool.len() as f64)
    };

    // Identity MI is the attainable maximum; a larger target cannot be met.
    let identity_mi = evaluate(0.0)?;
    if target.value > identity_mi {
        return Ok(EstimatedParams {
            group: target.group,
            a_br: 0.0,
            a_ct: 0.0,
            t: 0.0,
            target_mi: target.value,
            alpha_hat: target.alpha_hat,
            objective: target.value - identity_mi,
            unreachable: true,
        });
    }

    let mut best_t = 0.0;
    let mut best_obj = (target.value - identity_mi).abs();
    for i in 1..=search.steps {
        let t = i as f64 / search.steps as f64;
        let obj = (target.value - evaluate(t)?).abs();
        if obj < best_obj {
            best_obj = obj;
            best_t = t;
        }
    }

    let mut step = 1.0 / search.steps as f64;
    for _ in 0..search.refine_passes {
        step /= 2.0;
        for t in [best_t - step, best_t + step] {
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let obj = (target.value - evaluate(t)?).abs();
            if obj < best_obj {
                best_obj = obj;
                best_t = t;
            }
        }
    }

    let params = search.at(best_t);
    Ok(EstimatedParams {
        group: target.group,
        a_br: params.a_br,
        a_ct: params.a_ct,
        t: best_t,
        target_mi: target.value,
        alpha_hat: target.alpha_hat,
        objective: best_obj,
        unreachable: false,
    })
}

/// Default bins per axis for MI histograms; coarse enough that a 10x10
/// patch does not shatter into singleton cells.
pub const DEFAULT_MI_BINS: usize = 32;

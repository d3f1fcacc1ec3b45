//! Grouped contrastive training of an encoder pair.
//!
//! Each step samples a batch of pixels from a weight map, feeds the original
//! patch to one encoder and an augmented view to the other, and pulls each
//! pair together against the other in-batch positives as negatives. The
//! augmentation intensity per pixel comes from its information band, so
//! grouping only changes which view the positive branch sees.

use crate::augment::{apply_photometric, GroupAugment};
use crate::clcore::encoder::{Encoder, EncoderArch, Gradients};
use crate::clcore::loss::{info_nce_loss, NegativePairing};
use crate::error::{PixinfoError, Result};
use crate::imaging::{extract_patch, patch_margin, GrayImage, Patch};
use crate::infometrics::{sample_pixels, Category, CategoryMap, WeightMap};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;

/// Everything one training run needs besides the data and its maps.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub arch: EncoderArch,
    pub temperature: f64,
    /// Negatives per anchor; capped at `batch_pixels - 1`.
    pub negatives: usize,
    pub batch_pixels: usize,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    pub group_params: GroupAugment,
    /// Entropy thresholds the category maps must have been built with.
    pub thresholds: (f64, f64),
    pub pairing: NegativePairing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: EncoderArch::default(),
            temperature: 0.1,
            negatives: 15,
            batch_pixels: 64,
            steps: 400,
            step_size: 1e-3,
            seed: 0,
            group_params: GroupAugment::uniform(crate::augment::AugmentParams::identity()),
            thresholds: (2.0, 4.0),
            pairing: NegativePairing::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(PixinfoError::Parameter(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.negatives == 0 {
            return Err(PixinfoError::Parameter("negatives must be >= 1".into()));
        }
        if self.batch_pixels < self.negatives + 1 {
            return Err(PixinfoError::Parameter(format!(
                "batch_pixels ({}) must be >= negatives + 1 ({})",
                self.batch_pixels,
                self.negatives + 1
            )));
        }
        if self.step_size < 0.0 {
            return Err(PixinfoError::Parameter("step size must be >= 0".into()));
        }
        Ok(())
    }
}

/// Losses recorded at one step: the batch mean plus running per-group means
/// over all samples seen so far (0 until a group first appears).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

/// The outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    /// Encoder for original patches; used at inference.
    pub encoder: Encoder,
    /// Encoder for augmented views.
    pub encoder_aug: Encoder,
    /// Samples seen per group: (low, medium, high).
    pub group_counts: (usize, usize, usize),
}

impl TrainReport {
    /// CSV rows: step, total_loss, loss_low, loss_med, loss_high.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,total_loss,loss_low,loss_med,loss_high\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.total, r.low, r.medium, r.high
            ));
        }
        out
    }
}

/// Batch loss and parameter gradients for both encoders.
///
/// Negatives for pair `i` are the positives of the next `m` in-batch pairs
/// (cyclically), so the negative pool is deterministic given the batch.
pub fn batch_loss_and_grads(
    f: &Encoder,
    f_aug: &Encoder,
    pairs: &[(Patch, Patch)],
    temperature: f64,
    negatives: usize,
    pairing: NegativePairing,
) -> Result<(f64, Vec<f64>, Gradients, Gradients)> {
    let batch = pairs.len();
    if batch == 0 {
        return Err(PixinfoError::Parameter("empty batch".into()));
    }
    let m = negatives.min(batch - 1);

    let mut anchor_traces = Vec::with_capacity(batch);
    let mut positive_traces = Vec::with_capacity(batch);
    for (orig, aug) in pairs {
        anchor_traces.push(f.forward_traced(orig)?);
        positive_traces.push(f_aug.forward_traced(aug)?);
    }

    let mut losses = Vec::with_capacity(batch);
    let mut anchor_cots = vec![vec![0.0; f.embed_dim()]; batch];
    let mut positive_cots = vec![vec![0.0; f_aug.embed_dim()]; batch];

    for i in 0..batch {
        let neg_idx: Vec<usize> = (1..=m).map(|j| (i + j) % batch).collect();
        let neg_refs: Vec<&[f64]> = neg_idx
            .iter()
            .map(|&j| positive_traces[j].embedding.as_slice())
            .collect();
        let out = info_nce_loss(
            &anchor_traces[i].embedding,
            &positive_traces[i].embedding,
            &neg_refs,
            temperature,
            pairing,
        )?;
        losses.push(out.loss);
        for (acc, g) in anchor_cots[i].iter_mut().zip(&out.grad_anchor) {
            *acc += g;
        }
        for (acc, g) in positive_cots[i].iter_mut().zip(&out.grad_positive) {
            *acc += g;
        }
        for (&j, gn) in neg_idx.iter().zip(&out.grad_negatives) {
            for (acc, g) in positive_cots[j].iter_mut().zip(gn) {
                *acc += g;
            }
        }
    }

    let scale = 1.0 / batch as f64;
    let mut grads_f = Gradients::zeros_like(f);
    let mut grads_aug = Gradients::zeros_like(f_aug);
    for i in 0..batch {
        for g in anchor_cots[i].iter_mut() {
            *g *= scale;
        }
        for g in positive_cots[i].iter_mut() {
            *g *= scale;
        }
        f.backward(&anchor_traces[i], &anchor_cots[i], &mut grads_f);
        f_aug.backward(&positive_traces[i], &positive_cots[i], &mut grads_aug);
    }

    let mean_loss = losses.iter().sum::<f64>() * scale;
    Ok((mean_loss, losses, grads_f, grads_aug))
}

/// Train an encoder pair on a corpus with per-image weight and category maps.
pub fn train(
    images: &[GrayImage],
    maps: &[(WeightMap, CategoryMap)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if images.is_empty() || images.len() != maps.len() {
        return Err(PixinfoError::Shape {
            context: "images vs maps",
            left: images.len().to_string(),
            right: maps.len().to_string(),
        });
    }
    for ((wm, cm), img) in maps.iter().zip(images) {
        if wm.width() != img.width() || wm.height() != img.height() {
            return Err(PixinfoError::Shape {
                context: "weight map vs image dimensions",
                left: format!("{}x{}", wm.width(), wm.height()),
                right: format!("{}x{}", img.width(), img.height()),
            });
        }
        if cm.thresholds() != cfg.thresholds {
            return Err(PixinfoError::Parameter(format!(
                "category map thresholds {:?} differ from config {:?}",
                cm.thresholds(),
                cfg.thresholds
            )));
        }
    }

    // Sampled pixels must leave room for the encoder patch, which may be
    // wider than the entropy patch.
    let margin = patch_margin(cfg.arch.input_side).max(1);
    let restricted: Vec<WeightMap> = maps
        .iter()
        .map(|(wm, _)| wm.clone().restrict_margin(margin))
        .collect();
    if restricted.iter().any(|wm| wm.total() <= 0.0) {
        return Err(PixinfoError::EmptySupport);
    }

    let mut encoder = Encoder::new(cfg.arch.clone(), derive_seed(cfg.seed, &[0x0f]))?;
    let mut encoder_aug = Encoder::new(cfg.arch.clone(), derive_seed(cfg.seed, &[0x0f, 1]))?;

    let mut records = Vec::with_capacity(cfg.steps);
    let mut group_sum = [0.0f64; 3];
    let mut group_n = [0usize; 3];

    for step in 0..cfg.steps {
        let img_idx = if images.len() == 1 {
            0
        } else {
            rng_from_seed(derive_seed(cfg.seed, &[1, step as u64])).gen_range(0..images.len())
        };
        let img = &images[img_idx];
        let cm = &maps[img_idx].1;
        let sampled = sample_pixels(
            &restricted[img_idx],
            cm,
            cfg.batch_pixels,
            derive_seed(cfg.seed, &[2, step as u64]),
        )?;

        let mut pairs = Vec::with_capacity(sampled.len());
        let mut categories = Vec::with_capacity(sampled.len());
        for (j, s) in sampled.iter().enumerate() {
            let params = cfg.group_params.for_category(s.category).ok_or_else(|| {
                PixinfoError::Data(format!(
                    "sampled pixel ({}, {}) has invalid category; weight and category maps disagree",
                    s.row, s.col
                ))
            })?;
            let patch = extract_patch(img, (s.row, s.col), cfg.arch.input_side)?;
            let aug = apply_photometric(
                &patch,
                params,
                derive_seed(cfg.seed, &[3, step as u64, j as u64]),
            );
            pairs.push((patch, aug));
            categories.push(s.category);
        }

        let (mean_loss, losses, grads_f, grads_aug) = batch_loss_and_grads(
            &encoder,
            &encoder_aug,
            &pairs,
            cfg.temperature,
            cfg.negatives,
            cfg.pairing,
        )?;
        if !mean_loss.is_finite() {
            return Err(PixinfoError::Numerical(format!(
                "loss became {} at step {}",
                mean_loss, step
            )));
        }
        encoder.apply_gradients(&grads_f, cfg.step_size);
        encoder_aug.apply_gradients(&grads_aug, cfg.step_size);

        for (loss, &cat) in losses.iter().zip(&categories) {
            let slot = match cat {
                Category::Low => 0,
                Category::Medium => 1,
                Category::High => 2,
                Category::Invalid => unreachable!("filtered above"),
            };
            group_sum[slot] += loss;
            group_n[slot] += 1;
        }
        let running = |slot: usize| {
            if group_n[slot] == 0 {
                0.0
            } else {
                group_sum[slot] / group_n[slot] as f64
            }
        };
        records.push(StepRecord {
            step,
            total: mean_loss,
            low: running(0),
            medium: running(1),
            high: running(2),
        });
    }

    Ok(TrainReport {
        records,
        encoder,
        encoder_aug,
        group_counts: (group_n[0], group_n[1], group_n[2]),
    })
}

/// Compare analytic parameter gradients of the batch loss against central
/// finite differences on randomly selected parameters of both encoders.
///
/// Returns the maximum relative error observed.
pub fn loss_gradient_check(
    f: &Encoder,
    f_aug: &Encoder,
    pairs: &[(Patch, Patch)],
    temperature: f64,
    negatives: usize,
    pairing: NegativePairing,
    epsilon: f64,
    sample_params: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(PixinfoError::Parameter(format!(
            "epsilon must be in [1e-6, 1e-3], got {}",
            epsilon
        )));
    }
    let (_, _, grads_f, grads_aug) =
        batch_loss_and_grads(f, f_aug, pairs, temperature, negatives, pairing)?;
    let flatten = |g: &Gradients| -> Vec<f64> {
        g.weights
            .iter()
            .zip(&g.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    };
    let analytic_f = flatten(&grads_f);
    let analytic_aug = flatten(&grads_aug);

    let total = analytic_f.len() + analytic_aug.len();
    let count = sample_params.min(total);
    let mut rng = rng_from_seed(seed);
    let mut max_rel: f64 = 0.0;

    for _ in 0..count {
        let global = rng.gen_range(0..total);
        let (use_f, idx) = if global < analytic_f.len() {
            (true, global)
        } else {
            (false, global - analytic_f.len())
        };

        let mut fc = f.clone();
        let mut ac = f_aug.clone();
        let base = if use_f {
            fc.flat_parameters()
        } else {
            ac.flat_parameters()
        };
        let mut probe = base.clone();
        probe[idx] += epsilon;
        if use_f {
            fc.set_flat_parameters(&probe)?;
        } else {
            ac.set_flat_parameters(&probe)?;
        }
        let (loss_plus, _, _, _) =
            batch_loss_and_grads(&fc, &ac, pairs, temperature, negatives, pairing)?;
        probe[idx] = base[idx] - epsilon;
        if use_f {
            fc.set_flat_parameters(&probe)?;
        } else {
            ac.set_flat_parameters(&probe)?;
        }
        let (loss_minus, _, _, _) =
            batch_loss_and_grads(&fc, &ac, pairs, temperature, negatives, pairing)?;

        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let analytic = if use_f { analytic_f[idx] } else { analytic_aug[idx] };
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

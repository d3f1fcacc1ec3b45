//! Pipeline configuration: one JSON document covering every knob, with
//! defaults materialized so an echoed config fully describes a run.
//!
//! Unknown keys are rejected. The top-level `seed` is the root seed;
//! estimation and training derive their stage seeds from it, while the
//! corpus keeps its own seed so the same data can be re-trained under
//! different root seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentParams;
use crate::clcore::{EncoderArch, NegativePairing};
use crate::error::{PixinfoError, Result};
use crate::synthdata::SynthSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Root seed for estimation, training, and matching stages.
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    /// Physical spacing attached to loaded images, in mm per pixel.
    pub spacing_mm: f64,
    pub synth: SynthSpec,
    pub entropy: EntropySection,
    pub categories: CategorySection,
    pub weights: WeightSection,
    pub mi: MiSection,
    pub estimate: EstimateSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub inputs: InputsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            spacing_mm: 1.0,
            synth: SynthSpec::default(),
            entropy: EntropySection::default(),
            categories: CategorySection::default(),
            weights: WeightSection::default(),
            mi: MiSection::default(),
            estimate: EstimateSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            inputs: InputsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySection {
    /// Patch side for entropy estimation.
    pub patch_side: usize,
    pub bins: usize,
    pub log_base: f64,
}

impl Default for EntropySection {
    fn default() -> Self {
        Self {
            patch_side: 10,
            bins: 256,
            log_base: std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategorySection {
    pub t_lm: f64,
    pub t_mh: f64,
}

impl Default for CategorySection {
    fn default() -> Self {
        Self { t_lm: 2.0, t_mh: 4.0 }
    }
}

/// Which sampling weight map to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightScheme {
    Exponential { gamma: f64 },
    Piecewise { cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    #[serde(flatten)]
    pub scheme: WeightScheme,
}

impl Default for WeightSection {
    fn default() -> Self {
        Self {
            scheme: WeightScheme::Exponential { gamma: 0.3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiSection {
    /// Patch side for mutual information estimation.
    pub patch_side: usize,
    pub bins: usize,
}

impl Default for MiSection {
    fn default() -> Self {
        Self {
            patch_side: 10,
            bins: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorrespondenceMode {
    /// Ground-truth transforms from the synthetic generator.
    #[default]
    Oracle,
    /// Argmax matching with a briefly trained warmup encoder.
    Encoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub alpha_hat: f64,
    /// Key points per group on the reference image.
    pub key_points: usize,
    /// Patches per group used to evaluate candidate intensities.
    pub pool_size: usize,
    /// Monte-Carlo draws per (intensity, patch) evaluation.
    pub draws: usize,
    pub a_br_max: f64,
    pub a_ct_max: f64,
    pub grid_steps: usize,
    pub refine_passes: usize,
    pub correspondence: CorrespondenceMode,
    /// Training steps for the warmup encoder in encoder mode.
    pub warmup_steps: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            alpha_hat: 1.0,
            key_points: 16,
            pool_size: 16,
            draws: 16,
            a_br_max: 0.8,
            a_ct_max: 0.8,
            grid_steps: 50,
            refine_passes: 3,
            correspondence: CorrespondenceMode::Oracle,
            warmup_steps: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub arch: EncoderArch,
    pub temperature: f64,
    pub negatives: usize,
    pub batch_pixels: usize,
    pub steps: usize,
    pub step_size: f64,
    pub pairing: NegativePairing,
    /// Intensity used for every band when `adaptive` is off.
    pub fixed_aug: AugmentParams,
    /// Use the estimated per-band intensities.
    pub adaptive: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            arch: EncoderArch::default(),
            temperature: 0.1,
            negatives: 15,
            batch_pixels: 64,
            steps: 600,
            step_size: 0.5,
            pairing: NegativePairing::default(),
            fixed_aug: AugmentParams { a_br: 0.4, a_ct: 0.4 },
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub radii_mm: Vec<f64>,
    /// Corpus index of the one-shot template.
    pub template: usize,
    /// Trailing images held out of training and used as match targets.
    pub holdout: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            radii_mm: vec![2.0, 2.5, 3.0, 4.0],
            template: 0,
            holdout: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InputsSection {
    /// Corpus directory; defaults to `<out>/corpus`.
    pub corpus_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| PixinfoError::Config(format!("invalid config: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PixinfoError::Config(format!("cannot read {}: {}", path.display(), e)))?;
        Self::from_json(&text)
    }

    /// Canonical echo with every default materialized.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical echo; identifies a run setup.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(PixinfoError::Config(msg));
        if self.spacing_mm <= 0.0 {
            return fail(format!("spacing_mm must be > 0, got {}", self.spacing_mm));
        }
        if self.entropy.patch_side < 2 || self.entropy.bins < 2 {
            return fail("entropy.patch_side and entropy.bins must be >= 2".into());
        }
        if self.entropy.log_base <= 1.0 {
            return fail(format!(
                "entropy.log_base must be > 1, got {}",
                self.entropy.log_base
            ));
        }
        if !(0.0 <= self.categories.t_lm && self.categories.t_lm < self.categories.t_mh) {
            return fail(format!(
                "categories need 0 <= t_lm < t_mh, got ({}, {})",
                self.categories.t_lm, self.categories.t_mh
            ));
        }
        match self.weights.scheme {
            WeightScheme::Exponential { gamma } if gamma < 0.0 => {
                return fail(format!("weights.gamma must be >= 0, got {}", gamma));
            }
            WeightScheme::Piecewise { cutoff } if cutoff < 0.0 => {
                return fail(format!("weights.cutoff must be >= 0, got {}", cutoff));
            }
            _ => {}
        }
        if self.mi.patch_side < 2 || self.mi.bins < 2 {
            return fail("mi.patch_side and mi.bins must be >= 2".into());
        }
        if self.estimate.alpha_hat <= 0.0 {
            return fail(format!(
                "estimate.alpha_hat must be > 0, got {}",
                self.estimate.alpha_hat
            ));
        }
        if self.estimate.key_points == 0 || self.estimate.pool_size == 0 {
            return fail("estimate.key_points and estimate.pool_size must be >= 1".into());
        }
        if self.estimate.draws == 0 || self.estimate.grid_steps == 0 {
            return fail("estimate.draws and estimate.grid_steps must be >= 1".into());
        }
        AugmentParams::new(self.estimate.a_br_max, self.estimate.a_ct_max)
            .map_err(|e| PixinfoError::Config(format!("estimate search bounds: {}", e)))?;
        AugmentParams::new(self.train.fixed_aug.a_br, self.train.fixed_aug.a_ct)
            .map_err(|e| PixinfoError::Config(format!("train.fixed_aug: {}", e)))?;
        if self.train.temperature <= 0.0 {
            return fail(format!(
                "train.temperature must be > 0, got {}",
                self.train.temperature
            ));
        }
        if self.train.negatives == 0 || self.train.batch_pixels < self.train.negatives + 1 {
            return fail(format!(
                "train needs batch_pixels >= negatives + 1, got ({}, {})",
                self.train.batch_pixels, self.train.negatives
            ));
        }
        if self.train.step_size < 0.0 {
            return fail("train.step_size must be >= 0".into());
        }
        if self.eval.radii_mm.is_empty() || self.eval.radii_mm.iter().any(|r| *r <= 0.0) {
            return fail("eval.radii_mm must be non-empty positive radii".into());
        }
        if self.eval.holdout == 0 || self.eval.holdout + 1 >= self.synth.subjects {
            return fail(format!(
                "eval.holdout ({}) must leave at least 2 training subjects of {}",
                self.eval.holdout, self.synth.subjects
            ));
        }
        if self.eval.template >= self.synth.subjects - self.eval.holdout {
            return fail(format!(
                "eval.template ({}) must be a training subject",
                self.eval.template
            ));
        }
        Ok(())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

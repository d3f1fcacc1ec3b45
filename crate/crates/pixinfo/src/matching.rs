//! Template-based local feature matching and MRE/SDR evaluation.
//!
//! A trained encoder turns both template and target into per-pixel feature
//! fields; each template landmark is matched to the target pixel whose
//! embedding has the highest cosine similarity against the landmark's
//! embedding. Evaluation reports mean radial error in millimetres and the
//! detection rate within a set of radii.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Correspondence;
use crate::clcore::Encoder;
use crate::error::{PixinfoError, Result};
use crate::fsio::write_atomic;
use crate::imaging::{extract_patch, patch_margin, GrayImage};

/// An ordered set of sub-pixel landmark coordinates; index is identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<(f64, f64)>,
    pub spacing: f64,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>, spacing: f64) -> Self {
        Self { points, spacing }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest integer pixel for each landmark.
    pub fn rounded(&self) -> Vec<(usize, usize)> {
        self.points
            .iter()
            .map(|&(r, c)| (r.round().max(0.0) as usize, c.round().max(0.0) as usize))
            .collect()
    }

    /// Landmark files are JSON arrays of `[row, col]` pairs.
    pub fn read_json(path: &Path, spacing: f64) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let points: Vec<(f64, f64)> = serde_json::from_str(&text)?;
        Ok(Self { points, spacing })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string(&self.points)?.as_bytes())
    }
}

/// Unit-norm embeddings over the valid interior of one image.
#[derive(Debug, Clone)]
pub struct FeatureField {
    width: usize,
    height: usize,
    dim: usize,
    margin: usize,
    data: Vec<f64>,
}

impl FeatureField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        row >= self.margin
            && col >= self.margin
            && row + self.margin < self.height
            && col + self.margin < self.width
    }

    /// Embedding at a pixel, or `None` in the border band.
    pub fn get(&self, row: usize, col: usize) -> Option<&[f64]> {
        if self.is_valid(row, col) {
            let start = (row * self.width + col) * self.dim;
            Some(&self.data[start..start + self.dim])
        } else {
            None
        }
    }

    /// Scale every embedding by a constant; used to check that matching is
    /// invariant to the embedding scale.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Pixel with the highest cosine similarity to the query, ties broken
    /// by smallest (row, col).
    pub fn argmax_similarity(&self, query: &[f64]) -> (usize, usize) {
        let qnorm = query.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let mut best = (self.margin, self.margin);
        let mut best_sim = f64::NEG_INFINITY;
        for row in self.margin..self.height - self.margin {
            for col in self.margin..self.width - self.margin {
                let start = (row * self.width + col) * self.dim;
                let f = &self.data[start..start + self.dim];
                let mut dot = 0.0;
                let mut fsq = 0.0;
                for (a, b) in query.iter().zip(f) {
                    dot += a * b;
                    fsq += b * b;
                }
                let sim = dot / (qnorm * fsq.sqrt().max(1e-300));
                if sim > best_sim {
                    best_sim = sim;
                    best = (row, col);
                }
            }
        }
        best
    }
}

/// Embed every valid pixel of an image; the border band where the encoder
/// patch does not fit is excluded.
pub fn feature_field(enc: &Encoder, img: &GrayImage) -> Result<FeatureField> {
    let side = enc.input_side();
    if img.width() < side || img.height() < side {
        return Err(PixinfoError::TooSmall {
            width: img.width(),
            height: img.height(),
            side,
        });
    }
    let margin = patch_margin(side);
    let width = img.width();
    let height = img.height();
    let dim = enc.embed_dim();

    let data: Vec<f64> = (0..height)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut row_data = vec![0.0; width * dim];
            if row >= margin && row + margin < height {
                for col in margin..width - margin {
                    let patch = extract_patch(img, (row, col), side)
                        .expect("interior pixel hosts a full patch");
                    let emb = enc.encode(&patch).expect("side matches encoder");
                    row_data[col * dim..(col + 1) * dim].copy_from_slice(&emb);
                }
            }
            row_data.into_iter()
        })
        .collect();

    Ok(FeatureField {
        width,
        height,
        dim,
        margin,
        data,
    })
}

/// Match template landmarks into a target image by exhaustive cosine argmax.
pub fn match_landmarks(
    template: &GrayImage,
    landmarks: &LandmarkSet,
    target: &GrayImage,
    enc: &Encoder,
) -> Result<LandmarkSet> {
    let side = enc.input_side();
    let margin = patch_margin(side);
    let field = feature_field(enc, target)?;

    let queries: Vec<Vec<f64>> = landmarks
        .rounded()
        .into_iter()
        .map(|(row, col)| {
            let inside = row >= margin
                && col >= margin
                && row + margin < template.height()
                && col + margin < template.width();
            if !inside {
                return Err(PixinfoError::Border {
                    row,
                    col,
                    side,
                    width: template.width(),
                    height: template.height(),
                });
            }
            enc.encode(&extract_patch(template, (row, col), side)?)
        })
        .collect::<Result<_>>()?;

    let points: Vec<(f64, f64)> = queries
        .par_iter()
        .map(|q| {
            let (row, col) = field.argmax_similarity(q);
            (row as f64, col as f64)
        })
        .collect();

    Ok(LandmarkSet {
        points,
        spacing: target.spacing(),
    })
}

/// One detection-rate entry of a match report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrEntry {
    pub radius_mm: f64,
    pub fraction: f64,
}

/// Predicted landmarks with their radial errors and summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub predicted: Vec<(f64, f64)>,
    pub errors_mm: Vec<f64>,
    pub mre_mm: f64,
    pub sdr: Vec<SdrEntry>,
}

impl MatchReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Console table with MRE and one SDR column per radius.
    pub fn table(&self) -> String {
        let mut head = String::from("MRE (mm)");
        let mut row = format!("{:.4}", self.mre_mm);
        for e in &self.sdr {
            head.push_str(&format!("  SDR@{}mm", e.radius_mm));
            row.push_str(&format!("  {:.2}%", e.fraction * 100.0));
        }
        format!("{}\n{}\n", head, row)
    }
}

/// Radial errors, MRE, and SDR of predictions against ground truth.
pub fn compute_metrics(
    predicted: &LandmarkSet,
    truth: &LandmarkSet,
    radii_mm: &[f64],
) -> Result<MatchReport> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(PixinfoError::Shape {
            context: "landmark set lengths",
            left: predicted.len().to_string(),
            right: truth.len().to_string(),
        });
    }
    if predicted.spacing != truth.spacing {
        return Err(PixinfoError::Parameter(format!(
            "spacing mismatch: {} vs {}",
            predicted.spacing, truth.spacing
        )));
    }
    let spacing = truth.spacing;
    let errors_mm: Vec<f64> = predicted
        .points
        .iter()
        .zip(&truth.points)
        .map(|(&(pr, pc), &(tr, tc))| spacing * ((pr - tr).powi(2) + (pc - tc).powi(2)).sqrt())
        .collect();
    let mre_mm = errors_mm.iter().sum::<f64>() / errors_mm.len() as f64;
    let sdr = radii_mm
        .iter()
        .map(|&radius_mm| SdrEntry {
            radius_mm,
            fraction: errors_mm.iter().filter(|&&e| e <= radius_mm).count() as f64
                / errors_mm.len() as f64,
        })
        .collect();
    Ok(MatchReport {
        predicted: predicted.points.clone(),
        errors_mm,
        mre_mm,
        sdr,
    })
}

/// Correspondence through a warmup encoder: a key point on the reference
/// image resolves to the argmax-similarity pixel in the other image.
pub struct EncoderCorrespondence<'a> {
    encoder: &'a Encoder,
    reference: &'a GrayImage,
    fields: Vec<FeatureField>,
}

impl<'a> EncoderCorrespondence<'a> {
    /// Precompute feature fields for every non-reference image.
    pub fn new(encoder: &'a Encoder, images: &'a [GrayImage]) -> Result<Self> {
        if images.len() < 2 {
            return Err(PixinfoError::Parameter(
                "encoder correspondence needs at least 2 images".into(),
            ));
        }
        let fields = images[1..]
            .iter()
            .map(|img| feature_field(encoder, img))
            .collect::<Result<_>>()?;
        Ok(Self {
            encoder,
            reference: &images[0],
            fields,
        })
    }
}

impl Correspondence for EncoderCorrespondence<'_> {
    fn resolve(&self, key_point: (usize, usize), image_index: usize) -> Result<(usize, usize)> {
        let field = self
            .fields
            .get(image_index.wrapping_sub(1))
            .ok_or_else(|| PixinfoError::Correspondence {
                row: key_point.0,
                col: key_point.1,
                image: image_index,
            })?;
        let patch = extract_patch(self.reference, key_point, self.encoder.input_side()).map_err(
            |_| PixinfoError::Correspondence {
                row: key_point.0,
                col: key_point.1,
                image: 0,
            },
        )?;
        let query = self.encoder.encode(&patch)?;
        Ok(field.argmax_similarity(&query))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clcore::EncoderArch;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
        let mut rng = rng_from_seed(seed);
        let data = (0..width * height).map(|_| rng.gen_range(0.0..1.0)).collect();
        GrayImage::from_data(width, height, data).unwrap()
    }

    fn small_encoder(seed: u64) -> Encoder {
        Encoder::new(
            EncoderArch {
                input_side: 7,
                hidden: vec![16],
                embed_dim: 8,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn field_on_constant_image_is_constant() {
        let enc = small_encoder(1);
        let img = GrayImage::from_data(20, 20, vec![0.6; 400]).unwrap();
        let field = feature_field(&enc, &img).unwrap();
        let reference = field.get(10, 10).unwrap().to_vec();
        for row in 3..17 {
            for col in 3..17 {
                assert_eq!(field.get(row, col).unwrap(), &reference[..]);
            }
        }
        assert!(field.get(0, 0).is_none());
    }

    #[test]
    fn field_matches_pointwise_encoding() {
        let enc = small_encoder(2);
        let img = noise_image(24, 20, 5);
        let field = feature_field(&enc, &img).unwrap();
        for &(row, col) in &[(3, 3), (10, 12), (16, 20)] {
            let patch = extract_patch(&img, (row, col), 7).unwrap();
            let direct = enc.encode(&patch).unwrap();
            assert_eq!(field.get(row, col).unwrap(), &direct[..]);
        }
    }

    #[test]
    fn matching_identity_target_recovers_landmarks() {
        let enc = small_encoder(3);
        let img = noise_image(30, 30, 8);
        let landmarks = LandmarkSet::new(vec![(10.0, 10.0), (15.0, 20.0), (22.0, 7.0)], 1.0);
        let predicted = match_landmarks(&img, &landmarks, &img, &enc).unwrap();
        assert_eq!(predicted.points, landmarks.points);
    }

    #[test]
    fn matching_rejects_border_landmark() {
        let enc = small_encoder(4);
        let img = noise_image(30, 30, 9);
        let landmarks = LandmarkSet::new(vec![(1.0, 10.0)], 1.0);
        assert!(matches!(
            match_landmarks(&img, &landmarks, &img, &enc),
            Err(PixinfoError::Border { .. })
        ));
    }

    #[test]
    fn untrained_encoder_gives_valid_coordinates() {
        let enc = small_encoder(5);
        let template = noise_image(30, 30, 10);
        let target = noise_image(30, 30, 11);
        let landmarks = LandmarkSet::new(vec![(12.0, 12.0), (20.0, 18.0)], 1.0);
        let predicted = match_landmarks(&template, &landmarks, &target, &enc).unwrap();
        for &(r, c) in &predicted.points {
            assert!(r >= 3.0 && r < 27.0);
            assert!(c >= 3.0 && c < 27.0);
        }
    }

    #[test]
    fn argmax_is_scale_invariant_and_tie_breaks_lexicographically() {
        let enc = small_encoder(6);
        let noise = noise_image(26, 26, 12);
        let field = feature_field(&enc, &noise).unwrap();
        let query = field.get(13, 14).unwrap().to_vec();
        let base = field.argmax_similarity(&query);
        assert_eq!(base, (13, 14));
        assert_eq!(field.scaled(3.5).argmax_similarity(&query), base);

        // All-equal field: smallest (row, col) wins.
        let constant = GrayImage::from_data(20, 20, vec![0.5; 400]).unwrap();
        let cfield = feature_field(&enc, &constant).unwrap();
        let q = cfield.get(10, 10).unwrap().to_vec();
        assert_eq!(cfield.argmax_similarity(&q), (3, 3));
    }

    #[test]
    fn metrics_exact_match() {
        let truth = LandmarkSet::new(vec![(5.0, 5.0), (8.0, 9.0)], 1.0);
        let report = compute_metrics(&truth, &truth, &[2.0, 2.5, 3.0, 4.0]).unwrap();
        assert_eq!(report.mre_mm, 0.0);
        assert!(report.sdr.iter().all(|e| e.fraction == 1.0));
    }

    #[test]
    fn metrics_single_landmark_three_pixels_off() {
        let truth = LandmarkSet::new(vec![(10.0, 10.0)], 1.0);
        let pred = LandmarkSet::new(vec![(13.0, 10.0)], 1.0);
        let report = compute_metrics(&pred, &truth, &[2.0, 3.0]).unwrap();
        assert!((report.mre_mm - 3.0).abs() < 1e-12);
        assert_eq!(report.sdr[0].fraction, 0.0);
        assert_eq!(report.sdr[1].fraction, 1.0);
    }

    #[test]
    fn metrics_two_landmarks_hand_computed() {
        let truth = LandmarkSet::new(vec![(10.0, 10.0), (20.0, 20.0)], 1.0);
        let pred = LandmarkSet::new(vec![(10.0, 11.0), (20.0, 25.0)], 1.0);
        let report = compute_metrics(&pred, &truth, &[2.0, 4.0]).unwrap();
        assert!((report.mre_mm - 3.0).abs() < 1e-12);
        assert_eq!(report.sdr[0].fraction, 0.5);
        assert_eq!(report.sdr[1].fraction, 0.5);
    }

    #[test]
    fn metrics_scale_with_spacing() {
        let truth = LandmarkSet::new(vec![(10.0, 10.0)], 0.5);
        let pred = LandmarkSet::new(vec![(13.0, 14.0)], 0.5);
        let report = compute_metrics(&pred, &truth, &[2.0, 2.5, 3.0]).unwrap();
        assert!((report.mre_mm - 2.5).abs() < 1e-12);
        assert_eq!(report.sdr[0].fraction, 0.0);
        assert_eq!(report.sdr[1].fraction, 1.0);
    }

    #[test]
    fn metrics_reject_mismatched_lengths_and_spacing() {
        let a = LandmarkSet::new(vec![(1.0, 1.0)], 1.0);
        let b = LandmarkSet::new(vec![(1.0, 1.0), (2.0, 2.0)], 1.0);
        assert!(compute_metrics(&a, &b, &[2.0]).is_err());
        let c = LandmarkSet::new(vec![(1.0, 1.0)], 0.5);
        assert!(compute_metrics(&a, &c, &[2.0]).is_err());
    }

    #[test]
    fn sdr_is_monotone_in_radius() {
        let mut rng = rng_from_seed(33);
        let truth = LandmarkSet::new(
            (0..20).map(|_| (rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0))).collect(),
            1.0,
        );
        let pred = LandmarkSet::new(
            truth
                .points
                .iter()
                .map(|&(r, c)| (r + rng.gen_range(-4.0..4.0), c + rng.gen_range(-4.0..4.0)))
                .collect(),
            1.0,
        );
        let report = compute_metrics(&pred, &truth, &[1.0, 2.0, 2.5, 3.0, 4.0, 8.0]).unwrap();
        for pair in report.sdr.windows(2) {
            assert!(pair[0].fraction <= pair[1].fraction);
        }
    }

    #[test]
    fn landmark_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lms.json");
        let lms = LandmarkSet::new(vec![(10.5, 20.25), (3.0, 4.0)], 1.0);
        lms.write_json(&path).unwrap();
        let back = LandmarkSet::read_json(&path, 1.0).unwrap();
        assert_eq!(back, lms);
    }

    #[test]
    fn encoder_correspondence_resolves_translated_noise() {
        // Target is the template rolled by (2, 3) on a torus, so every patch
        // appears exactly once; the argmax must find the rolled position.
        let enc = small_encoder(7);
        let template = noise_image(28, 28, 40);
        let (dr, dc) = (2usize, 3usize);
        let mut data = vec![0.0; 28 * 28];
        for row in 0..28 {
            for col in 0..28 {
                data[((row + dr) % 28) * 28 + (col + dc) % 28] = template.get(row, col);
            }
        }
        let target = GrayImage::from_data(28, 28, data).unwrap();
        let images = vec![template.clone(), target];
        let corr = EncoderCorrespondence::new(&enc, &images).unwrap();
        // Stay away from the wrap seam.
        for &(r, c) in &[(8usize, 8usize), (12, 15), (18, 10)] {
            let resolved = corr.resolve((r, c), 1).unwrap();
            assert_eq!(resolved, (r + dr, c + dc));
        }
    }
}

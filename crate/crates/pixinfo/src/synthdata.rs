//! Synthetic corpora with known landmarks and exact cross-image
//! correspondences.
//!
//! A base scene of anti-aliased shapes is rendered once per subject through
//! a seeded affine deformation; the deformation itself is the ground-truth
//! correspondence, so every pipeline stage can be verified against it.
//! Landmarks are shape corners and edge midpoints, which sit on intensity
//! edges and therefore carry entropy the way real anatomical landmarks do.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Correspondence;
use crate::error::{PixinfoError, Result};
use crate::fsio::write_atomic;
use crate::imaging::{io as imgio, GrayImage};
use crate::matching::LandmarkSet;
use crate::rng::{derive_seed, rng_from_seed};

/// 2D affine map on (row, col) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    /// Row-major 2x2 linear part.
    pub linear: [f64; 4],
    pub translation: [f64; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            linear: [1.0, 0.0, 0.0, 1.0],
            translation: [0.0, 0.0],
        }
    }

    /// Rotation (degrees) and isotropic scale about `center`, then a shift.
    pub fn about_center(
        center: (f64, f64),
        rotation_deg: f64,
        scale: f64,
        shift: (f64, f64),
    ) -> Self {
        let theta = rotation_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        let linear = [scale * cos, -scale * sin, scale * sin, scale * cos];
        // p' = L (p - center) + center + shift
        let translation = [
            center.0 + shift.0 - (linear[0] * center.0 + linear[1] * center.1),
            center.1 + shift.1 - (linear[2] * center.0 + linear[3] * center.1),
        ];
        Self { linear, translation }
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.linear[0] * p.0 + self.linear[1] * p.1 + self.translation[0],
            self.linear[2] * p.0 + self.linear[3] * p.1 + self.translation[1],
        )
    }

    pub fn inverse(&self) -> Self {
        let [a, b, c, d] = self.linear;
        let det = a * d - b * c;
        let linear = [d / det, -b / det, -c / det, a / det];
        let translation = [
            -(linear[0] * self.translation[0] + linear[1] * self.translation[1]),
            -(linear[2] * self.translation[0] + linear[3] * self.translation[1]),
        ];
        Self { linear, translation }
    }
}

/// Scene background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Background {
    Flat { level: f64 },
    Gradient { start: f64, end: f64 },
    /// Flat level plus per-subject i.i.d. Gaussian sensor noise.
    Noise { level: f64, sigma: f64 },
}

/// Affine deformation ranges between subjects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationRanges {
    pub rotation_deg: f64,
    pub scale_delta: f64,
    pub translation_px: f64,
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub size: usize,
    pub subjects: usize,
    pub shapes: usize,
    pub background: Background,
    pub deformation: DeformationRanges,
    /// Minimum landmark distance from every border, in every subject.
    pub landmark_margin: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            size: 64,
            subjects: 10,
            shapes: 3,
            background: Background::Noise {
                level: 0.3,
                sigma: 0.008,
            },
            deformation: DeformationRanges {
                rotation_deg: 8.0,
                scale_delta: 0.06,
                translation_px: 3.0,
            },
            landmark_margin: 12,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.subjects < 2 {
            return Err(PixinfoError::Parameter(
                "corpus needs at least 2 subjects".into(),
            ));
        }
        if self.shapes == 0 {
            return Err(PixinfoError::Parameter("corpus needs at least 1 shape".into()));
        }
        if self.size < 2 * self.landmark_margin + 8 {
            return Err(PixinfoError::Parameter(format!(
                "image size {} too small for landmark margin {}",
                self.size, self.landmark_margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Fill {
    Flat(f64),
    /// Piecewise-constant cells of hashed intensities in [lo, hi].
    Speckle { lo: f64, hi: f64, cell: f64, seed: u64 },
}

impl Fill {
    fn eval(&self, p: (f64, f64)) -> f64 {
        match *self {
            Fill::Flat(level) => level,
            Fill::Speckle { lo, hi, cell, seed } => {
                let i = (p.0 / cell).floor() as i64 as u64;
                let j = (p.1 / cell).floor() as i64 as u64;
                let h = derive_seed(seed, &[i, j]);
                lo + (hi - lo) * ((h >> 11) as f64 / (1u64 << 53) as f64)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Geometry {
    /// Convex polygon, any winding.
    Polygon(Vec<(f64, f64)>),
    Ellipse {
        center: (f64, f64),
        radii: (f64, f64),
    },
}

impl Geometry {
    fn contains(&self, p: (f64, f64)) -> bool {
        match self {
            Geometry::Polygon(vertices) => {
                let mut sign = 0i8;
                let n = vertices.len();
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                    let s = if cross > 0.0 {
                        1
                    } else if cross < 0.0 {
                        -1
                    } else {
                        0
                    };
                    if s != 0 {
                        if sign == 0 {
                            sign = s;
                        } else if sign != s {
                            return false;
                        }
                    }
                }
                true
            }
            Geometry::Ellipse { center, radii } => {
                let dr = (p.0 - center.0) / radii.0;
                let dc = (p.1 - center.1) / radii.1;
                dr * dr + dc * dc <= 1.0
            }
        }
    }

    /// Corners plus edge midpoints; ellipses contribute none.
    fn landmarks(&self) -> Vec<(f64, f64)> {
        match self {
            Geometry::Polygon(vertices) => {
                let n = vertices.len();
                let mut out = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    out.push(a);
                    out.push(((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0));
                }
                out
            }
            Geometry::Ellipse { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct Shape {
    geometry: Geometry,
    fill: Fill,
}

/// The deterministic base scene all subjects are views of.
struct Scene {
    background: Background,
    shapes: Vec<Shape>,
    size: usize,
}

impl Scene {
    fn build(spec: &SynthSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(seed, &[0x5c]));
        let size = spec.size as f64;
        // Landmarks must survive the worst-case deformation; keep shape
        // geometry well inside the frame.
        let worst = spec.deformation.translation_px
            + 0.5 * size
                * (spec.deformation.scale_delta
                    + spec.deformation.rotation_deg.to_radians().sin().abs());
        let inner = spec.landmark_margin as f64 + worst + 1.0;
        let lo = inner;
        let hi = size - inner;
        let span = (hi - lo).max(4.0);

        let mut shapes = Vec::with_capacity(spec.shapes);
        for idx in 0..spec.shapes {
            // Spread centers over a coarse grid cell per shape.
            let cells = (spec.shapes as f64).sqrt().ceil() as usize;
            let cell_r = idx / cells;
            let cell_c = idx % cells;
            let cr = lo
                + span * (cell_r as f64 + 0.3 + 0.4 * rng.gen::<f64>()) / cells as f64;
            let cc = lo
                + span * (cell_c as f64 + 0.3 + 0.4 * rng.gen::<f64>()) / cells as f64;
            let radius = rng.gen_range(0.28..0.42) * span / cells as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);

            let polygon = |sides: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                (0..sides)
                    .map(|v| {
                        let angle = phase
                            + std::f64::consts::TAU * v as f64 / sides as f64
                            + rng.gen_range(-0.2..0.2);
                        let rad = radius * rng.gen_range(0.85..1.15);
                        (cr + rad * angle.sin(), cc + rad * angle.cos())
                    })
                    .collect::<Vec<_>>()
            };

            let shape = match idx % 3 {
                0 => Shape {
                    geometry: Geometry::Polygon(polygon(4, &mut rng)),
                    fill: Fill::Flat(if idx % 2 == 0 { 0.85 } else { 0.6 }),
                },
                1 => Shape {
                    geometry: Geometry::Polygon(polygon(3, &mut rng)),
                    fill: Fill::Speckle {
                        lo: 0.15,
                        hi: 0.95,
                        cell: 1.25,
                        seed: derive_seed(seed, &[0x7e, idx as u64]),
                    },
                },
                _ => Shape {
                    geometry: Geometry::Ellipse {
                        center: (cr, cc),
                        radii: (radius, radius * rng.gen_range(0.6..0.9)),
                    },
                    fill: Fill::Flat(0.75),
                },
            };
            shapes.push(shape);
        }
        Self {
            background: spec.background,
            shapes,
            size: spec.size,
        }
    }

    fn eval(&self, p: (f64, f64)) -> f64 {
        let mut value = match self.background {
            Background::Flat { level } | Background::Noise { level, .. } => level,
            Background::Gradient { start, end } => {
                let t = (p.0 / (self.size as f64 - 1.0)).clamp(0.0, 1.0);
                start + (end - start) * t
            }
        };
        for shape in &self.shapes {
            if shape.geometry.contains(p) {
                value = shape.fill.eval(p);
            }
        }
        value.clamp(0.0, 1.0)
    }

    fn landmarks(&self) -> Vec<(f64, f64)> {
        self.shapes
            .iter()
            .flat_map(|s| s.geometry.landmarks())
            .collect()
    }
}

/// Images, per-image landmarks, and the generating transforms.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub images: Vec<GrayImage>,
    pub landmarks: Vec<LandmarkSet>,
    /// Transform from image-0 coordinates into each image (index 0 is
    /// identity).
    pub transforms: Vec<AffineTransform>,
    pub spec: SynthSpec,
}

impl SynthCorpus {
    /// Ground-truth correspondence backed by the generating transforms.
    pub fn oracle(&self) -> OracleCorrespondence {
        OracleCorrespondence {
            transforms: self.transforms.clone(),
            width: self.images[0].width(),
            height: self.images[0].height(),
        }
    }

    /// Write images as PGM plus a JSON manifest.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut names = Vec::with_capacity(self.images.len());
        for (i, img) in self.images.iter().enumerate() {
            let name = format!("subject_{:03}.pgm", i);
            imgio::write_pgm(&dir.join(&name), img)?;
            names.push(name);
        }
        let manifest = CorpusManifest {
            spec: self.spec.clone(),
            images: names,
            landmarks: self.landmarks.iter().map(|l| l.points.clone()).collect(),
            transforms: self.transforms.clone(),
            spacing: self.landmarks[0].spacing,
        };
        write_atomic(
            &dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)?;
        let images = manifest
            .images
            .iter()
            .map(|name| Ok(imgio::read_pgm(&dir.join(name))?.with_spacing(manifest.spacing)))
            .collect::<Result<Vec<_>>>()?;
        let landmarks = manifest
            .landmarks
            .into_iter()
            .map(|points| LandmarkSet::new(points, manifest.spacing))
            .collect();
        Ok(Self {
            images,
            landmarks,
            transforms: manifest.transforms,
            spec: manifest.spec,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    spec: SynthSpec,
    images: Vec<String>,
    landmarks: Vec<Vec<(f64, f64)>>,
    transforms: Vec<AffineTransform>,
    spacing: f64,
}

/// Exact correspondence from the generating affine transforms.
pub struct OracleCorrespondence {
    transforms: Vec<AffineTransform>,
    width: usize,
    height: usize,
}

impl Correspondence for OracleCorrespondence {
    fn resolve(&self, key_point: (usize, usize), image_index: usize) -> Result<(usize, usize)> {
        let transform = self.transforms.get(image_index).ok_or_else(|| {
            PixinfoError::Correspondence {
                row: key_point.0,
                col: key_point.1,
                image: image_index,
            }
        })?;
        let (r, c) = transform.apply((key_point.0 as f64, key_point.1 as f64));
        let (r, c) = (r.round(), c.round());
        if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
            return Err(PixinfoError::Correspondence {
                row: key_point.0,
                col: key_point.1,
                image: image_index,
            });
        }
        Ok((r as usize, c as usize))
    }
}

/// Render the corpus a spec describes.
///
/// If a deformation pushes any landmark out of the margin the whole attempt
/// is regenerated with a fresh sub-seed, at most 100 times.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    for attempt in 0..100u64 {
        let attempt_seed = derive_seed(spec.seed, &[0xa0, attempt]);
        if let Some(corpus) = try_generate(spec, attempt_seed) {
            return Ok(corpus);
        }
    }
    Err(PixinfoError::Parameter(
        "deformation ranges keep pushing landmarks out of the margin; shrink them or the margin"
            .into(),
    ))
}

fn try_generate(spec: &SynthSpec, attempt_seed: u64) -> Option<SynthCorpus> {
    let scene = Scene::build(spec, attempt_seed);
    let scene_landmarks = scene.landmarks();
    let center = ((spec.size - 1) as f64 / 2.0, (spec.size - 1) as f64 / 2.0);

    let mut transforms = vec![AffineTransform::identity()];
    for subject in 1..spec.subjects {
        let mut rng = rng_from_seed(derive_seed(attempt_seed, &[0xd0, subject as u64]));
        let d = &spec.deformation;
        let rotation = if d.rotation_deg > 0.0 {
            rng.gen_range(-d.rotation_deg..d.rotation_deg)
        } else {
            0.0
        };
        let scale = if d.scale_delta > 0.0 {
            rng.gen_range(1.0 - d.scale_delta..1.0 + d.scale_delta)
        } else {
            1.0
        };
        let shift = if d.translation_px > 0.0 {
            (
                rng.gen_range(-d.translation_px..d.translation_px),
                rng.gen_range(-d.translation_px..d.translation_px),
            )
        } else {
            (0.0, 0.0)
        };
        transforms.push(AffineTransform::about_center(center, rotation, scale, shift));
    }

    // Every landmark must stay inside the margin in every subject.
    let margin = spec.landmark_margin as f64;
    let max_coord = (spec.size - 1) as f64 - margin;
    for transform in &transforms {
        for &lm in &scene_landmarks {
            let (r, c) = transform.apply(lm);
            if r < margin || c < margin || r > max_coord || c > max_coord {
                return None;
            }
        }
    }

    let images: Vec<GrayImage> = (0..spec.subjects)
        .into_par_iter()
        .map(|subject| render_subject(spec, &scene, &transforms[subject], attempt_seed, subject))
        .collect();
    let landmarks = transforms
        .iter()
        .map(|t| {
            LandmarkSet::new(
                scene_landmarks.iter().map(|&lm| t.apply(lm)).collect(),
                1.0,
            )
        })
        .collect();

    Some(SynthCorpus {
        images,
        landmarks,
        transforms,
        spec: spec.clone(),
    })
}

fn render_subject(
    spec: &SynthSpec,
    scene: &Scene,
    transform: &AffineTransform,
    attempt_seed: u64,
    subject: usize,
) -> GrayImage {
    let size = spec.size;
    let inverse = transform.inverse();
    let mut data = Vec::with_capacity(size * size);
    // 3x3 supersampling for anti-aliased edges.
    const SS: usize = 3;
    let offsets: Vec<f64> = (0..SS).map(|i| (i as f64 + 0.5) / SS as f64 - 0.5).collect();
    for row in 0..size {
        for col in 0..size {
            let mut acc = 0.0;
            for &dr in &offsets {
                for &dc in &offsets {
                    let p = inverse.apply((row as f64 + dr, col as f64 + dc));
                    acc += scene.eval(p);
                }
            }
            data.push(acc / (SS * SS) as f64);
        }
    }
    if let Background::Noise { sigma, .. } = spec.background {
        if sigma > 0.0 {
            let mut rng = rng_from_seed(derive_seed(attempt_seed, &[0x9e, subject as u64]));
            for v in &mut data {
                // Box-Muller.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                *v = (*v + sigma * z).clamp(0.0, 1.0);
            }
        }
    }
    GrayImage::from_data(size, size, data).expect("rendered values stay in range")
}

//! Patch-embedding encoder: a small fully connected network with ramp
//! nonlinearities on hidden layers and a unit-normalized output.
//!
//! Forward passes cache per-layer activations so the matching backward pass
//! can produce exact parameter gradients.

use rand::Rng;

use crate::error::{PixinfoError, Result};
use crate::imaging::Patch;
use crate::rng::rng_from_seed;

const NORM_FLOOR: f64 = 1e-12;

/// One dense layer: `output = W x + b`, weights stored row-major
/// `(outputs x inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Network shape: input patch side and the dense layer widths after the
/// flattened input.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderArch {
    pub input_side: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl EncoderArch {
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_side * self.input_side];
        widths.extend(&self.hidden);
        widths.push(self.embed_dim);
        widths
    }
}

impl Default for EncoderArch {
    fn default() -> Self {
        Self {
            input_side: 15,
            hidden: vec![128, 128],
            embed_dim: 32,
        }
    }
}

/// Patch encoder with explicit weights; outputs are unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    arch: EncoderArch,
    layers: Vec<Layer>,
}

/// Cached activations from one forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Layer inputs: x0 (flattened patch), then each post-activation.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
    /// Pre-normalization output and its norm.
    raw_out: Vec<f64>,
    norm: f64,
    /// Normalized embedding.
    pub embedding: Vec<f64>,
}

/// Parameter gradients aligned with an encoder's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(enc: &Encoder) -> Self {
        Self {
            weights: enc.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: enc.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().flatten() {
            *w *= factor;
        }
        for b in self.biases.iter_mut().flatten() {
            *b *= factor;
        }
    }
}

impl Encoder {
    /// Initialize with uniform Xavier weights from a seed.
    pub fn new(arch: EncoderArch, seed: u64) -> Result<Self> {
        if arch.input_side == 0 || arch.embed_dim == 0 {
            return Err(PixinfoError::Parameter(
                "encoder needs non-zero input side and embedding dim".into(),
            ));
        }
        let widths = arch.layer_widths();
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let bound = (6.0 / (inputs + outputs) as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                biases: vec![0.0; outputs],
            });
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &EncoderArch {
        &self.arch
    }

    pub fn input_side(&self) -> usize {
        self.arch.input_side
    }

    pub fn embed_dim(&self) -> usize {
        self.arch.embed_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters flattened in layer order, weights before biases.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Restore parameters from the flat layout of [`Self::flat_parameters`].
    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(PixinfoError::Shape {
                context: "flat parameter length",
                left: self.parameter_count().to_string(),
                right: flat.len().to_string(),
            });
        }
        let mut pos = 0;
        for layer in &mut self.layers {
            layer.weights.copy_from_slice(&flat[pos..pos + layer.weights.len()]);
            pos += layer.weights.len();
            layer.biases.copy_from_slice(&flat[pos..pos + layer.biases.len()]);
            pos += layer.biases.len();
        }
        Ok(())
    }

    /// Forward pass keeping the activation trace for backprop.
    pub fn forward_traced(&self, patch: &Patch) -> Result<ForwardTrace> {
        if patch.side() != self.arch.input_side {
            return Err(PixinfoError::Shape {
                context: "encoder input side",
                left: self.arch.input_side.to_string(),
                right: patch.side().to_string(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = patch.data().to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            inputs.push(x.clone());
            let mut z = Vec::new();
            layer.forward(&x, &mut z);
            pre.push(z.clone());
            x = if idx < last {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z
            };
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
        let embedding = x.iter().map(|v| v / norm).collect();
        Ok(ForwardTrace {
            inputs,
            pre,
            raw_out: x,
            norm,
            embedding,
        })
    }

    /// Embed a patch as a unit vector.
    pub fn encode(&self, patch: &Patch) -> Result<Vec<f64>> {
        Ok(self.forward_traced(patch)?.embedding)
    }

    /// Backpropagate a cotangent on the normalized embedding, accumulating
    /// parameter gradients into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, grad_embedding: &[f64], grads: &mut Gradients) {
        // Through the normalization: y = r / |r| gives
        // dL/dr = (g - (g . y) y) / |r|.
        let dot: f64 = grad_embedding
            .iter()
            .zip(&trace.embedding)
            .map(|(g, y)| g * y)
            .sum();
        let mut delta: Vec<f64> = grad_embedding
            .iter()
            .zip(&trace.embedding)
            .map(|(g, y)| (g - dot * y) / trace.norm)
            .collect();

        let last = self.layers.len() - 1;
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            if idx < last {
                for (d, z) in delta.iter_mut().zip(&trace.pre[idx]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[idx];
            let gw = &mut grads.weights[idx];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                grads.biases[idx][o] += d;
            }
            if idx > 0 {
                let mut next = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += d * w;
                        }
                    }
                }
                delta = next;
            }
        }
    }

    /// One plain gradient-descent step.
    pub fn apply_gradients(&mut self, grads: &Gradients, step_size: f64) {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= step_size * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= step_size * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_patch(side: usize, seed: u64) -> Patch {
        let mut rng = rng_from_seed(seed);
        Patch::from_data(side, (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap()
    }

    fn small_arch() -> EncoderArch {
        EncoderArch {
            input_side: 3,
            hidden: vec![8],
            embed_dim: 4,
        }
    }

    #[test]
    fn embedding_is_unit_norm() {
        let enc = Encoder::new(EncoderArch::default(), 3).unwrap();
        for seed in 0..10 {
            let e = enc.encode(&noise_patch(15, seed)).unwrap();
            let norm: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let enc = Encoder::new(small_arch(), 5).unwrap();
        let p = noise_patch(3, 1);
        assert_eq!(enc.encode(&p).unwrap(), enc.encode(&p).unwrap());
    }

    #[test]
    fn fresh_encoder_does_not_collapse() {
        let enc = Encoder::new(EncoderArch::default(), 9).unwrap();
        let a = enc.encode(&noise_patch(15, 100)).unwrap();
        let b = enc.encode(&noise_patch(15, 101)).unwrap();
        let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(cos < 1.0 - 1e-6, "cosine {}", cos);
    }

    #[test]
    fn rejects_wrong_patch_side() {
        let enc = Encoder::new(small_arch(), 5).unwrap();
        assert!(enc.encode(&noise_patch(4, 1)).is_err());
    }

    #[test]
    fn flat_parameters_round_trip() {
        let enc = Encoder::new(small_arch(), 5).unwrap();
        let flat = enc.flat_parameters();
        let mut other = Encoder::new(small_arch(), 99).unwrap();
        assert_ne!(other.flat_parameters(), flat);
        other.set_flat_parameters(&flat).unwrap();
        assert_eq!(other, enc);
    }

    #[test]
    fn zero_step_leaves_parameters_unchanged() {
        let mut enc = Encoder::new(small_arch(), 5).unwrap();
        let before = enc.flat_parameters();
        let grads = Gradients::zeros_like(&enc);
        enc.apply_gradients(&grads, 1e-3);
        assert_eq!(enc.flat_parameters(), before);
    }

    #[test]
    fn backward_matches_finite_differences_on_embedding_dot() {
        // Loss = v . embedding for a fixed random v; checks the chain through
        // normalization, ramps, and dense layers.
        let arch = small_arch();
        let enc = Encoder::new(arch.clone(), 17).unwrap();
        let p = noise_patch(3, 23);
        let mut rng = rng_from_seed(29);
        let v: Vec<f64> = (0..arch.embed_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let trace = enc.forward_traced(&p).unwrap();
        let mut grads = Gradients::zeros_like(&enc);
        enc.backward(&trace, &v, &mut grads);

        let loss = |e: &Encoder| -> f64 {
            let emb = e.encode(&p).unwrap();
            emb.iter().zip(&v).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        let flat = enc.flat_parameters();
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect();
        for idx in (0..flat.len()).step_by(7) {
            let mut plus = enc.clone();
            let mut minus = enc.clone();
            let mut fp = flat.clone();
            fp[idx] += eps;
            plus.set_flat_parameters(&fp).unwrap();
            fp[idx] -= 2.0 * eps;
            minus.set_flat_parameters(&fp).unwrap();
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {}: analytic {} numeric {}", idx, a, numeric);
        }
    }
}

//! Contrastive InfoNCE loss with analytic gradients.
//!
//! The softmax denominator pairs each negative with the positive embedding,
//! which is the form this training setup optimizes; the conventional variant
//! pairing negatives with the anchor is available as a switch. Logits are
//! stabilized by max-subtraction before exponentiation.

use serde::{Deserialize, Serialize};

use crate::error::{PixinfoError, Result};

/// Which embedding the denominator negatives are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NegativePairing {
    /// Negatives score against the positive embedding.
    #[default]
    Positive,
    /// Negatives score against the anchor embedding.
    Anchor,
}

/// Loss value plus gradients with respect to every input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceResult {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// InfoNCE loss for one anchor/positive pair against `M` negatives.
pub fn info_nce_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    temperature: f64,
    pairing: NegativePairing,
) -> Result<InfoNceResult> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(PixinfoError::Parameter(format!(
            "temperature must be > 0, got {}",
            temperature
        )));
    }
    let dim = anchor.len();
    if positive.len() != dim || negatives.iter().any(|n| n.len() != dim) {
        return Err(PixinfoError::Shape {
            context: "embedding dimensions",
            left: dim.to_string(),
            right: "mismatched input".into(),
        });
    }

    let reference = match pairing {
        NegativePairing::Positive => positive,
        NegativePairing::Anchor => anchor,
    };
    let z_pos = dot(anchor, positive) / temperature;
    let z_neg: Vec<f64> = negatives
        .iter()
        .map(|n| dot(n, reference) / temperature)
        .collect();

    let z_max = z_neg.iter().fold(z_pos, |m, &z| m.max(z));
    let e_pos = (z_pos - z_max).exp();
    let e_neg: Vec<f64> = z_neg.iter().map(|&z| (z - z_max).exp()).collect();
    let denom = e_pos + e_neg.iter().sum::<f64>();
    let loss = -z_pos + z_max + denom.ln();

    // Softmax weights: dL/dz_pos = w_pos - 1, dL/dz_i = w_i.
    let w_pos = e_pos / denom;
    let w_neg: Vec<f64> = e_neg.iter().map(|&e| e / denom).collect();

    let mut grad_anchor = vec![0.0; dim];
    let mut grad_positive = vec![0.0; dim];
    let mut grad_negatives = vec![vec![0.0; dim]; negatives.len()];

    let inv_t = 1.0 / temperature;
    axpy(&mut grad_anchor, (w_pos - 1.0) * inv_t, positive);
    axpy(&mut grad_positive, (w_pos - 1.0) * inv_t, anchor);
    match pairing {
        NegativePairing::Positive => {
            for ((w, neg), grad) in w_neg.iter().zip(negatives).zip(&mut grad_negatives) {
                axpy(&mut grad_positive, w * inv_t, neg);
                axpy(grad, w * inv_t, positive);
            }
        }
        NegativePairing::Anchor => {
            for ((w, neg), grad) in w_neg.iter().zip(negatives).zip(&mut grad_negatives) {
                axpy(&mut grad_anchor, w * inv_t, neg);
                axpy(grad, w * inv_t, anchor);
            }
        }
    }

    Ok(InfoNceResult {
        loss,
        grad_anchor,
        grad_positive,
        grad_negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        unit((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn aligned_pair_single_orthogonal_negative() {
        // anchor . positive = 1, negative . positive = 0, tau = 1:
        // loss = ln(1 + e^{-1}).
        let anchor = vec![1.0, 0.0, 0.0];
        let positive = vec![1.0, 0.0, 0.0];
        let negative = vec![0.0, 1.0, 0.0];
        let out = info_nce_loss(
            &anchor,
            &positive,
            &[&negative],
            1.0,
            NegativePairing::Positive,
        )
        .unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 0.313_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn aligned_pair_m_orthogonal_negatives_closed_form() {
        let anchor = vec![1.0, 0.0, 0.0, 0.0];
        let positive = anchor.clone();
        for m in [1usize, 4, 16] {
            let negatives: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut v = vec![0.0; 4];
                    v[1 + i % 3] = if i % 2 == 0 { 1.0 } else { -1.0 };
                    v
                })
                .collect();
            let refs: Vec<&[f64]> = negatives.iter().map(|v| v.as_slice()).collect();
            let out =
                info_nce_loss(&anchor, &positive, &refs, 1.0, NegativePairing::Positive).unwrap();
            let expected = (1.0 + m as f64 * (-1.0f64).exp()).ln();
            assert!((out.loss - expected).abs() < 1e-12, "M = {}", m);
        }
    }

    #[test]
    fn infinite_temperature_flattens_to_ln_m_plus_one() {
        let anchor = random_unit(8, 1);
        let positive = random_unit(8, 2);
        let negatives: Vec<Vec<f64>> = (0..5).map(|i| random_unit(8, 10 + i)).collect();
        let refs: Vec<&[f64]> = negatives.iter().map(|v| v.as_slice()).collect();
        let out =
            info_nce_loss(&anchor, &positive, &refs, 1e9, NegativePairing::Positive).unwrap();
        assert!((out.loss - 6f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn dominant_positive_regime_bounds() {
        // When anchor . positive >= negative_i . positive for all i:
        // 0 <= loss <= ln(1 + M).
        let mut rng = rng_from_seed(40);
        for trial in 0..200 {
            let dim = 6;
            let positive = random_unit(dim, 1000 + trial);
            let anchor = positive.clone();
            let m = 1 + (trial as usize % 7);
            let negatives: Vec<Vec<f64>> =
                (0..m).map(|i| random_unit(dim, 2000 + trial * 8 + i as u64)).collect();
            let refs: Vec<&[f64]> = negatives.iter().map(|v| v.as_slice()).collect();
            let tau = rng.gen_range(0.05..2.0);
            let out = info_nce_loss(&anchor, &positive, &refs, tau, NegativePairing::Positive)
                .unwrap();
            assert!(out.loss >= 0.0, "loss {}", out.loss);
            assert!(out.loss <= ((m + 1) as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive_temperature() {
        let v = vec![1.0, 0.0];
        assert!(info_nce_loss(&v, &v, &[], 0.0, NegativePairing::Positive).is_err());
        assert!(info_nce_loss(&v, &v, &[], -1.0, NegativePairing::Positive).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for pairing in [NegativePairing::Positive, NegativePairing::Anchor] {
            let dim = 5;
            let anchor = random_unit(dim, 3);
            let positive = random_unit(dim, 4);
            let negatives: Vec<Vec<f64>> = (0..3).map(|i| random_unit(dim, 20 + i)).collect();
            let tau = 0.37;

            let eval = |a: &[f64], p: &[f64], n: &[Vec<f64>]| -> f64 {
                let refs: Vec<&[f64]> = n.iter().map(|v| v.as_slice()).collect();
                info_nce_loss(a, p, &refs, tau, pairing).unwrap().loss
            };
            let refs: Vec<&[f64]> = negatives.iter().map(|v| v.as_slice()).collect();
            let out = info_nce_loss(&anchor, &positive, &refs, tau, pairing).unwrap();

            let eps = 1e-6;
            let check = |analytic: f64, numeric: f64| {
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                assert!(rel < 1e-6, "analytic {} numeric {}", analytic, numeric);
            };
            for d in 0..dim {
                let mut a = anchor.clone();
                a[d] += eps;
                let fp = eval(&a, &positive, &negatives);
                a[d] -= 2.0 * eps;
                let fm = eval(&a, &positive, &negatives);
                check(out.grad_anchor[d], (fp - fm) / (2.0 * eps));

                let mut p = positive.clone();
                p[d] += eps;
                let fp = eval(&anchor, &p, &negatives);
                p[d] -= 2.0 * eps;
                let fm = eval(&anchor, &p, &negatives);
                check(out.grad_positive[d], (fp - fm) / (2.0 * eps));

                for i in 0..negatives.len() {
                    let mut n = negatives.clone();
                    n[i][d] += eps;
                    let fp = eval(&anchor, &positive, &n);
                    n[i][d] -= 2.0 * eps;
                    let fm = eval(&anchor, &positive, &n);
                    check(out.grad_negatives[i][d], (fp - fm) / (2.0 * eps));
                }
            }
        }
    }

    #[test]
    fn negative_gradients_lie_along_the_paired_vector() {
        // In the positive-paired form, dL/d(negative) is proportional to the
        // positive embedding; any orthogonal component is zero.
        let anchor = random_unit(6, 50);
        let positive = random_unit(6, 51);
        let negatives: Vec<Vec<f64>> = (0..4).map(|i| random_unit(6, 60 + i)).collect();
        let refs: Vec<&[f64]> = negatives.iter().map(|v| v.as_slice()).collect();
        let out =
            info_nce_loss(&anchor, &positive, &refs, 0.2, NegativePairing::Positive).unwrap();
        for g in &out.grad_negatives {
            let along = dot(g, &positive);
            let residual: f64 = g
                .iter()
                .zip(&positive)
                .map(|(gi, pi)| gi - along * pi)
                .map(|r| r * r)
                .sum::<f64>()
                .sqrt();
            assert!(residual <= 1e-8, "residual {}", residual);
        }
        // Same for the anchor gradient.
        let along = dot(&out.grad_anchor, &positive);
        let residual: f64 = out
            .grad_anchor
            .iter()
            .zip(&positive)
            .map(|(gi, pi)| gi - along * pi)
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        assert!(residual <= 1e-8);
    }
}

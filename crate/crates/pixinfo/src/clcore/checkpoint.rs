//! Encoder pair checkpoints: one JSON header line followed by a
//! little-endian f32 blob of both encoders' parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clcore::encoder::{Encoder, EncoderArch};
use crate::error::{PixinfoError, Result};
use crate::fsio::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: EncoderArch,
    pub config_hash: String,
    pub step: usize,
    pub encoders: usize,
}

pub fn checkpoint_bytes(
    encoder: &Encoder,
    encoder_aug: &Encoder,
    config_hash: &str,
    step: usize,
) -> Result<Vec<u8>> {
    if encoder.arch() != encoder_aug.arch() {
        return Err(PixinfoError::Shape {
            context: "checkpoint encoder architectures",
            left: format!("{:?}", encoder.arch()),
            right: format!("{:?}", encoder_aug.arch()),
        });
    }
    let header = CheckpointHeader {
        arch: encoder.arch().clone(),
        config_hash: config_hash.to_string(),
        step,
        encoders: 2,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for enc in [encoder, encoder_aug] {
        for v in enc.flat_parameters() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    encoder: &Encoder,
    encoder_aug: &Encoder,
    config_hash: &str,
    step: usize,
) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(encoder, encoder_aug, config_hash, step)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(Encoder, Encoder, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| {
        PixinfoError::Data(format!("{}: missing checkpoint header", path.display()))
    })?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.encoders != 2 {
        return Err(PixinfoError::Data(format!(
            "{}: expected an encoder pair, found {}",
            path.display(),
            header.encoders
        )));
    }
    let mut encoder = Encoder::new(header.arch.clone(), 0)?;
    let mut encoder_aug = Encoder::new(header.arch.clone(), 0)?;
    let per_encoder = encoder.parameter_count();
    let blob = &bytes[newline + 1..];
    if blob.len() != per_encoder * 2 * 4 {
        return Err(PixinfoError::Data(format!(
            "{}: parameter blob is {} bytes, expected {}",
            path.display(),
            blob.len(),
            per_encoder * 8
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    encoder.set_flat_parameters(&values[..per_encoder])?;
    encoder_aug.set_flat_parameters(&values[per_encoder..])?;
    Ok((encoder, encoder_aug, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_f32_exact() {
        let arch = EncoderArch {
            input_side: 5,
            hidden: vec![12],
            embed_dim: 6,
        };
        let f = Encoder::new(arch.clone(), 11).unwrap();
        let g = Encoder::new(arch, 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.ckpt");
        save_checkpoint(&path, &f, &g, "abc123", 42).unwrap();
        let (f2, g2, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.step, 42);
        assert_eq!(header.config_hash, "abc123");
        for (a, b) in f.flat_parameters().iter().zip(f2.flat_parameters()) {
            assert_eq!(*a as f32, b as f32);
        }
        for (a, b) in g.flat_parameters().iter().zip(g2.flat_parameters()) {
            assert_eq!(*a as f32, b as f32);
        }
    }
}

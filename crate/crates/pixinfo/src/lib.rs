//! Information-guided pixel sampling and augmentation for pixel-wise
//! contrastive learning on grayscale images.
//!
//! Pixels are not equally informative: a patch entropy map splits them into
//! low-, medium-, and high-information bands. This crate samples training
//! pixels by entropy-derived weight maps, estimates per-band photometric
//! augmentation intensities by matching mutual information across
//! corresponding views, trains a pair of patch encoders with an InfoNCE
//! loss, and evaluates one-shot landmark matching with MRE/SDR metrics.
//!
//! # Modules
//! - [`imaging`]: normalized grayscale rasters, patches, histograms, PGM/PNG I/O.
//! - [`infometrics`]: entropy maps, mutual information, categorization, weight
//!   maps, and seeded pixel sampling.
//! - [`augment`]: brightness/contrast augmentation and information-matched
//!   intensity estimation.
//! - [`clcore`]: patch encoders, InfoNCE loss with exact gradients, and the
//!   grouped training loop.
//! - [`matching`]: feature fields, landmark matching, MRE/SDR reports.
//! - [`synthdata`]: deterministic synthetic corpora with exact ground-truth
//!   correspondences.
//! - [`config`] and [`pipeline`]: reproducible batch orchestration used by
//!   the `pixinfo` binary.
//!
//! # Quick start
//! ```
//! use pixinfo::imaging::extract_patch;
//! use pixinfo::infometrics::{categorize, entropy_map};
//! use pixinfo::synthdata::{generate_corpus, SynthSpec};
//!
//! let corpus = generate_corpus(&SynthSpec::default())?;
//! let entropy = entropy_map(&corpus.images[0], 10, 256)?;
//! let bands = categorize(&entropy, 2.0, 4.0)?;
//! let (low, medium, high, _) = bands.counts();
//! assert!(low + medium + high > 0);
//! # Ok::<(), pixinfo::PixinfoError>(())
//! ```
//!
//! The `examples/` directory walks through each capability end to end; the
//! `pixinfo` binary chains them into a reproducible pipeline.

pub mod augment;
pub mod clcore;
pub mod config;
pub mod error;
pub(crate) mod fsio;
pub mod imaging;
pub mod infometrics;
pub mod matching;
pub mod pipeline;
pub mod rng;
pub mod synthdata;

pub use error::{PixinfoError, Result};

//! Patch-feature cosine matching for one-shot segmentation, with random and
//! deterministic channel dropping and the diagnostics used to study it.
//!
//! Modules map onto the pipeline:
//!
//! - [`tensor`], [`npy`], [`report`]: feature grids, masks and their
//!   interchange formats.
//! - [`nubble`]: channel-drop masks and the deterministic alternatives.
//! - [`matching`]: cosine similarity, best-match maps, similarity maps,
//!   prompts and proxy segmentation.
//! - [`diagnostics`]: mismatch counting, per-patch channel statistics and
//!   interaction strength.
//! - [`strategy`]: the named drop-strategy registry.
//! - [`harness`]: synthetic instances, drop-ratio sweeps and cumulative
//!   improvement curves.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod matching;
pub mod npy;
pub mod nubble;
pub mod report;
pub mod strategy;
pub mod tensor;

pub use error::{Error, Result};
pub use matching::{Aggregator, BestMatchMap, PromptSet, SimilarityMap};
pub use nubble::DropMask;
pub use strategy::{DropStrategy, MatchInstance, StrategyRegistry};
pub use tensor::{BinaryMask, FeatureGrid};

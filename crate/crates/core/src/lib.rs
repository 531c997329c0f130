//! Decoupled image-text contrastive pretraining at desk scale.
//!
//! Images and report sentences are sampled independently and supervised
//! through a knowledge-driven similarity over 14-type multi-hot finding
//! labels, replacing one-hot pairing targets with soft semantic targets.
//! The crate covers the full loop: rule-based report labeling, decoupled
//! sampling and soft-target construction, toy dual encoders with
//! projection heads and a learnable temperature, the semantic matching
//! loss with hand-derived gradients, training orchestration, and the
//! zero-shot / linear-probe / retrieval evaluation protocols.

pub mod encoders;
pub mod error;
pub mod eval;
pub mod finding;
pub mod labeler;
pub mod loss;
pub mod mat;
pub mod matfile;
pub mod optim;
pub mod pairing;
pub mod pipeline;
pub mod records;
pub mod util;

pub use error::{Error, Result};
pub use finding::{FindingLabel, FindingType, FINDING_COUNT};

//! Physical-layer device authentication from statistical signal
//! fingerprints, with compensation for environmental effects shared by
//! nearby objects.
//!
//! The pipeline: [`features`] turns raw signals into feature vectors,
//! [`fingerprint`] stacks them into per-window matrices and picks
//! references, [`distance`] scores observations with the Bhattacharyya
//! distance, [`environment`] and [`graph`] estimate and fuse the shared
//! environment, and [`transfer`] borrows estimates from another domain.
//! [`simulate`] generates synthetic ground truth for all of it.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod cli;
pub mod distance;
pub mod environment;
pub mod error;
pub mod features;
pub mod fingerprint;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod simulate;
pub mod transfer;

pub use distance::{AuthDecision, Verdict};
pub use environment::EnvironmentTransform;
pub use error::{Error, Result};
pub use fingerprint::{FingerprintMatrix, ReferenceFingerprint};
pub use graph::SimilarityGraph;

/// Identifier of a monitored object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

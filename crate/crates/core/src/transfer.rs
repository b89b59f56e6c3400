//! Joint environment estimation across a target and a source domain.

use std::collections::{BTreeMap, BTreeSet};

use crate::distance;
use crate::environment::{self, EnvironmentTransform};
use crate::error::{Error, Result};
use crate::fingerprint::{FingerprintMatrix, ReferenceFingerprint};
use crate::ObjectId;

/// Preset transfer weights.
pub const ALPHA_PRESETS: [f64; 2] = [0.25, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    alpha: f64,
    target_ids: BTreeSet<ObjectId>,
    source_ids: BTreeSet<ObjectId>,
}

impl TransferConfig {
    pub fn new(
        alpha: f64,
        target_ids: BTreeSet<ObjectId>,
        source_ids: BTreeSet<ObjectId>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if let Some(shared) = target_ids.intersection(&source_ids).next() {
            return Err(Error::invalid(format!(
                "object {shared} is in both target and source domains"
            )));
        }
        Ok(Self {
            alpha,
            target_ids,
            source_ids,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn target_ids(&self) -> &BTreeSet<ObjectId> {
        &self.target_ids
    }

    pub fn source_ids(&self) -> &BTreeSet<ObjectId> {
        &self.source_ids
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// Per-object alignment of source observations to their references.
pub fn estimate_source_transforms(
    source_observations: &BTreeMap<ObjectId, FingerprintMatrix>,
    source_references: &BTreeMap<ObjectId, ReferenceFingerprint>,
) -> Result<BTreeMap<ObjectId, EnvironmentTransform>> {
    let mut dim = None;
    let mut out = BTreeMap::new();
    for (id, obs) in source_observations {
        let reference = source_references
            .get(id)
            .ok_or_else(|| Error::NotFound(id.clone()))?;
        if *dim.get_or_insert(obs.dim()) != obs.dim() {
            return Err(Error::invalid("source objects differ in feature dimension"));
        }
        out.insert(
            id.clone(),
            environment::estimate_transform(obs, reference)?.transform,
        );
    }
    Ok(out)
}

/// Minimizer of `Σ_T β_k ‖X - X_k‖² + α Σ_S β_k ‖X - X^s_k‖²` for both the
/// rotation (projected onto SO(m)) and the translation. With `α = 0` this
/// is exactly [`environment::fuse_transforms`] on the target transforms.
pub fn joint_fuse(
    target: &[(EnvironmentTransform, f64)],
    source: &[(EnvironmentTransform, f64)],
    alpha: f64,
) -> Result<EnvironmentTransform> {
    check_alpha(alpha)?;
    if target.is_empty() {
        return Err(Error::invalid("joint fusion needs at least one target transform"));
    }
    let m = target[0].0.dim();
    if let Some((t, _)) = source.iter().find(|(t, _)| t.dim() != m) {
        return Err(Error::UnsupportedTransfer(format!(
            "source transform dimension {} differs from target dimension {m}",
            t.dim()
        )));
    }
    let (mut transforms, mut weights): (Vec<_>, Vec<_>) =
        target.iter().map(|(t, b)| (t.clone(), *b)).unzip();
    if alpha > 0.0 {
        for (t, b) in source {
            transforms.push(t.clone());
            weights.push(alpha * b);
        }
    }
    environment::fuse_transforms(&transforms, &weights)
}

/// Value of the joint objective for a candidate transform.
pub fn joint_objective(
    candidate: &EnvironmentTransform,
    target: &[(EnvironmentTransform, f64)],
    source: &[(EnvironmentTransform, f64)],
    alpha: f64,
) -> f64 {
    let term = |(t, b): &(EnvironmentTransform, f64)| b * candidate.squared_discrepancy(t);
    target.iter().map(term).sum::<f64>() + alpha * source.iter().map(term).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferredThreshold {
    pub tau: f64,
    /// Always true; marks the threshold as calibrated on the source domain.
    pub transferred: bool,
}

/// Calibrates the threshold on source-domain distances for use on the target.
pub fn transfer_threshold(
    source_legit: &[f64],
    source_attackers: &[f64],
) -> Result<TransferredThreshold> {
    let tau =
        distance::calibrate_threshold(source_legit, source_attackers, distance::DEFAULT_MARGIN)?;
    Ok(TransferredThreshold {
        tau,
        transferred: true,
    })
}

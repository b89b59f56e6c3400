//! Environmental-effect estimation and compensated authentication.
//!
//! The environment acts on every fingerprint row `r` of an object as
//! `R·r + l` (forward model: observed ≈ R·reference + l). Per-object
//! transforms are recovered by SVD alignment against the object's
//! reference, fused across graph neighbors, and applied to the reference
//! of the object being authenticated before computing its distance.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::distance::{self, AuthDecision, Verdict};
use crate::error::{Error, Result};
use crate::fingerprint::{FingerprintMatrix, ReferenceFingerprint};
use crate::graph::SimilarityGraph;
use crate::linalg;
use crate::ObjectId;

/// Relative singular-value floor below which a cross-covariance direction
/// counts as missing.
const RANK_TOL: f64 = 1e-12;

/// Rotation plus translation acting on fingerprint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentTransform {
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl EnvironmentTransform {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let m = translation.len();
        if m == 0 || rotation.shape() != (m, m) {
            return Err(Error::invalid(format!(
                "rotation {:?} does not match translation length {m}",
                rotation.shape()
            )));
        }
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform contains non-finite values"));
        }
        if !linalg::is_proper_rotation(&rotation) {
            return Err(Error::invalid(format!(
                "not a proper rotation (orthogonality error {:.3e}, det {:.12})",
                linalg::orthogonality_error(&rotation),
                rotation.determinant()
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            rotation: DMatrix::identity(m, m),
            translation: DVector::zeros(m),
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply_row(&self, row: &DVector<f64>) -> DVector<f64> {
        &self.rotation * row + &self.translation
    }

    /// Applies the transform to every row of `data` (n×m).
    pub fn apply_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data * self.rotation.transpose();
        for mut row in out.row_iter_mut() {
            row += self.translation.transpose();
        }
        out
    }

    /// `(Rᵀ, -Rᵀl)`, mapping observations back to the reference frame.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let translation = -(&rt * &self.translation);
        Self {
            rotation: rt,
            translation,
        }
    }

    /// `‖R - other.R‖²_F + ‖l - other.l‖²`.
    pub fn squared_discrepancy(&self, other: &EnvironmentTransform) -> f64 {
        (&self.rotation - &other.rotation).norm_squared()
            + (&self.translation - &other.translation).norm_squared()
    }
}

/// Result of aligning one window to its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformEstimate {
    pub transform: EnvironmentTransform,
    /// Set when the cross-covariance had rank below `m - 1`, so the
    /// rotation is undetermined and identity was used.
    pub degenerate: bool,
}

/// Least-squares rigid alignment `observed ≈ R·reference + l`, rows paired
/// by index, with `R` constrained to a proper rotation.
pub fn estimate_transform(
    observed: &FingerprintMatrix,
    reference: &ReferenceFingerprint,
) -> Result<TransformEstimate> {
    let reference = reference.matrix();
    if observed.data().shape() != reference.data().shape() {
        return Err(Error::invalid(format!(
            "observed shape {:?} differs from reference shape {:?}",
            observed.data().shape(),
            reference.data().shape()
        )));
    }
    let m = observed.dim();
    let c_obs = observed.centroid();
    let c_ref = reference.centroid();

    // Σ_j (obs_j - c_obs)(ref_j - c_ref)ᵀ
    let mut cross = DMatrix::zeros(m, m);
    for j in 0..observed.nrows() {
        let y = observed.row(j) - &c_obs;
        let x = reference.row(j) - &c_ref;
        cross += y * x.transpose();
    }
    let (rotation, singular) = linalg::nearest_rotation(&cross);
    let top = singular[0];
    let informative = singular.iter().filter(|&&s| s > RANK_TOL * top).count();
    let degenerate = top == 0.0 || informative + 1 < m;
    let rotation = if degenerate {
        DMatrix::identity(m, m)
    } else {
        rotation
    };
    let translation = &c_obs - &rotation * &c_ref;
    Ok(TransformEstimate {
        transform: EnvironmentTransform::new(rotation, translation)?,
        degenerate,
    })
}

fn check_weights(transforms: &[EnvironmentTransform], weights: &[f64]) -> Result<usize> {
    let first = transforms
        .first()
        .ok_or_else(|| Error::invalid("no transforms to fuse"))?;
    if transforms.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} transforms but {} weights",
            transforms.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("all fusion weights are zero"));
    }
    let m = first.dim();
    if transforms.iter().any(|t| t.dim() != m) {
        return Err(Error::invalid("transforms differ in dimension"));
    }
    Ok(m)
}

/// Weighted MMSE fusion of neighbor transforms: the translation is the
/// weighted mean, the rotation the nearest proper rotation to the weighted
/// sum of rotations (the constrained minimizer of `Σ β_k ‖R - R_k‖²_F`).
pub fn fuse_transforms(
    transforms: &[EnvironmentTransform],
    weights: &[f64],
) -> Result<EnvironmentTransform> {
    let m = check_weights(transforms, weights)?;
    let mut active = weights.iter().enumerate().filter(|(_, &w)| w > 0.0);
    if let (Some((only, _)), None) = (active.next(), active.next()) {
        return Ok(transforms[only].clone());
    }
    let total: f64 = weights.iter().sum();
    let mut rot_sum = DMatrix::zeros(m, m);
    let mut trans_sum = DVector::zeros(m);
    for (t, &w) in transforms.iter().zip(weights) {
        rot_sum += t.rotation() * w;
        trans_sum += t.translation() * w;
    }
    let (rotation, _) = linalg::nearest_rotation(&rot_sum);
    EnvironmentTransform::new(rotation, trans_sum / total)
}

/// `Σ β_k ‖R - R_k‖²_F`, the rotation half of the fusion objective.
pub fn rotation_objective(
    rotation: &DMatrix<f64>,
    transforms: &[EnvironmentTransform],
    weights: &[f64],
) -> f64 {
    transforms
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (rotation - t.rotation()).norm_squared())
        .sum()
}

/// `Σ β_k ‖l - l_k‖²`, the translation half of the fusion objective.
pub fn translation_objective(
    translation: &DVector<f64>,
    transforms: &[EnvironmentTransform],
    weights: &[f64],
) -> f64 {
    transforms
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (translation - t.translation()).norm_squared())
        .sum()
}

/// A reference fingerprint with the estimated environment applied.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedReference {
    matrix: FingerprintMatrix,
}

impl CorrectedReference {
    pub fn matrix(&self) -> &FingerprintMatrix {
        &self.matrix
    }
}

/// Replaces each reference row `r` with `R·r + l`.
pub fn correct_reference(
    reference: &ReferenceFingerprint,
    transform: &EnvironmentTransform,
) -> Result<CorrectedReference> {
    let m = reference.matrix();
    if m.dim() != transform.dim() {
        return Err(Error::invalid(format!(
            "reference has {} features, transform {}",
            m.dim(),
            transform.dim()
        )));
    }
    Ok(CorrectedReference {
        matrix: m.with_data(transform.apply_rows(m.data()))?,
    })
}

/// Distance between an observation and its reference after applying the
/// fusion of the given neighbor transforms to the reference.
pub fn compensated_distance(
    observed: &FingerprintMatrix,
    reference: &ReferenceFingerprint,
    neighbor_transforms: &[EnvironmentTransform],
    weights: &[f64],
) -> Result<f64> {
    let fused = fuse_transforms(neighbor_transforms, weights)?;
    let corrected = correct_reference(reference, &fused)?;
    distance::fingerprint_distance(observed, corrected.matrix())
}

/// Authenticates `object` with environment compensation: every graph
/// neighbor that has both an observation and a reference contributes its
/// own transform estimate, weighted by its edge weight.
#[allow(clippy::too_many_arguments)]
pub fn authenticate_with_env(
    object: &ObjectId,
    observed: &FingerprintMatrix,
    reference: &ReferenceFingerprint,
    neighbor_observations: &BTreeMap<ObjectId, FingerprintMatrix>,
    neighbor_references: &BTreeMap<ObjectId, ReferenceFingerprint>,
    graph: &SimilarityGraph,
    threshold: f64,
) -> Result<AuthDecision> {
    let mut transforms = Vec::new();
    let mut weights = Vec::new();
    for (k, beta) in graph.neighbors(object)? {
        if let (Some(obs), Some(reference_k)) =
            (neighbor_observations.get(&k), neighbor_references.get(&k))
        {
            transforms.push(estimate_transform(obs, reference_k)?.transform);
            weights.push(beta);
        }
    }
    if transforms.is_empty() {
        return Err(Error::NoNeighbors(object.clone()));
    }
    let d = compensated_distance(observed, reference, &transforms, &weights)?;
    Ok(distance::authenticate(d, threshold))
}

/// Outcome of iterated estimation with attacker exclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageOutcome {
    /// Verdicts of the final round.
    pub decisions: BTreeMap<ObjectId, AuthDecision>,
    /// Distances per round, in round order.
    pub round_distances: Vec<BTreeMap<ObjectId, f64>>,
    /// Objects excluded from neighbor sets by the end.
    pub excluded: BTreeSet<ObjectId>,
    /// Objects decided by the plain distance because no usable neighbor was left.
    pub fallback: BTreeSet<ObjectId>,
}

impl MultiStageOutcome {
    pub fn rounds(&self) -> usize {
        self.round_distances.len()
    }
}

/// Repeats compensated authentication over all objects, removing every
/// object flagged as an attacker from all neighbor sets before the next
/// round. Stops when a round flags nobody new or after `max_rounds`.
/// Objects left without neighbors are judged on their plain distance
/// against the same threshold.
pub fn multi_stage_filter(
    observations: &BTreeMap<ObjectId, FingerprintMatrix>,
    references: &BTreeMap<ObjectId, ReferenceFingerprint>,
    graph: &SimilarityGraph,
    threshold: f64,
    max_rounds: usize,
) -> Result<MultiStageOutcome> {
    if max_rounds == 0 {
        return Err(Error::invalid("max_rounds must be at least 1"));
    }
    let mut estimates = BTreeMap::new();
    for (id, obs) in observations {
        let reference = references
            .get(id)
            .ok_or_else(|| Error::NotFound(id.clone()))?;
        estimates.insert(id.clone(), estimate_transform(obs, reference)?.transform);
    }

    let mut excluded = BTreeSet::new();
    let mut outcome = MultiStageOutcome {
        decisions: BTreeMap::new(),
        round_distances: Vec::new(),
        excluded: BTreeSet::new(),
        fallback: BTreeSet::new(),
    };
    for _ in 0..max_rounds {
        let mut decisions = BTreeMap::new();
        let mut distances = BTreeMap::new();
        let mut fallback = BTreeSet::new();
        for (id, obs) in observations {
            let reference = &references[id];
            let mut transforms = Vec::new();
            let mut weights = Vec::new();
            for (k, beta) in graph.neighbors(id)? {
                if excluded.contains(&k) {
                    continue;
                }
                if let Some(t) = estimates.get(&k) {
                    transforms.push(t.clone());
                    weights.push(beta);
                }
            }
            let d = if transforms.is_empty() {
                fallback.insert(id.clone());
                distance::fingerprint_distance(obs, reference.matrix())?
            } else {
                compensated_distance(obs, reference, &transforms, &weights)?
            };
            distances.insert(id.clone(), d);
            decisions.insert(id.clone(), distance::authenticate(d, threshold));
        }
        let flagged: Vec<ObjectId> = decisions
            .iter()
            .filter(|(id, d)| d.verdict == Verdict::Attacker && !excluded.contains(*id))
            .map(|(id, _)| id.clone())
            .collect();
        outcome.decisions = decisions;
        outcome.round_distances.push(distances);
        outcome.fallback = fallback;
        if flagged.is_empty() {
            break;
        }
        excluded.extend(flagged);
    }
    outcome.excluded = excluded;
    Ok(outcome)
}

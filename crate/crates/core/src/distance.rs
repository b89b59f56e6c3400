//! Bhattacharyya distances, the authentication test and threshold calibration.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{FingerprintMatrix, GaussianSummary};

/// Stand-in for an infinite distance (disjoint empirical supports).
pub const MAX_DISTANCE: f64 = 1e9;

/// Fallback margin applied to the largest legitimate distance when no
/// attacker samples are available for calibration.
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Legitimate,
    Attacker,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Legitimate => "legitimate",
            Verdict::Attacker => "attacker",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthDecision {
    pub distance: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Accepts the claimed identity iff `distance <= threshold`.
pub fn authenticate(distance: f64, threshold: f64) -> AuthDecision {
    let verdict = if distance <= threshold {
        Verdict::Legitimate
    } else {
        Verdict::Attacker
    };
    AuthDecision {
        distance,
        threshold,
        verdict,
    }
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} covariance is not positive definite")))
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Closed-form Bhattacharyya distance between two Gaussians:
///
/// `1/8 (μa-μb)ᵀ Σ⁻¹ (μa-μb) + 1/2 ln(det Σ / sqrt(det Σa det Σb))`,
/// with `Σ = (Σa + Σb)/2`.
pub fn bhattacharyya_gaussian(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let pooled = (a.covariance() + b.covariance()) * 0.5;
    let ch = cholesky(&pooled, "pooled")?;
    let ch_a = cholesky(a.covariance(), "first")?;
    let ch_b = cholesky(b.covariance(), "second")?;

    let diff = a.mean() - b.mean();
    let solved = ch.solve(&diff);
    let mahalanobis = diff.dot(&solved) / 8.0;
    let log_ratio = 0.5 * (log_det(&ch) - 0.5 * (log_det(&ch_a) + log_det(&ch_b)));
    let d = mahalanobis + log_ratio;
    if !d.is_finite() {
        return Err(Error::Numerical(format!("non-finite distance ({d})")));
    }
    Ok(d.max(0.0))
}

/// Gaussian-form distance between two fingerprint matrices.
pub fn fingerprint_distance(a: &FingerprintMatrix, b: &FingerprintMatrix) -> Result<f64> {
    use crate::fingerprint::summarize;
    bhattacharyya_gaussian(&summarize(a), &summarize(b))
}

/// Histogram (distribution-free) Bhattacharyya distance, `-ln Σ sqrt(p q)`,
/// over a shared grid with `bins_per_dim` equal-width bins per feature
/// spanning both matrices. Limited to `m <= 3`.
pub fn bhattacharyya_empirical(
    a: &FingerprintMatrix,
    b: &FingerprintMatrix,
    bins_per_dim: usize,
) -> Result<f64> {
    let m = a.dim();
    if m != b.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {m} vs {}", b.dim())));
    }
    if m > 3 {
        return Err(Error::UnsupportedDimension(m));
    }
    if bins_per_dim == 0 {
        return Err(Error::invalid("bins_per_dim must be at least 1"));
    }
    let (da, db) = (a.data(), b.data());
    let ranges: Vec<(f64, f64)> = (0..m)
        .map(|c| {
            da.column(c)
                .iter()
                .chain(db.column(c).iter())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .collect();
    let cell = |data: &DMatrix<f64>, r: usize| -> usize {
        let mut idx = 0usize;
        for (c, &(lo, hi)) in ranges.iter().enumerate() {
            let width = hi - lo;
            let bin = if width > 0.0 {
                let k = (((data[(r, c)] - lo) / width) * bins_per_dim as f64).floor() as usize;
                k.min(bins_per_dim - 1)
            } else {
                0
            };
            idx = idx * bins_per_dim + bin;
        }
        idx
    };
    let histogram = |data: &DMatrix<f64>| {
        let mut h: HashMap<usize, u64> = HashMap::new();
        for r in 0..data.nrows() {
            *h.entry(cell(data, r)).or_default() += 1;
        }
        h
    };
    let (ha, hb) = (histogram(da), histogram(db));
    let mut shared: Vec<(u64, u64)> = ha
        .iter()
        .filter_map(|(k, &ca)| hb.get(k).map(|&cb| (ca, cb)))
        .collect();
    if shared.is_empty() {
        return Ok(MAX_DISTANCE);
    }
    shared.sort_unstable();
    let norm = ((da.nrows() as f64) * (db.nrows() as f64)).sqrt();
    let coefficient = shared
        .iter()
        .map(|&(ca, cb)| ((ca * cb) as f64).sqrt())
        .sum::<f64>()
        / norm;
    if coefficient >= 1.0 {
        return Ok(0.0);
    }
    Ok((-coefficient.ln()).min(MAX_DISTANCE))
}

/// Fraction of legitimate distances accepted plus fraction of attacker
/// distances rejected, halved. With no attackers only the first term counts.
pub fn balanced_accuracy(legit: &[f64], attackers: &[f64], threshold: f64) -> f64 {
    let accepted = legit.iter().filter(|&&d| d <= threshold).count() as f64 / legit.len() as f64;
    if attackers.is_empty() {
        return accepted;
    }
    let rejected =
        attackers.iter().filter(|&&d| d > threshold).count() as f64 / attackers.len() as f64;
    0.5 * (accepted + rejected)
}

/// Midpoints between consecutive distinct values of the pooled distances.
pub fn candidate_thresholds(legit: &[f64], attackers: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = legit.iter().chain(attackers).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Threshold maximizing balanced accuracy over the candidate midpoints,
/// preferring the smaller threshold on ties. Without attacker samples the
/// result is `max(legit) * (1 + margin)`.
pub fn calibrate_threshold(legit: &[f64], attackers: &[f64], margin: f64) -> Result<f64> {
    if legit.is_empty() {
        return Err(Error::invalid("no legitimate distances to calibrate on"));
    }
    if legit.iter().chain(attackers).any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite distance in calibration set"));
    }
    if attackers.is_empty() {
        let max = legit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(max * (1.0 + margin));
    }
    let mut legit_sorted = legit.to_vec();
    legit_sorted.sort_by(f64::total_cmp);
    let mut att_sorted = attackers.to_vec();
    att_sorted.sort_by(f64::total_cmp);

    let candidates = candidate_thresholds(legit, attackers);
    if candidates.is_empty() {
        // every distance is the same value
        return Ok(legit_sorted[0]);
    }
    let (nl, na) = (legit.len() as f64, attackers.len() as f64);
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &tau in &candidates {
        let accepted = legit_sorted.partition_point(|&d| d <= tau) as f64 / nl;
        let rejected = (att_sorted.len() - att_sorted.partition_point(|&d| d <= tau)) as f64 / na;
        let score = 0.5 * (accepted + rejected);
        if score > best.0 {
            best = (score, tau);
        }
    }
    Ok(best.1)
}

//! Fingerprint matrices, reference selection and Gaussian summaries.

use nalgebra::{DMatrix, DVector};

use crate::distance;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ObjectId;

/// Relative scale of the ridge added to every summarized covariance.
pub const COVARIANCE_RIDGE: f64 = 1e-8;

/// `n` observations (rows) of `m` features for one object in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintMatrix {
    data: DMatrix<f64>,
    feature_names: Vec<String>,
    object_id: ObjectId,
    window_index: u32,
}

impl FingerprintMatrix {
    pub fn new(
        data: DMatrix<f64>,
        feature_names: Vec<String>,
        object_id: ObjectId,
        window_index: u32,
    ) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::invalid(format!(
                "fingerprint matrix needs at least 2 rows, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::invalid("fingerprint matrix has no features"));
        }
        if feature_names.len() != data.ncols() {
            return Err(Error::invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("fingerprint matrix contains non-finite values"));
        }
        Ok(Self {
            data,
            feature_names,
            object_id,
            window_index,
        })
    }

    /// Same shape, names and labels, new values.
    pub fn with_data(&self, data: DMatrix<f64>) -> Result<Self> {
        if data.shape() != self.data.shape() {
            return Err(Error::invalid(format!(
                "shape {:?} does not match {:?}",
                data.shape(),
                self.data.shape()
            )));
        }
        Self::new(
            data,
            self.feature_names.clone(),
            self.object_id.clone(),
            self.window_index,
        )
    }

    pub fn relabel(mut self, object_id: ObjectId, window_index: u32) -> Self {
        self.object_id = object_id;
        self.window_index = window_index;
        self
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn object_id(&self) -> &ObjectId {
        &self.object_id
    }

    pub fn window_index(&self) -> u32 {
        self.window_index
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, j: usize) -> DVector<f64> {
        self.data.row(j).transpose()
    }

    /// Column-wise mean; the centroid used by both the Gaussian summary and
    /// the transform estimator.
    pub fn centroid(&self) -> DVector<f64> {
        self.data.row_mean().transpose()
    }
}

/// Stacks feature vectors into a matrix, preserving row order.
pub fn build_matrix(
    vectors: &[FeatureVector],
    object_id: ObjectId,
    window_index: u32,
) -> Result<FingerprintMatrix> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid("no feature vectors"))?;
    let m = first.dim();
    for (j, v) in vectors.iter().enumerate() {
        if v.dim() != m {
            return Err(Error::invalid(format!(
                "row {j} has {} features, expected {m}",
                v.dim()
            )));
        }
        if v.names() != first.names() {
            return Err(Error::invalid(format!("row {j} has different feature names")));
        }
    }
    let data = DMatrix::from_fn(vectors.len(), m, |r, c| vectors[r].values()[c]);
    FingerprintMatrix::new(data, first.names().to_vec(), object_id, window_index)
}

/// The training window chosen to represent an object.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFingerprint {
    matrix: FingerprintMatrix,
}

impl ReferenceFingerprint {
    pub fn new(matrix: FingerprintMatrix) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &FingerprintMatrix {
        &self.matrix
    }

    pub fn object_id(&self) -> &ObjectId {
        self.matrix.object_id()
    }

    pub fn into_matrix(self) -> FingerprintMatrix {
        self.matrix
    }
}

/// Picks the medoid training window: the one minimizing the summed
/// Gaussian Bhattacharyya distance to all other windows. Ties go to the
/// lowest window index.
pub fn select_reference(training: &[FingerprintMatrix]) -> Result<ReferenceFingerprint> {
    let first = training
        .first()
        .ok_or_else(|| Error::invalid("no training windows"))?;
    for w in training {
        if w.object_id() != first.object_id() {
            return Err(Error::invalid(format!(
                "training windows mix objects {} and {}",
                first.object_id(),
                w.object_id()
            )));
        }
        if w.dim() != first.dim() {
            return Err(Error::invalid("training windows differ in feature dimension"));
        }
    }
    // Canonical order makes the floating-point sums independent of input order.
    let mut windows: Vec<&FingerprintMatrix> = training.iter().collect();
    windows.sort_by_key(|w| w.window_index());
    if windows
        .windows(2)
        .any(|p| p[0].window_index() == p[1].window_index())
    {
        return Err(Error::invalid("duplicate window index in training set"));
    }

    let summaries: Vec<GaussianSummary> = windows.iter().map(|w| summarize(w)).collect();
    let k = windows.len();
    let mut totals = vec![0.0; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let d = distance::bhattacharyya_gaussian(&summaries[a], &summaries[b])?;
            totals[a] += d;
            totals[b] += d;
        }
    }
    let best = (0..k)
        .min_by(|&a, &b| totals[a].total_cmp(&totals[b]))
        .expect("nonempty");
    Ok(ReferenceFingerprint::new(windows[best].clone()))
}

/// Mean vector and regularized covariance of a fingerprint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianSummary {
    /// Builds a summary from explicit moments. The covariance must be
    /// symmetric; no regularization is added.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 || covariance.shape() != (m, m) {
            return Err(Error::invalid("covariance shape does not match mean"));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite moment"));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * (1.0 + covariance.amax()) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Population covariance plus `ε·I` with `ε = 1e-8·(1 + trace/m)`.
pub fn summarize(matrix: &FingerprintMatrix) -> GaussianSummary {
    let n = matrix.nrows() as f64;
    let m = matrix.dim();
    let mean = matrix.centroid();
    let mut centered = matrix.data().clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / n;
    // exact symmetry
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eps = COVARIANCE_RIDGE * (1.0 + cov.trace() / m as f64);
    for i in 0..m {
        cov[(i, i)] += eps;
    }
    GaussianSummary {
        mean,
        covariance: cov,
    }
}

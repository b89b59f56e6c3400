//! Environment-similarity graph over objects.
//!
//! Edge weights come from how closely two objects' historical transforms
//! agree: `β = exp(-D/s)`, with `D` the window-averaged squared transform
//! discrepancy and `s` its median over all pairs, so the median pair sits
//! at `e⁻¹`.

use std::collections::{BTreeMap, BTreeSet};

use crate::environment::EnvironmentTransform;
use crate::error::{Error, Result};
use crate::ObjectId;

pub const DEFAULT_BETA_MIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    nodes: BTreeSet<ObjectId>,
    // keyed with the smaller id first
    weights: BTreeMap<(ObjectId, ObjectId), f64>,
    beta_min: f64,
}

fn edge_key(a: &ObjectId, b: &ObjectId) -> (ObjectId, ObjectId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

fn check_beta_min(beta_min: f64) -> Result<()> {
    if !(beta_min > 0.0 && beta_min <= 1.0) {
        return Err(Error::invalid(format!("beta_min must be in (0, 1], got {beta_min}")));
    }
    Ok(())
}

impl SimilarityGraph {
    /// Builds a graph from explicit edges. Every edge endpoint must be a
    /// node; weights must lie in `(0, 1]`.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = ObjectId>,
        edges: impl IntoIterator<Item = (ObjectId, ObjectId, f64)>,
        beta_min: f64,
    ) -> Result<Self> {
        check_beta_min(beta_min)?;
        let nodes: BTreeSet<ObjectId> = nodes.into_iter().collect();
        let mut weights = BTreeMap::new();
        for (a, b, beta) in edges {
            if a == b {
                return Err(Error::invalid(format!("self edge on {a}")));
            }
            for end in [&a, &b] {
                if !nodes.contains(end) {
                    return Err(Error::NotFound(end.clone()));
                }
            }
            if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
                return Err(Error::invalid(format!("weight {beta} on {a}-{b} outside (0, 1]")));
            }
            if weights.insert(edge_key(&a, &b), beta).is_some() {
                return Err(Error::invalid(format!("duplicate edge {a}-{b}")));
            }
        }
        Ok(Self {
            nodes,
            weights,
            beta_min,
        })
    }

    pub fn nodes(&self) -> &BTreeSet<ObjectId> {
        &self.nodes
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn weight(&self, a: &ObjectId, b: &ObjectId) -> Option<f64> {
        if a == b {
            return None;
        }
        self.weights.get(&edge_key(a, b)).copied()
    }

    /// Edges as `(a, b, β)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (&ObjectId, &ObjectId, f64)> {
        self.weights.iter().map(|((a, b), &w)| (a, b, w))
    }

    /// Neighbors with `β >= β_min`, by descending weight then ascending id.
    pub fn neighbors(&self, id: &ObjectId) -> Result<Vec<(ObjectId, f64)>> {
        if !self.nodes.contains(id) {
            return Err(Error::NotFound(id.clone()));
        }
        let mut out: Vec<(ObjectId, f64)> = self
            .weights
            .iter()
            .filter(|(_, &w)| w >= self.beta_min)
            .filter_map(|((a, b), &w)| {
                if a == id {
                    Some((b.clone(), w))
                } else if b == id {
                    Some((a.clone(), w))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        Ok(out)
    }

    /// Same graph with every node and edge except `id` removed.
    pub fn without(&self, removed: &BTreeSet<ObjectId>) -> Self {
        Self {
            nodes: self.nodes.difference(removed).cloned().collect(),
            weights: self
                .weights
                .iter()
                .filter(|((a, b), _)| !removed.contains(a) && !removed.contains(b))
                .map(|(k, &w)| (k.clone(), w))
                .collect(),
            beta_min: self.beta_min,
        }
    }
}

/// Window-averaged `‖l_i - l_j‖² + ‖R_i - R_j‖²_F` for every object pair.
pub fn transform_discrepancies(
    history: &BTreeMap<ObjectId, Vec<EnvironmentTransform>>,
) -> Result<BTreeMap<(ObjectId, ObjectId), f64>> {
    if history.len() < 2 {
        return Err(Error::invalid("graph needs at least two objects"));
    }
    let mut lens = history.values().map(Vec::len);
    let windows = lens.next().unwrap_or(0);
    if windows == 0 || lens.any(|l| l != windows) {
        return Err(Error::invalid(
            "transform histories must be nonempty and equally long",
        ));
    }
    let dim = history.values().next().unwrap()[0].dim();
    if history.values().flatten().any(|t| t.dim() != dim) {
        return Err(Error::invalid("transform histories differ in dimension"));
    }
    let ids: Vec<&ObjectId> = history.keys().collect();
    let mut out = BTreeMap::new();
    for (x, a) in ids.iter().enumerate() {
        for b in &ids[x + 1..] {
            let total: f64 = history[*a]
                .iter()
                .zip(&history[*b])
                .map(|(ta, tb)| ta.squared_discrepancy(tb))
                .sum();
            out.insert(((*a).clone(), (*b).clone()), total / windows as f64);
        }
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Turns pairwise discrepancies into weights `exp(-D/median(D))`, keeping
/// edges with `β >= β_min`. If the median is zero the mean is used as the
/// scale; if every discrepancy is zero all weights are 1.
pub fn graph_from_discrepancies(
    nodes: impl IntoIterator<Item = ObjectId>,
    discrepancies: &BTreeMap<(ObjectId, ObjectId), f64>,
    beta_min: f64,
) -> Result<SimilarityGraph> {
    check_beta_min(beta_min)?;
    if discrepancies.values().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::invalid("discrepancies must be finite and nonnegative"));
    }
    let mut values: Vec<f64> = discrepancies.values().copied().collect();
    let mut scale = median(&mut values);
    if scale == 0.0 {
        scale = values.iter().sum::<f64>() / values.len().max(1) as f64;
    }
    let edges = discrepancies.iter().filter_map(|((a, b), &d)| {
        let beta = if scale > 0.0 { (-d / scale).exp() } else { 1.0 };
        (beta >= beta_min && beta > 0.0).then(|| (a.clone(), b.clone(), beta))
    });
    SimilarityGraph::from_edges(nodes, edges.collect::<Vec<_>>(), beta_min)
}

/// Builds the similarity graph from per-object transform histories
/// collected over the same training windows.
pub fn build_graph(
    history: &BTreeMap<ObjectId, Vec<EnvironmentTransform>>,
    beta_min: f64,
) -> Result<SimilarityGraph> {
    let discrepancies = transform_discrepancies(history)?;
    graph_from_discrepancies(history.keys().cloned(), &discrepancies, beta_min)
}

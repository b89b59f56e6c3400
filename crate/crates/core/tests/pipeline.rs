use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use envauth::environment::{authenticate_with_env, EnvironmentTransform};
use envauth::features::default_feature_names;
use envauth::fingerprint::{FingerprintMatrix, ReferenceFingerprint};
use envauth::graph::SimilarityGraph;
use envauth::{Error, ObjectId, Verdict};

fn fp(data: DMatrix<f64>, id: &ObjectId) -> FingerprintMatrix {
    let m = data.ncols();
    FingerprintMatrix::new(data, default_feature_names(m), id.clone(), 0).unwrap()
}

struct Scene {
    ids: Vec<ObjectId>,
    obs: BTreeMap<ObjectId, FingerprintMatrix>,
    refs: BTreeMap<ObjectId, ReferenceFingerprint>,
    graph: SimilarityGraph,
}

fn shared_scene(seed: u64, objects: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (12, 3);
    let a = DMatrix::from_fn(m, m, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
    let rotation = ((&a - a.transpose()) * 0.5).exp();
    let shared = EnvironmentTransform::new(rotation, DVector::from_fn(m, |_, _| rng.sample(StandardNormal))).unwrap();
    let ids: Vec<ObjectId> = (0..objects).map(|i| ObjectId::new(format!("o{i}"))).collect();
    let mut obs = BTreeMap::new();
    let mut refs = BTreeMap::new();
    for id in &ids {
        let base = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        obs.insert(id.clone(), fp(shared.apply_rows(&base), id));
        refs.insert(id.clone(), ReferenceFingerprint::new(fp(base, id)));
    }
    let edges: Vec<_> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, a)| ids[i + 1..].iter().map(move |b| (a.clone(), b.clone(), 0.7)))
        .collect();
    let graph = SimilarityGraph::from_edges(ids.iter().cloned(), edges, 0.2).unwrap();
    Scene { ids, obs, refs, graph }
}

#[test]
fn shared_environment_is_fully_compensated() {
    for seed in 0..10 {
        let s = shared_scene(seed, 5);
        for id in &s.ids {
            let d = authenticate_with_env(id, &s.obs[id], &s.refs[id], &s.obs, &s.refs, &s.graph, 1.0).unwrap();
            assert!(d.distance < 1e-6, "seed {seed} {id}: {}", d.distance);
            assert_eq!(d.verdict, Verdict::Legitimate);
        }
    }
}

#[test]
fn isolated_object_reports_no_neighbors() {
    let s = shared_scene(1, 3);
    let lonely = SimilarityGraph::from_edges(s.ids.iter().cloned(), Vec::new(), 0.2).unwrap();
    let id = &s.ids[0];
    let err = authenticate_with_env(id, &s.obs[id], &s.refs[id], &s.obs, &s.refs, &lonely, 1.0).unwrap_err();
    assert!(matches!(err, Error::NoNeighbors(ref x) if x == id));
}

//! Synthetic ground truth: a shared environment, legitimate objects living
//! in it, and attackers that clone or emulate one of them from elsewhere.
//!
//! Every random component draws from its own ChaCha8 stream derived from
//! the scenario seed, so adding objects never perturbs the environment and
//! reruns are bit-identical.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distance::{self, Verdict};
use crate::environment::{self, EnvironmentTransform};
use crate::error::{Error, Result};
use crate::features::default_feature_names;
use crate::fingerprint::{self, FingerprintMatrix, ReferenceFingerprint};
use crate::graph::{self, SimilarityGraph, DEFAULT_BETA_MIN};
use crate::linalg;
use crate::transfer;
use crate::ObjectId;

pub const SCHEMA_VERSION: u32 = 1;
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), one stream per component";

const STREAM_ENV: u64 = 1;
const STREAM_BASE: u64 = 2 << 32;
const STREAM_NOISE: u64 = 3 << 32;
const STREAM_REF_NOISE: u64 = 4 << 32;
const STREAM_ATTACK_ENV: u64 = 5 << 32;
const STREAM_ATTACK_NOISE: u64 = 6 << 32;
const STREAM_ATTACK_OFFSET: u64 = 7 << 32;
const STREAM_SOURCE_BASE: u64 = 8 << 32;
const STREAM_SOURCE_NOISE: u64 = 9 << 32;
const STREAM_SOURCE_REF_NOISE: u64 = 10 << 32;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    None,
    CyberEmulation,
    CyberPhysical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub num_objects: usize,
    pub num_windows: usize,
    /// Rows per fingerprint matrix.
    pub window_length: usize,
    pub feature_dim: usize,
    /// Translation step std and maximum rotation angle of the environment.
    pub env_magnitude: f64,
    /// Per-object share of the common environment; empty means 1 for all.
    pub env_fidelity: Vec<f64>,
    pub noise: NoiseModel,
    pub attacker_kind: AttackerKind,
    pub attacker_count: usize,
    pub seed: u64,
    /// Std of per-object mean fingerprints around the origin.
    pub object_spread: f64,
    /// Std of rows around an object's mean fingerprint.
    pub fingerprint_spread: f64,
    /// Emulation error, in multiples of `fingerprint_spread`.
    pub emulation_offset: f64,
    /// Environment-free windows recorded to pick each reference from.
    pub reference_windows: usize,
    pub max_rounds: usize,
    pub beta_min: f64,
    /// Threshold grid for the sweep curve; empty means the default log grid.
    pub sweep_taus: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_objects: 20,
            num_windows: 20,
            window_length: 16,
            feature_dim: 3,
            env_magnitude: 0.5,
            env_fidelity: Vec::new(),
            noise: NoiseModel { sigma: 0.05 },
            attacker_kind: AttackerKind::None,
            attacker_count: 0,
            seed: 0,
            object_spread: 0.5,
            fingerprint_spread: 1.0,
            emulation_offset: 3.0,
            reference_windows: 5,
            max_rounds: 1,
            beta_min: DEFAULT_BETA_MIN,
            sweep_taus: Vec::new(),
        }
    }
}

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn check_scale(path: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(schema_err(path, format!("must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema_err(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.num_objects < 2 {
            return Err(schema_err("num_objects", "need at least 2 objects"));
        }
        if self.num_windows < 2 {
            return Err(schema_err("num_windows", "need at least 2 windows"));
        }
        if self.window_length < 2 {
            return Err(schema_err("window_length", "need at least 2 rows"));
        }
        if self.feature_dim == 0 {
            return Err(schema_err("feature_dim", "must be positive"));
        }
        if self.attacker_count >= self.num_objects {
            return Err(schema_err(
                "attacker_count",
                format!(
                    "must be below num_objects ({} >= {})",
                    self.attacker_count, self.num_objects
                ),
            ));
        }
        if self.attacker_kind == AttackerKind::None && self.attacker_count > 0 {
            return Err(schema_err("attacker_count", "must be 0 when attacker_kind is none"));
        }
        check_scale("env_magnitude", self.env_magnitude)?;
        check_scale("noise.sigma", self.noise.sigma)?;
        check_scale("object_spread", self.object_spread)?;
        check_scale("fingerprint_spread", self.fingerprint_spread)?;
        check_scale("emulation_offset", self.emulation_offset)?;
        if !self.env_fidelity.is_empty() {
            if self.env_fidelity.len() != self.num_objects {
                return Err(schema_err(
                    "env_fidelity",
                    format!("expected {} entries, got {}", self.num_objects, self.env_fidelity.len()),
                ));
            }
            if let Some((i, b)) = self
                .env_fidelity
                .iter()
                .enumerate()
                .find(|(_, b)| !(0.0..=1.0).contains(*b))
            {
                return Err(schema_err(&format!("env_fidelity[{i}]"), format!("{b} outside [0, 1]")));
            }
        }
        if self.reference_windows == 0 {
            return Err(schema_err("reference_windows", "must be positive"));
        }
        if self.max_rounds == 0 {
            return Err(schema_err("max_rounds", "must be positive"));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= 1.0) {
            return Err(schema_err("beta_min", "must be in (0, 1]"));
        }
        if let Some(t) = self.sweep_taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(schema_err("sweep_taus", format!("invalid threshold {t}")));
        }
        Ok(())
    }

    pub fn training_windows(&self) -> usize {
        self.num_windows / 2
    }

    pub fn fidelity(&self, object: usize) -> f64 {
        self.env_fidelity.get(object).copied().unwrap_or(1.0)
    }

    pub fn object_ids(&self) -> Vec<ObjectId> {
        (0..self.num_objects).map(object_id).collect()
    }

    /// Attackers take over the last `attacker_count` objects.
    pub fn is_attacker_slot(&self, object: usize) -> bool {
        self.attacker_kind != AttackerKind::None
            && object >= self.num_objects - self.attacker_count
    }
}

pub fn object_id(i: usize) -> ObjectId {
    ObjectId::new(format!("obj{i:03}"))
}

/// Default sweep grid: `10^(k/8)` for `k = -32..=32`.
pub fn default_tau_grid() -> Vec<f64> {
    (-32..=32).map(|k| 10f64.powf(k as f64 / 8.0)).collect()
}

/// Environment trajectory kept in generator form so it can be scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    generators: Vec<DMatrix<f64>>,
    translations: Vec<DVector<f64>>,
}

impl Environment {
    /// Random walk of `len` steps: translation steps `N(0, magnitude²)`,
    /// skew generator steps of the same scale, with the generator rescaled
    /// whenever its rotation angle would exceed `magnitude`.
    pub fn random_walk(m: usize, len: usize, magnitude: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut generators = Vec::with_capacity(len);
        let mut translations = Vec::with_capacity(len);
        let mut a = DMatrix::zeros(m, m);
        let mut l = DVector::zeros(m);
        for _ in 0..len {
            let step = DMatrix::from_fn(m, m, |_, _| magnitude * normal(rng));
            a += linalg::skew(&step);
            let angle = linalg::generator_angle(&a);
            if angle > magnitude {
                a *= magnitude / angle;
            }
            l += DVector::from_fn(m, |_, _| magnitude * normal(rng));
            generators.push(a.clone());
            translations.push(l.clone());
        }
        Self {
            generators,
            translations,
        }
    }

    pub fn len(&self) -> usize {
        self.translations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.translations.is_empty()
    }

    /// Window `t` transform scaled by `fidelity` (0 gives identity).
    pub fn transform(&self, t: usize, fidelity: f64) -> EnvironmentTransform {
        let rotation = linalg::rotation_from_generator(&(&self.generators[t] * fidelity));
        EnvironmentTransform::new(rotation, &self.translations[t] * fidelity)
            .expect("exponential of a skew matrix is a rotation")
    }

    pub fn transforms(&self) -> Vec<EnvironmentTransform> {
        (0..self.len()).map(|t| self.transform(t, 1.0)).collect()
    }
}

/// The shared environment, one transform per window.
pub fn generate_environment(config: &ScenarioConfig) -> Environment {
    let mut rng = rng_for(config.seed, STREAM_ENV);
    Environment::random_walk(config.feature_dim, config.num_windows, config.env_magnitude, &mut rng)
}

/// Noise-free base fingerprint: an object mean plus per-row spread.
pub fn generate_base(
    n: usize,
    m: usize,
    object_spread: f64,
    fingerprint_spread: f64,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let mean = DVector::from_fn(m, |_, _| object_spread * normal(rng));
    DMatrix::from_fn(n, m, |_, c| mean[c] + fingerprint_spread * normal(rng))
}

fn noise(n: usize, m: usize, sigma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| sigma * normal(rng))
}

fn matrix(data: DMatrix<f64>, id: &ObjectId, window: usize) -> Result<FingerprintMatrix> {
    let m = data.ncols();
    FingerprintMatrix::new(data, default_feature_names(m), id.clone(), window as u32)
}

/// Reference chosen among environment-free noisy recordings of the base.
pub fn reference_from_base(
    base: &DMatrix<f64>,
    id: &ObjectId,
    windows: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ReferenceFingerprint> {
    let recordings = (0..windows)
        .map(|w| matrix(base + noise(base.nrows(), base.ncols(), sigma, rng), id, w))
        .collect::<Result<Vec<_>>>()?;
    fingerprint::select_reference(&recordings)
}

/// Observed windows `R'_t·base + l'_t + w`, with the environment scaled
/// by `fidelity`.
pub fn generate_object_data(
    env: &Environment,
    base: &DMatrix<f64>,
    fidelity: f64,
    sigma: f64,
    id: &ObjectId,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FingerprintMatrix>> {
    (0..env.len())
        .map(|t| {
            let moved = env.transform(t, fidelity).apply_rows(base);
            matrix(moved + noise(base.nrows(), base.ncols(), sigma, rng), id, t)
        })
        .collect()
}

/// Attacker windows impersonating `target`, starting at window `first`.
/// The attacker lives in its own environment, which starts at identity
/// when the attack begins.
pub fn spawn_attacker(
    config: &ScenarioConfig,
    target: &ReferenceFingerprint,
    slot: usize,
    first: usize,
) -> Result<Vec<FingerprintMatrix>> {
    let reference = target.matrix().data();
    let (n, m) = reference.shape();
    let base = match config.attacker_kind {
        AttackerKind::None => return Err(Error::invalid("scenario has no attacker kind")),
        AttackerKind::CyberPhysical => reference.clone(),
        AttackerKind::CyberEmulation => {
            let mut rng = rng_for(config.seed, STREAM_ATTACK_OFFSET | slot as u64);
            let scale = config.emulation_offset * config.fingerprint_spread;
            let offset = DVector::from_fn(m, |_, _| {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            });
            let mut b = reference.clone();
            for mut row in b.row_iter_mut() {
                row += offset.transpose();
            }
            b
        }
    };
    let len = config.num_windows - first;
    let env = Environment::random_walk(
        m,
        len,
        config.env_magnitude,
        &mut rng_for(config.seed, STREAM_ATTACK_ENV | slot as u64),
    );
    let mut rng = rng_for(config.seed, STREAM_ATTACK_NOISE | slot as u64);
    (0..len)
        .map(|k| {
            let moved = env.transform(k, 1.0).apply_rows(&base);
            matrix(moved + noise(n, m, config.noise.sigma, &mut rng), target.object_id(), first + k)
        })
        .collect()
}

/// One evaluated window of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub object_id: ObjectId,
    pub window: usize,
    pub attacker: bool,
    pub delta: f64,
    pub delta_hat: f64,
    pub verdict_base: Verdict,
    pub verdict_env: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    /// Threshold calibrated on the training split.
    pub tau: f64,
    pub false_positive_rate: f64,
    pub detection_rate: Option<f64>,
    /// Smallest threshold with no false positives on the evaluation split.
    pub zero_fp_tau: f64,
    pub detection_at_zero_fpr: Option<f64>,
    /// Smallest attacker distance minus largest legitimate distance.
    pub separation_gap: Option<f64>,
    pub mean_legit_distance: f64,
    pub mean_attacker_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object_id: ObjectId,
    pub attacker: bool,
    pub mean_delta: f64,
    pub mean_delta_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub accuracy_base: f64,
    pub accuracy_env: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub seed: u64,
    pub prng: String,
    pub attacker_kind: AttackerKind,
    pub baseline: PipelineMetrics,
    pub environment: PipelineMetrics,
    pub graph_edges: usize,
    /// Object-windows decided without any usable neighbor.
    pub fallback_decisions: usize,
    pub objects: Vec<ObjectSummary>,
    pub sweep: Vec<SweepPoint>,
    pub windows: Vec<WindowRecord>,
}

/// Distances from one scenario run before any summarizing.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub tau_base: f64,
    pub tau_env: f64,
    pub graph: SimilarityGraph,
    pub fallback_decisions: usize,
    pub records: Vec<WindowRecord>,
}

struct Population {
    ids: Vec<ObjectId>,
    references: BTreeMap<ObjectId, ReferenceFingerprint>,
    // per window, per object
    windows: Vec<BTreeMap<ObjectId, FingerprintMatrix>>,
}

fn build_population(config: &ScenarioConfig, env: &Environment) -> Result<Population> {
    let (n, m) = (config.window_length, config.feature_dim);
    let ids = config.object_ids();
    let first_eval = config.training_windows();
    let mut references = BTreeMap::new();
    let mut windows = vec![BTreeMap::new(); config.num_windows];
    for (i, id) in ids.iter().enumerate() {
        let base = generate_base(
            n,
            m,
            config.object_spread,
            config.fingerprint_spread,
            &mut rng_for(config.seed, STREAM_BASE | i as u64),
        );
        let reference = reference_from_base(
            &base,
            id,
            config.reference_windows,
            config.noise.sigma,
            &mut rng_for(config.seed, STREAM_REF_NOISE | i as u64),
        )?;
        let mut data = generate_object_data(
            env,
            &base,
            config.fidelity(i),
            config.noise.sigma,
            id,
            &mut rng_for(config.seed, STREAM_NOISE | i as u64),
        )?;
        if config.is_attacker_slot(i) {
            let attack = spawn_attacker(config, &reference, i, first_eval)?;
            data.splice(first_eval.., attack);
        }
        for (t, w) in data.into_iter().enumerate() {
            windows[t].insert(id.clone(), w);
        }
        references.insert(id.clone(), reference);
    }
    Ok(Population {
        ids,
        references,
        windows,
    })
}

/// Generates the scenario and scores every evaluation window with both
/// pipelines. The graph and both thresholds come from the training split,
/// during which no attacker is active.
pub fn simulate_run(config: &ScenarioConfig) -> Result<ScenarioRun> {
    config.validate()?;
    let env = generate_environment(config);
    let pop = build_population(config, &env)?;
    let train = config.training_windows();

    let mut history: BTreeMap<ObjectId, Vec<EnvironmentTransform>> = BTreeMap::new();
    for window in &pop.windows[..train] {
        for (id, obs) in window {
            let t = environment::estimate_transform(obs, &pop.references[id])?.transform;
            history.entry(id.clone()).or_default().push(t);
        }
    }
    let graph = graph::build_graph(&history, config.beta_min)?;

    let mut train_base = Vec::new();
    let mut train_env = Vec::new();
    for window in &pop.windows[..train] {
        let outcome = environment::multi_stage_filter(window, &pop.references, &graph, f64::INFINITY, 1)?;
        for (id, obs) in window {
            train_base.push(distance::fingerprint_distance(obs, pop.references[id].matrix())?);
            train_env.push(outcome.decisions[id].distance);
        }
    }
    let tau_base = distance::calibrate_threshold(&train_base, &[], distance::DEFAULT_MARGIN)?;
    let tau_env = distance::calibrate_threshold(&train_env, &[], distance::DEFAULT_MARGIN)?;

    let mut records = Vec::new();
    let mut fallback_decisions = 0;
    for (t, window) in pop.windows.iter().enumerate().skip(train) {
        let outcome =
            environment::multi_stage_filter(window, &pop.references, &graph, tau_env, config.max_rounds)?;
        fallback_decisions += outcome.fallback.len();
        for (i, id) in pop.ids.iter().enumerate() {
            let delta = distance::fingerprint_distance(&window[id], pop.references[id].matrix())?;
            let env_decision = &outcome.decisions[id];
            records.push(WindowRecord {
                object_id: id.clone(),
                window: t,
                attacker: config.is_attacker_slot(i),
                delta,
                delta_hat: env_decision.distance,
                verdict_base: distance::authenticate(delta, tau_base).verdict,
                verdict_env: env_decision.verdict,
            });
        }
    }
    Ok(ScenarioRun {
        tau_base,
        tau_env,
        graph,
        fallback_decisions,
        records,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fraction_above(xs: &[f64], tau: f64) -> f64 {
    xs.iter().filter(|&&d| d > tau).count() as f64 / xs.len() as f64
}

/// Summary statistics for one pipeline from its evaluation distances.
pub fn pipeline_metrics(legit: &[f64], attackers: &[f64], tau: f64) -> PipelineMetrics {
    let zero_fp_tau = legit.iter().copied().fold(0.0, f64::max);
    let has_attackers = !attackers.is_empty();
    PipelineMetrics {
        tau,
        false_positive_rate: fraction_above(legit, tau),
        detection_rate: has_attackers.then(|| fraction_above(attackers, tau)),
        zero_fp_tau,
        detection_at_zero_fpr: has_attackers.then(|| fraction_above(attackers, zero_fp_tau)),
        separation_gap: has_attackers
            .then(|| attackers.iter().copied().fold(f64::INFINITY, f64::min) - zero_fp_tau),
        mean_legit_distance: mean(legit),
        mean_attacker_distance: has_attackers.then(|| mean(attackers)),
    }
}

/// Fraction of correct verdicts per threshold for both pipelines.
pub fn sweep_records(records: &[WindowRecord], taus: &[f64]) -> Vec<SweepPoint> {
    let correct = |d: f64, attacker: bool, tau: f64| (d > tau) == attacker;
    let total = records.len() as f64;
    taus.iter()
        .map(|&tau| SweepPoint {
            tau,
            accuracy_base: records.iter().filter(|r| correct(r.delta, r.attacker, tau)).count() as f64
                / total,
            accuracy_env: records
                .iter()
                .filter(|r| correct(r.delta_hat, r.attacker, tau))
                .count() as f64
                / total,
        })
        .collect()
}

pub fn sweep_threshold(config: &ScenarioConfig, taus: &[f64]) -> Result<Vec<SweepPoint>> {
    if taus.is_empty() {
        return Err(Error::invalid("empty threshold list"));
    }
    Ok(sweep_records(&simulate_run(config)?.records, taus))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport> {
    let run = simulate_run(config)?;
    let split = |f: fn(&WindowRecord) -> f64, attacker: bool| -> Vec<f64> {
        run.records.iter().filter(|r| r.attacker == attacker).map(f).collect()
    };
    let baseline = pipeline_metrics(&split(|r| r.delta, false), &split(|r| r.delta, true), run.tau_base);
    let environment =
        pipeline_metrics(&split(|r| r.delta_hat, false), &split(|r| r.delta_hat, true), run.tau_env);

    let objects = config
        .object_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let mine: Vec<&WindowRecord> = run.records.iter().filter(|r| r.object_id == id).collect();
            ObjectSummary {
                attacker: config.is_attacker_slot(i),
                mean_delta: mine.iter().map(|r| r.delta).sum::<f64>() / mine.len() as f64,
                mean_delta_hat: mine.iter().map(|r| r.delta_hat).sum::<f64>() / mine.len() as f64,
                object_id: id,
            }
        })
        .collect();
    let taus = if config.sweep_taus.is_empty() {
        default_tau_grid()
    } else {
        config.sweep_taus.clone()
    };
    Ok(MetricsReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        prng: PRNG_NAME.to_owned(),
        attacker_kind: config.attacker_kind,
        baseline,
        environment,
        graph_edges: run.graph.edges().count(),
        fallback_decisions: run.fallback_decisions,
        objects,
        sweep: sweep_records(&run.records, &taus),
        windows: run.records,
    })
}

/// Configuration of the transfer-learning evaluation: a small target
/// domain plus a larger source domain under the same environment, with
/// source observations degraded by increasing noise classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferEvalConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub num_seeds: usize,
    pub num_targets: usize,
    pub num_sources: usize,
    pub num_windows: usize,
    pub window_length: usize,
    pub feature_dim: usize,
    pub env_magnitude: f64,
    pub noise: NoiseModel,
    /// Extra observation-noise std on source objects, one per class.
    pub class_noise: Vec<f64>,
    pub alphas: Vec<f64>,
    pub object_spread: f64,
    pub fingerprint_spread: f64,
    pub reference_windows: usize,
    pub beta_min: f64,
}

impl Default for TransferEvalConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            num_seeds: 30,
            num_targets: 5,
            num_sources: 15,
            num_windows: 20,
            window_length: 16,
            feature_dim: 3,
            env_magnitude: 0.5,
            noise: NoiseModel { sigma: 0.05 },
            class_noise: vec![0.0, 0.1, 0.2, 0.4, 0.8],
            alphas: transfer::ALPHA_PRESETS.to_vec(),
            object_spread: 0.5,
            fingerprint_spread: 1.0,
            reference_windows: 5,
            beta_min: DEFAULT_BETA_MIN,
        }
    }
}

impl TransferEvalConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema_err(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.num_seeds == 0 {
            return Err(schema_err("num_seeds", "must be positive"));
        }
        if self.num_targets < 2 {
            return Err(schema_err("num_targets", "need at least 2 targets"));
        }
        if self.num_sources == 0 {
            return Err(schema_err("num_sources", "must be positive"));
        }
        if self.num_windows < 2 || self.window_length < 2 || self.feature_dim == 0 {
            return Err(schema_err("num_windows", "windows, rows and features must be nonzero"));
        }
        if self.class_noise.is_empty() {
            return Err(schema_err("class_noise", "need at least one class"));
        }
        for (i, s) in self.class_noise.iter().enumerate() {
            check_scale(&format!("class_noise[{i}]"), *s)?;
        }
        for (i, a) in self.alphas.iter().enumerate() {
            check_scale(&format!("alphas[{i}]"), *a)?;
        }
        check_scale("env_magnitude", self.env_magnitude)?;
        check_scale("noise.sigma", self.noise.sigma)?;
        check_scale("object_spread", self.object_spread)?;
        check_scale("fingerprint_spread", self.fingerprint_spread)?;
        if self.reference_windows == 0 {
            return Err(schema_err("reference_windows", "must be positive"));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= 1.0) {
            return Err(schema_err("beta_min", "must be in (0, 1]"));
        }
        Ok(())
    }

    /// `0` first, then the configured weights without duplicates.
    pub fn alpha_columns(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &a in &self.alphas {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    /// 1-based noise class.
    pub class: usize,
    pub source_noise_sigma: f64,
    /// Mean legitimate target distance without transfer.
    pub no_transfer: f64,
    /// `(alpha, mean legitimate target distance)`, starting with alpha 0.
    pub by_alpha: Vec<(f64, f64)>,
}

/// Seed-averaged legitimate target distances per noise class and alpha.
pub fn run_transfer_eval(config: &TransferEvalConfig) -> Result<Vec<TransferRow>> {
    config.validate()?;
    let alphas = config.alpha_columns();
    let classes = config.class_noise.len();
    let mut sums = vec![vec![0.0; alphas.len() + 1]; classes];
    for s in 0..config.num_seeds {
        let per_seed = transfer_seed(config, config.seed.wrapping_add(s as u64), &alphas)?;
        for (acc, row) in sums.iter_mut().zip(per_seed) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    let k = config.num_seeds as f64;
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(c, acc)| TransferRow {
            class: c + 1,
            source_noise_sigma: config.class_noise[c],
            no_transfer: acc[0] / k,
            by_alpha: alphas.iter().zip(&acc[1..]).map(|(&a, v)| (a, v / k)).collect(),
        })
        .collect())
}

/// Mean legitimate target distance for one seed, per class:
/// `[no_transfer, alpha_0, alpha_1, ...]`. Targets without a target-domain
/// neighbor are left out of every column.
pub fn transfer_seed(config: &TransferEvalConfig, seed: u64, alphas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (config.window_length, config.feature_dim);
    let sigma = config.noise.sigma;
    let env = Environment::random_walk(m, config.num_windows, config.env_magnitude, &mut rng_for(seed, STREAM_ENV));
    let train = config.num_windows / 2;

    let mut targets = Vec::new();
    for i in 0..config.num_targets {
        let id = ObjectId::new(format!("tgt{i:03}"));
        let base = generate_base(n, m, config.object_spread, config.fingerprint_spread, &mut rng_for(seed, STREAM_BASE | i as u64));
        let reference = reference_from_base(&base, &id, config.reference_windows, sigma, &mut rng_for(seed, STREAM_REF_NOISE | i as u64))?;
        let data = generate_object_data(&env, &base, 1.0, sigma, &id, &mut rng_for(seed, STREAM_NOISE | i as u64))?;
        targets.push((id, reference, data));
    }
    // Clean source data plus one fixed standard-normal draw per entry,
    // scaled by each class's noise level.
    let mut sources = Vec::new();
    for i in 0..config.num_sources {
        let id = ObjectId::new(format!("src{i:03}"));
        let base = generate_base(n, m, config.object_spread, config.fingerprint_spread, &mut rng_for(seed, STREAM_SOURCE_BASE | i as u64));
        let reference = reference_from_base(&base, &id, config.reference_windows, sigma, &mut rng_for(seed, STREAM_SOURCE_REF_NOISE | i as u64))?;
        let mut rng = rng_for(seed, STREAM_SOURCE_NOISE | i as u64);
        let clean = generate_object_data(&env, &base, 1.0, sigma, &id, &mut rng)?;
        let extra: Vec<DMatrix<f64>> = (0..config.num_windows).map(|_| noise(n, m, 1.0, &mut rng)).collect();
        sources.push((id, reference, clean, extra));
    }

    let estimate = |obs: &FingerprintMatrix, r: &ReferenceFingerprint| {
        environment::estimate_transform(obs, r).map(|e| e.transform)
    };
    let mut target_est: BTreeMap<ObjectId, Vec<EnvironmentTransform>> = BTreeMap::new();
    for (id, r, data) in &targets {
        target_est.insert(id.clone(), data.iter().map(|w| estimate(w, r)).collect::<Result<_>>()?);
    }
    let target_history: BTreeMap<_, _> =
        target_est.iter().map(|(k, v)| (k.clone(), v[..train].to_vec())).collect();
    let target_graph = graph::build_graph(&target_history, config.beta_min)?;

    let mut out = Vec::with_capacity(config.class_noise.len());
    for &class_sigma in &config.class_noise {
        let mut source_est: BTreeMap<ObjectId, Vec<EnvironmentTransform>> = BTreeMap::new();
        for (id, r, clean, extra) in &sources {
            let ests = clean
                .iter()
                .zip(extra)
                .map(|(w, e)| estimate(&w.with_data(w.data() + e * class_sigma)?, r))
                .collect::<Result<_>>()?;
            source_est.insert(id.clone(), ests);
        }
        let mut joint_history = target_history.clone();
        for (k, v) in &source_est {
            joint_history.insert(k.clone(), v[..train].to_vec());
        }
        let joint_graph = graph::build_graph(&joint_history, config.beta_min)?;

        let mut sums = vec![0.0; alphas.len() + 1];
        let mut count = 0usize;
        for (id, reference, data) in &targets {
            let target_nb = target_graph.neighbors(id)?;
            let source_nb: Vec<(ObjectId, f64)> = joint_graph
                .neighbors(id)?
                .into_iter()
                .filter(|(k, _)| source_est.contains_key(k))
                .collect();
            if target_nb.is_empty() {
                // nothing to fuse without transfer, so nothing to compare
                continue;
            }
            for (t, obs) in data.iter().enumerate().skip(train) {
                let tgt: Vec<(EnvironmentTransform, f64)> =
                    target_nb.iter().map(|(k, b)| (target_est[k][t].clone(), *b)).collect();
                let src: Vec<(EnvironmentTransform, f64)> =
                    source_nb.iter().map(|(k, b)| (source_est[k][t].clone(), *b)).collect();
                let (ts, ws): (Vec<_>, Vec<_>) = tgt.iter().cloned().unzip();
                sums[0] += environment::compensated_distance(obs, reference, &ts, &ws)?;
                for (slot, &alpha) in alphas.iter().enumerate() {
                    let fused = transfer::joint_fuse(&tgt, &src, alpha)?;
                    let corrected = environment::correct_reference(reference, &fused)?;
                    sums[slot + 1] += distance::fingerprint_distance(obs, corrected.matrix())?;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid("no target object has a target-domain neighbor"));
        }
        out.push(sums.into_iter().map(|s| s / count as f64).collect());
    }
    Ok(out)
}

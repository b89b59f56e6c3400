//! Command implementations behind the `envauth` binary. Each command writes
//! a `manifest.json` into its output directory before anything else.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distance::{self, Verdict};
use crate::environment;
use crate::error::{Error, Result};
use crate::features::{self, FEATURE_NAMES};
use crate::fingerprint::{self, FingerprintMatrix, ReferenceFingerprint, COVARIANCE_RIDGE};
use crate::graph::{self, SimilarityGraph};
use crate::io::{self, FingerprintRow, FingerprintTable};
use crate::simulate::{self, MetricsReport, ScenarioConfig, TransferEvalConfig};
use crate::ObjectId;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const REFERENCES_FILE: &str = "references.csv";
pub const GRAPH_FILE: &str = "graph.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
}

fn timestamp() -> String {
    let from_env = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    from_env
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn start(command: &str, out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = RunManifest {
        command: command.to_owned(),
        config_path: config.map(|p| p.display().to_string()),
        seed,
        output_dir: out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        timestamp: timestamp(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

/// Extracts one feature row per signal, in input order, as a single
/// fingerprint window `fingerprints.csv`.
pub fn extract(
    signals: &[PathBuf],
    template: &Path,
    out: &Path,
    object_id: &str,
    window: u32,
    entropy_bins: usize,
) -> Result<PathBuf> {
    if signals.is_empty() {
        return Err(Error::invalid("no input signals"));
    }
    let template = io::read_signal(template)?;
    // read everything before touching the output directory
    let mut rows = Vec::with_capacity(signals.len());
    for (j, path) in signals.iter().enumerate() {
        let signal = io::read_signal(path)
            .map_err(|e| match e {
                Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
                other => other,
            })?;
        let fv = features::extract_features_with_bins(&signal, &template, entropy_bins)?;
        rows.push(FingerprintRow {
            object_id: ObjectId::new(object_id),
            window_index: window,
            row_index: j,
            label: None,
            values: fv.values().to_vec(),
        });
    }
    start("extract", out, None, None)?;
    let path = out.join("fingerprints.csv");
    FingerprintTable {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    }
    .write(&path)?;
    Ok(path)
}

/// Trained state stored next to the references and graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedMetadata {
    pub schema_version: u32,
    /// Threshold for environment-compensated distances.
    pub tau: f64,
    /// Threshold for plain distances.
    pub tau_base: f64,
    pub covariance_ridge: f64,
    pub feature_names: Vec<String>,
    pub beta_min: f64,
    pub objects: Vec<ObjectId>,
}

/// Trained state loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedState {
    pub metadata: TrainedMetadata,
    pub references: BTreeMap<ObjectId, ReferenceFingerprint>,
    pub graph: SimilarityGraph,
}

impl TrainedState {
    pub fn load(dir: &Path) -> Result<Self> {
        let metadata: TrainedMetadata = simulate::parse_json(&read_text(&dir.join(METADATA_FILE))?)?;
        let table = FingerprintTable::read(&dir.join(REFERENCES_FILE))?;
        if table.feature_names != metadata.feature_names {
            return Err(Error::invalid("references disagree with metadata feature names"));
        }
        let references = table
            .windows()?
            .into_iter()
            .map(|w| (w.matrix.object_id().clone(), ReferenceFingerprint::new(w.matrix)))
            .collect();
        let graph = io::read_graph(&dir.join(GRAPH_FILE), metadata.objects.iter().cloned(), metadata.beta_min)?;
        Ok(Self {
            metadata,
            references,
            graph,
        })
    }
}

type WindowMap = BTreeMap<u32, BTreeMap<ObjectId, (FingerprintMatrix, Verdict)>>;

fn by_window(windows: Vec<io::LabeledWindow>) -> WindowMap {
    let mut out: WindowMap = BTreeMap::new();
    for w in windows {
        out.entry(w.matrix.window_index())
            .or_default()
            .insert(w.matrix.object_id().clone(), (w.matrix, w.label));
    }
    out
}

/// `(object, window, label, plain distance, compensated distance)`.
type Scored = (ObjectId, u32, Verdict, f64, f64);

/// Plain and compensated distance of every window. Only windows labeled
/// legitimate serve as neighbor observations; objects without a usable
/// neighbor get their plain distance for both.
fn score_windows(
    windows: &WindowMap,
    references: &BTreeMap<ObjectId, ReferenceFingerprint>,
    graph: &SimilarityGraph,
) -> Result<Vec<Scored>> {
    let mut out = Vec::new();
    for (&w, objects) in windows {
        let neighbor_obs: BTreeMap<ObjectId, FingerprintMatrix> = objects
            .iter()
            .filter(|(_, (_, label))| *label == Verdict::Legitimate)
            .map(|(id, (m, _))| (id.clone(), m.clone()))
            .collect();
        for (id, (obs, label)) in objects {
            let reference = references.get(id).ok_or_else(|| Error::NotFound(id.clone()))?;
            let delta = distance::fingerprint_distance(obs, reference.matrix())?;
            let delta_hat = match environment::authenticate_with_env(
                id,
                obs,
                reference,
                &neighbor_obs,
                references,
                graph,
                f64::INFINITY,
            ) {
                Ok(d) => d.distance,
                Err(Error::NoNeighbors(_)) => delta,
                Err(e) => return Err(e),
            };
            out.push((id.clone(), w, *label, delta, delta_hat));
        }
    }
    Ok(out)
}

/// Selects references, builds the graph from the windows every object has
/// in common, and calibrates both thresholds.
pub fn train(input: &Path, out: &Path, beta_min: f64, margin: f64) -> Result<TrainedMetadata> {
    let table = FingerprintTable::read(input)?;
    let windows = table.windows()?;
    let mut legit: BTreeMap<ObjectId, Vec<FingerprintMatrix>> = BTreeMap::new();
    for w in &windows {
        if w.label == Verdict::Legitimate {
            legit.entry(w.matrix.object_id().clone()).or_default().push(w.matrix.clone());
        }
    }
    if legit.len() < 2 {
        return Err(Error::invalid("training needs legitimate windows from at least two objects"));
    }
    let references = legit
        .iter()
        .map(|(id, ws)| Ok((id.clone(), fingerprint::select_reference(ws)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let shared: BTreeSet<u32> = legit
        .values()
        .map(|ws| ws.iter().map(|w| w.window_index()).collect::<BTreeSet<_>>())
        .reduce(|a, b| &a & &b)
        .unwrap_or_default();
    if shared.is_empty() {
        return Err(Error::invalid("objects share no common training window"));
    }
    let mut history = BTreeMap::new();
    for (id, ws) in &legit {
        let seq = ws
            .iter()
            .filter(|w| shared.contains(&w.window_index()))
            .map(|w| environment::estimate_transform(w, &references[id]).map(|e| e.transform))
            .collect::<Result<Vec<_>>>()?;
        history.insert(id.clone(), seq);
    }
    let graph = graph::build_graph(&history, beta_min)?;

    let scored = score_windows(&by_window(windows), &references, &graph)?;
    let pick = |label: Verdict, f: fn(&Scored) -> f64| -> Vec<f64> {
        scored.iter().filter(|s| s.2 == label).map(f).collect()
    };
    let tau_base = distance::calibrate_threshold(
        &pick(Verdict::Legitimate, |s| s.3),
        &pick(Verdict::Attacker, |s| s.3),
        margin,
    )?;
    let tau = distance::calibrate_threshold(
        &pick(Verdict::Legitimate, |s| s.4),
        &pick(Verdict::Attacker, |s| s.4),
        margin,
    )?;

    let metadata = TrainedMetadata {
        schema_version: simulate::SCHEMA_VERSION,
        tau,
        tau_base,
        covariance_ridge: COVARIANCE_RIDGE,
        feature_names: table.feature_names.clone(),
        beta_min,
        objects: references.keys().cloned().collect(),
    };
    start("train", out, None, None)?;
    FingerprintTable::from_matrices(references.values().map(|r| r.matrix()))?.write(&out.join(REFERENCES_FILE))?;
    io::write_graph(&out.join(GRAPH_FILE), &graph)?;
    write_json(&out.join(METADATA_FILE), &metadata)?;
    Ok(metadata)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub object_id: ObjectId,
    pub window: u64,
    pub delta: f64,
    pub delta_hat: f64,
    pub verdict_base: Verdict,
    pub verdict_env: Verdict,
}

fn write_distances(path: &Path, rows: &[DistanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object_id", "window", "delta", "delta_hat", "verdict_base", "verdict_env"])?;
    for r in rows {
        w.write_record([
            r.object_id.to_string(),
            r.window.to_string(),
            r.delta.to_string(),
            r.delta_hat.to_string(),
            r.verdict_base.as_str().to_owned(),
            r.verdict_env.as_str().to_owned(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scores a fingerprint CSV against trained state into `decisions.csv`.
pub fn auth(state_dir: &Path, input: &Path, out: &Path) -> Result<Vec<DistanceRow>> {
    let state = TrainedState::load(state_dir)?;
    let table = FingerprintTable::read(input)?;
    if table.feature_names != state.metadata.feature_names {
        return Err(Error::invalid("input features differ from the trained feature names"));
    }
    let scored = score_windows(&by_window(table.windows()?), &state.references, &state.graph)?;
    let rows: Vec<DistanceRow> = scored
        .into_iter()
        .map(|(object_id, w, _, delta, delta_hat)| DistanceRow {
            object_id,
            window: w as u64,
            delta,
            delta_hat,
            verdict_base: distance::authenticate(delta, state.metadata.tau_base).verdict,
            verdict_env: distance::authenticate(delta_hat, state.metadata.tau).verdict,
        })
        .collect();
    start("auth", out, None, None)?;
    write_distances(&out.join("decisions.csv"), &rows)?;
    Ok(rows)
}

fn load_scenario(config: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::from_json(&read_text(p)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_sweep(path: &Path, points: &[simulate::SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "accuracy_base", "accuracy_env"])?;
    for p in points {
        w.write_record([p.tau.to_string(), p.accuracy_base.to_string(), p.accuracy_env.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs a scenario into `report.json`, `distances.csv` and `sweep.csv`.
pub fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<MetricsReport> {
    let cfg = load_scenario(config, seed)?;
    let report = simulate::run_scenario(&cfg)?;
    start("simulate", out, config, Some(cfg.seed))?;
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    let rows: Vec<DistanceRow> = report
        .windows
        .iter()
        .map(|r| DistanceRow {
            object_id: r.object_id.clone(),
            window: r.window as u64,
            delta: r.delta,
            delta_hat: r.delta_hat,
            verdict_base: r.verdict_base,
            verdict_env: r.verdict_env,
        })
        .collect();
    write_distances(&out.join("distances.csv"), &rows)?;
    write_sweep(&out.join("sweep.csv"), &report.sweep)?;
    let reread: MetricsReport = simulate::parse_json(&read_text(&report_path)?)?;
    if reread.windows.len() != report.windows.len() {
        return Err(Error::Numerical("report did not survive a JSON round trip".into()));
    }
    Ok(report)
}

/// Threshold sweep only, into `sweep.csv`.
pub fn sweep(config: Option<&Path>, seed: Option<u64>, taus: Option<Vec<f64>>, out: &Path) -> Result<Vec<simulate::SweepPoint>> {
    let cfg = load_scenario(config, seed)?;
    let taus = taus
        .or_else(|| (!cfg.sweep_taus.is_empty()).then(|| cfg.sweep_taus.clone()))
        .unwrap_or_else(simulate::default_tau_grid);
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::invalid(format!("invalid threshold {t}")));
    }
    let points = simulate::sweep_threshold(&cfg, &taus)?;
    start("sweep", out, config, Some(cfg.seed))?;
    write_sweep(&out.join("sweep.csv"), &points)?;
    Ok(points)
}

fn alpha_label(alpha: f64) -> String {
    format!("alpha_{alpha}")
}

/// Transfer evaluation into `transfer.csv`:
/// `class,source_noise_sigma,no_transfer,alpha_0,alpha_<a>...`.
pub fn transfer_eval(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Vec<simulate::TransferRow>> {
    let mut cfg = match config {
        Some(p) => TransferEvalConfig::from_json(&read_text(p)?)?,
        None => TransferEvalConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = simulate::run_transfer_eval(&cfg)?;
    start("transfer-eval", out, config, Some(cfg.seed))?;
    let path = out.join("transfer.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["class".to_owned(), "source_noise_sigma".into(), "no_transfer".into()];
    header.extend(cfg.alpha_columns().into_iter().map(alpha_label));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.class.to_string(), r.source_noise_sigma.to_string(), r.no_transfer.to_string()];
        rec.extend(r.by_alpha.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Process exit status for a command result.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_input_error() => 2,
        Err(_) => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_labels() {
        assert_eq!(alpha_label(0.0), "alpha_0");
        assert_eq!(alpha_label(0.25), "alpha_0.25");
        assert_eq!(alpha_label(0.5), "alpha_0.5");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::invalid("x"))), 2);
        assert_eq!(exit_code(&Err(Error::Numerical("x".into()))), 1);
    }
}

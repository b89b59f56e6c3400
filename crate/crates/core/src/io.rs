//! On-disk formats.
//!
//! - signals: CSV with one `sample` column, or raw binary (little-endian
//!   `u64` count then that many `f64`) for `.bin`/`.f64` files;
//! - fingerprints: CSV `object_id,window_index,row_index[,label],<features...>`;
//! - graphs: CSV `object_a,object_b,beta`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::distance::Verdict;
use crate::error::{Error, Result};
use crate::features::SignalRecording;
use crate::fingerprint::FingerprintMatrix;
use crate::graph::SimilarityGraph;
use crate::ObjectId;

fn is_binary(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin") | Some("f64")
    )
}

pub fn read_signal(path: &Path) -> Result<SignalRecording> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let samples = if is_binary(path) {
        decode_binary(&bytes).map_err(|msg| Error::invalid(format!("{}: {msg}", path.display())))?
    } else {
        parse_signal_csv(&bytes, path)?
    };
    SignalRecording::from_samples(samples)
}

fn decode_binary(bytes: &[u8]) -> std::result::Result<Vec<f64>, String> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let (head, body) = bytes
        .split_first_chunk::<8>()
        .ok_or("truncated length header")?;
    let count = u64::from_le_bytes(*head) as usize;
    if body.len() != count.checked_mul(8).ok_or("length overflow")? {
        return Err(format!("header says {count} samples, body has {} bytes", body.len()));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn parse_signal_csv(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = record.get(0).unwrap_or("");
        if line == 0 && field == "sample" {
            continue;
        }
        let v: f64 = field.parse().map_err(|_| {
            Error::invalid(format!("{}: line {}: not a number: {field:?}", path.display(), line + 1))
        })?;
        samples.push(v);
    }
    Ok(samples)
}

pub fn write_signal_csv(path: &Path, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample"])?;
    for s in samples {
        w.write_record([s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_signal_binary(path: &Path, samples: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 8 * samples.len());
    bytes.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One row of a fingerprint CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRow {
    pub object_id: ObjectId,
    pub window_index: u32,
    pub row_index: usize,
    pub label: Option<Verdict>,
    pub values: Vec<f64>,
}

/// Parsed fingerprint CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FingerprintRow>,
}

/// A labeled fingerprint window.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub matrix: FingerprintMatrix,
    pub label: Verdict,
}

fn parse_label(s: &str) -> Result<Verdict> {
    match s {
        "legitimate" => Ok(Verdict::Legitimate),
        "attacker" => Ok(Verdict::Attacker),
        other => Err(Error::invalid(format!("unknown label {other:?}"))),
    }
}

impl FingerprintTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers()?.clone();
        let fixed = ["object_id", "window_index", "row_index"];
        if headers.len() < 4 || headers.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::invalid(format!(
                "{}: header must start with object_id,window_index,row_index",
                path.display()
            )));
        }
        let labeled = headers.get(3) == Some("label");
        let first_feature = if labeled { 4 } else { 3 };
        let feature_names: Vec<String> = headers.iter().skip(first_feature).map(String::from).collect();
        if feature_names.is_empty() {
            return Err(Error::invalid(format!("{}: no feature columns", path.display())));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::invalid(format!("{}: data line {}: {msg}", path.display(), line + 1));
            let int = |i: usize| -> Result<u64> {
                record[i].parse().map_err(|_| at(format!("bad {} {:?}", fixed[i], &record[i])))
            };
            let values = record
                .iter()
                .skip(first_feature)
                .map(|v| v.parse::<f64>().map_err(|_| at(format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FingerprintRow {
                object_id: ObjectId::new(&record[0]),
                window_index: u32::try_from(int(1)?).map_err(|_| at("window_index too large".into()))?,
                row_index: int(2)? as usize,
                label: if labeled { Some(parse_label(&record[3]).map_err(|e| at(e.to_string()))?) } else { None },
                values,
            });
        }
        if rows.is_empty() {
            return Err(Error::invalid(format!("{}: no fingerprint rows", path.display())));
        }
        Ok(Self { feature_names, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let labeled = self.rows.iter().any(|r| r.label.is_some());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["object_id".to_owned(), "window_index".into(), "row_index".into()];
        if labeled {
            header.push("label".into());
        }
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.object_id.to_string(), r.window_index.to_string(), r.row_index.to_string()];
            if labeled {
                rec.push(r.label.unwrap_or(Verdict::Legitimate).as_str().to_owned());
            }
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Groups rows into per-(object, window) matrices ordered by row index.
    /// A window is an attacker window if any of its rows is labeled so.
    pub fn windows(&self) -> Result<Vec<LabeledWindow>> {
        let mut groups: BTreeMap<(ObjectId, u32), Vec<&FingerprintRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.object_id.clone(), r.window_index)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((id, w), mut rows)| {
                rows.sort_by_key(|r| r.row_index);
                if rows.windows(2).any(|p| p[0].row_index == p[1].row_index) {
                    return Err(Error::invalid(format!("duplicate row index in {id} window {w}")));
                }
                let m = self.feature_names.len();
                let data = DMatrix::from_fn(rows.len(), m, |r, c| rows[r].values[c]);
                let attacker = rows.iter().any(|r| r.label == Some(Verdict::Attacker));
                Ok(LabeledWindow {
                    matrix: FingerprintMatrix::new(data, self.feature_names.clone(), id, w)?,
                    label: if attacker { Verdict::Attacker } else { Verdict::Legitimate },
                })
            })
            .collect()
    }

    pub fn from_matrices<'a>(matrices: impl IntoIterator<Item = &'a FingerprintMatrix>) -> Result<Self> {
        let mut feature_names: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for m in matrices {
            match &feature_names {
                None => feature_names = Some(m.feature_names().to_vec()),
                Some(f) if f.as_slice() != m.feature_names() => {
                    return Err(Error::invalid("matrices disagree on feature names"))
                }
                _ => {}
            }
            for j in 0..m.nrows() {
                rows.push(FingerprintRow {
                    object_id: m.object_id().clone(),
                    window_index: m.window_index(),
                    row_index: j,
                    label: None,
                    values: m.row(j).iter().copied().collect(),
                });
            }
        }
        Ok(Self {
            feature_names: feature_names.ok_or_else(|| Error::invalid("no matrices"))?,
            rows,
        })
    }
}

pub fn write_graph(path: &Path, graph: &SimilarityGraph) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object_a", "object_b", "beta"])?;
    for (a, b, beta) in graph.edges() {
        w.write_record([a.as_str(), b.as_str(), &beta.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an edge list; `nodes` supplies objects that may have no edges.
pub fn read_graph(path: &Path, nodes: impl IntoIterator<Item = ObjectId>, beta_min: f64) -> Result<SimilarityGraph> {
    #[derive(serde::Deserialize)]
    struct Edge {
        object_a: String,
        object_b: String,
        beta: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let edges = reader
        .deserialize::<Edge>()
        .map(|e| e.map(|e| (ObjectId::new(e.object_a), ObjectId::new(e.object_b), e.beta)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    SimilarityGraph::from_edges(nodes, edges, beta_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let samples = vec![1.5, -2.0, 0.25, 1e-300];
        let csv_path = dir.path().join("s.csv");
        write_signal_csv(&csv_path, &samples).unwrap();
        assert_eq!(read_signal(&csv_path).unwrap().samples(), samples.as_slice());
        let bin = dir.path().join("s.bin");
        write_signal_binary(&bin, &samples).unwrap();
        assert_eq!(read_signal(&bin).unwrap().samples(), samples.as_slice());
    }

    #[test]
    fn empty_and_malformed_signals() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("e.csv");
        fs::write(&empty, "").unwrap();
        assert!(read_signal(&empty).unwrap_err().to_string().contains("empty signal"));
        let header_only = dir.path().join("h.csv");
        fs::write(&header_only, "sample\n").unwrap();
        assert!(read_signal(&header_only).unwrap_err().to_string().contains("empty signal"));
        let bad = dir.path().join("b.csv");
        fs::write(&bad, "sample\n1\nx\n").unwrap();
        assert!(read_signal(&bad).is_err());
        let short = dir.path().join("t.bin");
        fs::write(&short, [3u8, 0, 0, 0, 0, 0, 0, 0, 1]).unwrap();
        assert!(read_signal(&short).is_err());
        assert!(matches!(read_signal(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn fingerprint_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(
            &path,
            "object_id,window_index,row_index,label,a,b\n\
             x,0,1,legitimate,3,4\n\
             x,0,0,legitimate,1,2\n\
             y,2,0,attacker,5,6\n\
             y,2,1,legitimate,7,8\n",
        )
        .unwrap();
        let table = FingerprintTable::read(&path).unwrap();
        let ws = table.windows().unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].matrix.data(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(ws[1].label, Verdict::Attacker);
        let out = dir.path().join("g.csv");
        table.write(&out).unwrap();
        assert_eq!(FingerprintTable::read(&out).unwrap(), table);
    }

    #[test]
    fn graph_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ids = [ObjectId::new("a"), ObjectId::new("b"), ObjectId::new("c")];
        let g = SimilarityGraph::from_edges(ids.clone(), [(ids[0].clone(), ids[1].clone(), 0.75)], 0.2).unwrap();
        let path = dir.path().join("g.csv");
        write_graph(&path, &g).unwrap();
        assert_eq!(read_graph(&path, ids, 0.2).unwrap(), g);
    }
}

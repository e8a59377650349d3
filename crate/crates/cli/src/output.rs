//! Result emission: filter results as JSONL, partitions as JSONL, and the
//! machine-readable stats block printed to stdout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use semfilter_core::cluster::Partition;
use semfilter_core::engine::{FilterResult, Provenance};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> OutputError {
    OutputError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    id: u64,
    label: bool,
    provenance: Provenance,
}

/// Writes one `{"id", "label", "provenance"}` line per record, ascending by
/// id. Byte-stable for identical results.
pub fn write_filter_result(result: &FilterResult, path: &Path) -> Result<(), OutputError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (&id, &label) in &result.labels {
        let row = ResultRow { id, label, provenance: result.provenance[&id] };
        serde_json::to_writer(&mut w, &row)
            .map_err(|e| OutputError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a result file back into an id → label map (provenance ignored).
pub fn read_result_labels(path: &Path) -> Result<BTreeMap<u64, bool>, OutputError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ResultRow = serde_json::from_str(&line)
            .map_err(|e| OutputError::Parse { line: idx + 1, message: e.to_string() })?;
        out.insert(row.id, row.label);
    }
    Ok(out)
}

/// Writes one `{"id", "cluster"}` line per record.
pub fn write_partition(partition: &Partition, path: &Path) -> Result<(), OutputError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (&id, &cluster) in &partition.assignment {
        let line = json!({ "id": id, "cluster": cluster });
        serde_json::to_writer(&mut w, &line)
            .map_err(|e| OutputError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// The stats block for stdout: counters plus a per-cluster trace summary
/// (member lists elided).
pub fn stats_json(result: &FilterResult) -> serde_json::Value {
    let mut by_provenance = BTreeMap::new();
    for p in result.provenance.values() {
        let key = match p {
            Provenance::Oracle => "oracle",
            Provenance::Vote => "vote",
            Provenance::Fallback => "fallback",
        };
        *by_provenance.entry(key).or_insert(0u64) += 1;
    }
    let trace: Vec<serde_json::Value> = result
        .trace
        .iter()
        .map(|t| {
            json!({
                "depth": t.depth,
                "cluster": t.cluster,
                "size": t.members.len(),
                "sampled": t.sampled.len(),
                "sample_score": t.sample_score,
                "decision": t.decision,
            })
        })
        .collect();
    json!({
        "records": result.labels.len(),
        "positives": result.positives().len(),
        "stats": result.stats,
        "provenance": by_provenance,
        "clusters": trace,
    })
}

//! Table ingestion and emission: JSONL (one object per row) and RFC 4180 CSV.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use semfilter_core::data::{Record, Table};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum TableIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("line {line}: id column {column:?} is missing or not an unsigned integer")]
    BadId { line: usize, column: String },
}

/// Input/output format for tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Jsonl,
    Csv,
}

impl TableFormat {
    /// `.csv` means CSV; everything else defaults to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => TableFormat::Csv,
            _ => TableFormat::Jsonl,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> TableIoError {
    TableIoError::Io { path: path.display().to_string(), source }
}

/// Loads a table. Ids come from `id_column` when given (must parse as u64),
/// otherwise the 0-based row index. Duplicate ids are rejected, naming the
/// 1-based line of the second occurrence.
pub fn load_table(
    path: &Path,
    format: TableFormat,
    id_column: Option<&str>,
) -> Result<Table, TableIoError> {
    match format {
        TableFormat::Jsonl => load_jsonl(path, id_column),
        TableFormat::Csv => load_csv(path, id_column),
    }
}

fn json_value_to_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null => None,
        _ => None,
    }
}

fn load_jsonl(path: &Path, id_column: Option<&str>) -> Result<Table, TableIoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut schema: Vec<String> = Vec::new();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| TableIoError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| TableIoError::Parse {
            line: line_no,
            message: "expected a JSON object".into(),
        })?;

        let id = match id_column {
            Some(col) => obj
                .get(col)
                .and_then(Value::as_u64)
                .ok_or_else(|| TableIoError::BadId { line: line_no, column: col.into() })?,
            None => idx as u64,
        };
        if !seen.insert(id) {
            return Err(TableIoError::DuplicateId { line: line_no, id });
        }

        let mut record = Record::new(id);
        for (key, v) in obj {
            if Some(key.as_str()) == id_column {
                continue;
            }
            match json_value_to_text(v) {
                Some(text) => {
                    if !schema.iter().any(|c| c == key) {
                        schema.push(key.clone());
                    }
                    record.columns.insert(key.clone(), text);
                }
                None if v.is_null() => {}
                None => {
                    return Err(TableIoError::Parse {
                        line: line_no,
                        message: format!("column {key:?} is not scalar text"),
                    })
                }
            }
        }
        records.push(record);
    }
    Table::new(schema, records).map_err(|e| TableIoError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

fn load_csv(path: &Path, id_column: Option<&str>) -> Result<Table, TableIoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| TableIoError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let schema: Vec<String> =
        headers.iter().filter(|h| Some(h.as_str()) != id_column).cloned().collect();

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, row) in reader.records().enumerate() {
        // Header occupies line 1; data rows start at line 2.
        let line_no = idx + 2;
        let row = row.map_err(|e| TableIoError::Parse { line: line_no, message: e.to_string() })?;
        let id = match id_column {
            Some(col) => {
                let pos = headers.iter().position(|h| h == col).ok_or_else(|| {
                    TableIoError::BadId { line: line_no, column: col.into() }
                })?;
                row.get(pos)
                    .and_then(|s| s.trim().parse::<u64>().ok())
                    .ok_or_else(|| TableIoError::BadId { line: line_no, column: col.into() })?
            }
            None => idx as u64,
        };
        if !seen.insert(id) {
            return Err(TableIoError::DuplicateId { line: line_no, id });
        }
        let mut record = Record::new(id);
        for (header, field) in headers.iter().zip(row.iter()) {
            if Some(header.as_str()) == id_column {
                continue;
            }
            record.columns.insert(header.clone(), field.to_owned());
        }
        records.push(record);
    }
    Table::new(schema, records).map_err(|e| TableIoError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Writes a table. JSONL rows carry `id` plus every column; CSV writes an
/// `id` header column followed by the schema in order.
pub fn write_table(table: &Table, path: &Path, format: TableFormat) -> Result<(), TableIoError> {
    match format {
        TableFormat::Jsonl => write_jsonl(table, path),
        TableFormat::Csv => write_csv(table, path),
    }
}

fn write_jsonl(table: &Table, path: &Path) -> Result<(), TableIoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for record in table.records() {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::from(record.id));
        for (k, v) in &record.columns {
            obj.insert(k.clone(), Value::from(v.clone()));
        }
        serde_json::to_writer(&mut w, &Value::Object(obj))
            .map_err(|e| TableIoError::Parse { line: 0, message: e.to_string() })?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_csv(table: &Table, path: &Path) -> Result<(), TableIoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["id".to_owned()];
    header.extend(table.schema().iter().cloned());
    w.write_record(&header)
        .map_err(|e| TableIoError::Parse { line: 1, message: e.to_string() })?;
    for record in table.records() {
        let mut row = vec![record.id.to_string()];
        for col in table.schema() {
            row.push(record.column(col).unwrap_or("").to_owned());
        }
        w.write_record(&row)
            .map_err(|e| TableIoError::Parse { line: 0, message: e.to_string() })?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Extracts a boolean column (via the oracle's completion parser, so
/// "True"/"false." etc. all work) keyed by record id.
pub fn truth_labels(
    table: &Table,
    column: &str,
) -> Result<std::collections::BTreeMap<u64, bool>, TableIoError> {
    let mut out = std::collections::BTreeMap::new();
    for record in table.records() {
        let text = record.column(column).ok_or_else(|| TableIoError::Parse {
            line: 0,
            message: format!("record {} has no column {column:?}", record.id),
        })?;
        let label = semfilter_core::oracle::parse_label(text).ok_or_else(|| {
            TableIoError::Parse {
                line: 0,
                message: format!("record {}: column {column:?} is not boolean: {text:?}", record.id),
            }
        })?;
        out.insert(record.id, label);
    }
    Ok(out)
}

/// Reads an entire file and hashes it with SHA-256, for run manifests.
pub fn content_hash(path: &Path) -> Result<String, TableIoError> {
    use sha2::{Digest, Sha256};
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

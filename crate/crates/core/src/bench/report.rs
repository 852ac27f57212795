//! Detailed and average reports as pipe tables, with CSV and JSON-lines
//! twins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{abbreviation, aggregate, speedup, Aggregate, BenchError, RunRecord, SpeedupPair, SpeedupRow, Subject};
use crate::backend::BackendId;

/// How records are grouped into average rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One row per op, or per model/length/batch configuration.
    Subject,
    /// Model rows per input length, pooled over batch sizes.
    Length,
    /// Model rows per batch size, pooled over input lengths.
    Batch,
    /// One row per model.
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct RowKey {
    subject: String,
    char_len: Option<usize>,
    batch: Option<usize>,
    label: String,
}

impl Grouping {
    fn key(self, subject: &Subject) -> RowKey {
        let (name, len, batch) = match subject {
            Subject::Op { op } => (op.clone(), None, None),
            Subject::Model { model, char_len, batch } => (model.clone(), Some(*char_len), Some(*batch)),
        };
        let label = match self {
            Grouping::Subject => subject.to_string(),
            _ => name.clone(),
        };
        let (char_len, batch) = match self {
            Grouping::Subject => (len, batch),
            Grouping::Length => (len, None),
            Grouping::Batch => (None, batch),
            Grouping::Model => (None, None),
        };
        RowKey {
            subject: name,
            char_len,
            batch,
            label,
        }
    }

    fn extra_column(self) -> Option<&'static str> {
        match self {
            Grouping::Length => Some("char_len"),
            Grouping::Batch => Some("batch"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub subject: String,
    pub char_len: Option<usize>,
    pub batch: Option<usize>,
    pub aggregates: Vec<(BackendId, Aggregate)>,
    pub speedups: Vec<SpeedupRow>,
}

impl AverageRow {
    pub fn aggregate(&self, id: BackendId) -> Option<&Aggregate> {
        self.aggregates.iter().find(|(b, _)| *b == id).map(|(_, a)| a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageTable {
    pub grouping: Grouping,
    pub backends: Vec<BackendId>,
    pub pairs: Vec<SpeedupPair>,
    pub rows: Vec<AverageRow>,
}

/// Mean (and friends) per group and backend, plus the requested speedups.
pub fn average_table(
    records: &[RunRecord],
    grouping: Grouping,
    pairs: &[SpeedupPair],
) -> Result<AverageTable, BenchError> {
    let backends: Vec<BackendId> = records.iter().map(|r| r.backend).collect::<BTreeSet<_>>().into_iter().collect();
    let mut groups: BTreeMap<RowKey, BTreeMap<BackendId, Vec<f64>>> = BTreeMap::new();
    for r in records {
        groups
            .entry(grouping.key(&r.subject))
            .or_default()
            .entry(r.backend)
            .or_default()
            .push(r.ms);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (key, per_backend) in groups {
        let aggregates = per_backend
            .iter()
            .map(|(&b, ms)| Ok((b, aggregate(ms)?)))
            .collect::<Result<Vec<_>, BenchError>>()?;
        let mut row = AverageRow {
            subject: key.label,
            char_len: key.char_len,
            batch: key.batch,
            aggregates,
            speedups: Vec::new(),
        };
        for pair in pairs {
            let get = |b: BackendId| {
                row.aggregate(b).ok_or_else(|| BenchError::MissingBackend {
                    subject: row.subject.clone(),
                    backend: b,
                })
            };
            let s = speedup((pair.baseline, get(pair.baseline)?), (pair.target, get(pair.target)?))?;
            row.speedups.push(s);
        }
        rows.push(row);
    }
    Ok(AverageTable {
        grouping,
        backends,
        pairs: pairs.to_vec(),
        rows,
    })
}

fn header_lines(out: &mut String, header: &[String]) {
    for line in header {
        let _ = writeln!(out, "# {line}");
    }
}

fn sorted(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().collect();
    v.sort_by(|a, b| (&a.subject, a.backend, a.iteration).cmp(&(&b.subject, b.backend, b.iteration)));
    v
}

/// One row per record, ordered by subject, backend and iteration; times in
/// ms with two decimals.
pub fn render_detailed(records: &[RunRecord], header: &[String]) -> String {
    let with_tokenize = records.iter().any(|r| r.tokenize_ms.is_some());
    let mut out = String::new();
    header_lines(&mut out, header);
    out.push_str("subject | backend | iteration | ms");
    if with_tokenize {
        out.push_str(" | tokenize_ms");
    }
    out.push('\n');
    for r in sorted(records) {
        let _ = write!(out, "{} | {} | {} | {:.2}", r.subject, r.backend, r.iteration, r.ms);
        if with_tokenize {
            match r.tokenize_ms {
                Some(t) => {
                    let _ = write!(out, " | {t:.2}");
                }
                None => out.push_str(" | "),
            }
        }
        out.push('\n');
    }
    out
}

fn detailed_csv(records: &[RunRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "subject",
        "char_len",
        "batch",
        "backend",
        "backend_descriptor",
        "iteration",
        "ms",
        "tokenize_ms",
    ])?;
    for r in sorted(records) {
        let (kind, len, batch) = match &r.subject {
            Subject::Op { .. } => ("op", String::new(), String::new()),
            Subject::Model { char_len, batch, .. } => ("model", char_len.to_string(), batch.to_string()),
        };
        w.write_record([
            kind.to_string(),
            r.subject.to_string(),
            len,
            batch,
            r.backend.to_string(),
            r.backend_descriptor.clone(),
            r.iteration.to_string(),
            r.ms.to_string(),
            r.tokenize_ms.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("serializable"));
        out.push('\n');
    }
    out
}

impl AverageTable {
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["subject".to_string()];
        cols.extend(self.grouping.extra_column().map(String::from));
        cols.extend(self.backends.iter().map(|&b| format!("{}_mean", abbreviation(b))));
        cols.extend(self.pairs.iter().map(SpeedupPair::label));
        cols
    }

    fn key_cells(&self, row: &AverageRow) -> Vec<String> {
        let mut cells = vec![row.subject.clone()];
        match self.grouping {
            Grouping::Length => cells.push(row.char_len.map(|n| n.to_string()).unwrap_or_default()),
            Grouping::Batch => cells.push(row.batch.map(|n| n.to_string()).unwrap_or_default()),
            _ => {}
        }
        cells
    }

    /// Pipe table: means with four decimals, speedups with two.
    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        header_lines(&mut out, header);
        out.push_str(&self.columns().join(" | "));
        out.push('\n');
        for row in &self.rows {
            let mut cells = self.key_cells(row);
            for &b in &self.backends {
                cells.push(row.aggregate(b).map(|a| format!("{:.4}", a.mean)).unwrap_or_default());
            }
            cells.extend(row.speedups.iter().map(|s| format!("{:.2}", s.ratio)));
            out.push_str(&cells.join(" | "));
            out.push('\n');
        }
        out
    }

    /// Full-precision twin with every aggregate statistic.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["subject".to_string(), "char_len".to_string(), "batch".to_string()];
        for &b in &self.backends {
            for stat in ["mean", "median", "std", "min", "max", "count"] {
                head.push(format!("{b}_{stat}"));
            }
        }
        head.extend(self.pairs.iter().map(|p| format!("{}/{} speedup", p.target, p.baseline)));
        w.write_record(&head)?;
        for row in &self.rows {
            let mut cells = vec![
                row.subject.clone(),
                row.char_len.map(|n| n.to_string()).unwrap_or_default(),
                row.batch.map(|n| n.to_string()).unwrap_or_default(),
            ];
            for &b in &self.backends {
                match row.aggregate(b) {
                    Some(a) => cells.extend(
                        [a.mean, a.median, a.std, a.min, a.max].map(|x| x.to_string()).into_iter().chain([a.count.to_string()]),
                    ),
                    None => cells.extend(std::iter::repeat(String::new()).take(6)),
                }
            }
            cells.extend(row.speedups.iter().map(|s| s.ratio.to_string()));
            w.write_record(&cells)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
    }

    pub fn to_jsonl(&self) -> String {
        jsonl(&self.rows)
    }
}

/// Run description written next to the reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub host: String,
    pub backends: BTreeMap<String, String>,
    pub spec: serde_json::Value,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, spec: serde_json::Value, backends: &[BackendId]) -> Manifest {
        Manifest {
            tool: "encbench".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            host: crate::backend::host_descriptor(),
            backends: backends.iter().map(|&b| (b.to_string(), b.backend().descriptor())).collect(),
            spec,
            files: Vec::new(),
        }
    }
}

/// Paths written by [`write_reports`].
pub type ReportFiles = Vec<PathBuf>;

/// Write `contents` to `path` through a sibling temp file and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("report");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

/// Render everything in memory, then write each file atomically:
/// `{detailed_stem}.{txt,csv,jsonl}`, `{stem}.{txt,csv,jsonl}` per table,
/// the extra files and `manifest.json`.
pub fn write_reports(
    dir: &Path,
    detailed_stem: &str,
    records: &[RunRecord],
    tables: &[(&str, &AverageTable)],
    header: &[String],
    extra: &[(&str, String)],
    mut manifest: Manifest,
) -> Result<ReportFiles, BenchError> {
    let csv_err = |e: csv::Error| BenchError::Io {
        path: dir.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut files: Vec<(String, String)> = vec![
        (format!("{detailed_stem}.txt"), render_detailed(records, header)),
        (format!("{detailed_stem}.csv"), detailed_csv(records).map_err(csv_err)?),
        (format!("{detailed_stem}.jsonl"), jsonl(sorted(records))),
    ];
    for (stem, table) in tables {
        files.push((format!("{stem}.txt"), table.render(header)));
        files.push((format!("{stem}.csv"), table.to_csv().map_err(csv_err)?));
        files.push((format!("{stem}.jsonl"), table.to_jsonl()));
    }
    files.extend(extra.iter().map(|(n, c)| (n.to_string(), c.clone())));
    manifest.files = files.iter().map(|(n, _)| n.clone()).collect();
    files.push((
        "manifest.json".to_string(),
        serde_json::to_string_pretty(&manifest).expect("serializable") + "\n",
    ));

    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

//! Latency benchmark harness: operation microbenchmarks, model inference
//! benchmarks, aggregation and the detailed/average report formats.
//!
//! Orchestration is single-threaded: one timed region at a time.

mod inputs;
mod model;
mod ops;
mod report;
mod timing;

pub use inputs::{generate_inputs, Corpus, BUNDLED_CORPUS};
pub use model::{run_model_bench, InputBatch, ModelBenchRun, ModelBenchSpec};
pub use ops::{default_op_specs, op_names, run_op_bench, OpBenchSpec, DEFAULT_OP_ITERATIONS};
pub use report::{
    average_table, render_detailed, write_atomic, write_reports, AverageRow, AverageTable, Grouping, Manifest,
    ReportFiles,
};
pub use timing::{time_launch_only, time_once};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::BackendId;
use crate::models::ModelError;
use crate::tensor::TensorError;
use crate::tokenizer::TokenizerError;

pub const DEFAULT_WARMUP: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("corpus has no non-empty lines")]
    EmptyCorpus,
    #[error("unknown op `{0}` (known: {known})", known = op_names().join(", "))]
    UnknownOp(String),
    #[error("invalid benchmark spec: {0}")]
    InvalidSpec(String),
    #[error("{subject}: {source}")]
    Kernel { subject: String, source: TensorError },
    #[error("{subject}: {source}")]
    Model { subject: String, source: ModelError },
    #[error("{subject}: {source}")]
    Tokenizer { subject: String, source: TokenizerError },
    #[error("cannot aggregate an empty group")]
    EmptyGroup,
    #[error("speedup denominator has zero mean")]
    ZeroDenominator,
    #[error("{subject} has no {backend} records for the requested speedup")]
    MissingBackend { subject: String, backend: BackendId },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// What a record measures.
///
/// Ordering is structural, so model rows sort by length and batch
/// numerically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Subject {
    Op { op: String },
    Model { model: String, char_len: usize, batch: usize },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Op { op } => f.write_str(op),
            Subject::Model { model, char_len, batch } => write!(f, "{model} len={char_len} batch={batch}"),
        }
    }
}

/// One timed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subject: Subject,
    pub backend: BackendId,
    pub backend_descriptor: String,
    /// 1-based.
    pub iteration: usize,
    pub ms: f64,
    /// Tokenization time of the batch this iteration ran on (models only).
    pub tokenize_ms: Option<f64>,
}

/// Summary of one group of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 when `count == 1`.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub count: usize,
    /// Set when `std` is undefined because there is a single sample.
    pub single_sample: bool,
}

pub fn aggregate(ms: &[f64]) -> Result<Aggregate, BenchError> {
    if ms.is_empty() {
        return Err(BenchError::EmptyGroup);
    }
    let n = ms.len();
    let mean = ms.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(Aggregate {
        mean,
        std,
        min: sorted[0],
        max: sorted[n - 1],
        median,
        count: n,
        single_sample: n == 1,
    })
}

/// Which backend is compared against which. The reported ratio is
/// `baseline mean / target mean`, so values above 1 mean the target is
/// faster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedupPair {
    pub target: BackendId,
    pub baseline: BackendId,
}

impl SpeedupPair {
    pub const DEFAULT: SpeedupPair = SpeedupPair {
        target: BackendId::Optimized,
        baseline: BackendId::Reference,
    };

    pub fn label(&self) -> String {
        format!("{}/{} speedup", abbreviation(self.target), abbreviation(self.baseline))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    /// Backend whose mean is the numerator (the baseline).
    pub numerator: BackendId,
    pub denominator: BackendId,
    pub ratio: f64,
}

pub fn speedup(numerator: (BackendId, &Aggregate), denominator: (BackendId, &Aggregate)) -> Result<SpeedupRow, BenchError> {
    if denominator.1.mean <= 0.0 {
        return Err(BenchError::ZeroDenominator);
    }
    Ok(SpeedupRow {
        numerator: numerator.0,
        denominator: denominator.0,
        ratio: numerator.1.mean / denominator.1.mean,
    })
}

/// Short backend name used in column headers.
pub fn abbreviation(id: BackendId) -> &'static str {
    match id {
        BackendId::Reference => "refer",
        BackendId::Optimized => "optim",
    }
}

/// Records grouped by subject and backend, in report order.
pub fn group_records(records: &[RunRecord]) -> BTreeMap<(Subject, BackendId), Vec<&RunRecord>> {
    let mut groups: BTreeMap<(Subject, BackendId), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.subject.clone(), r.backend)).or_default().push(r);
    }
    groups
}

/// Parse a comma-separated list of positive integers.
pub fn parse_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            match s.parse::<usize>() {
                Ok(0) => Err(format!("`{s}` must be positive")),
                Ok(n) => Ok(n),
                Err(_) => Err(format!("`{s}` is not a positive integer")),
            }
        })
        .collect()
}

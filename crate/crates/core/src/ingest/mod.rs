//! Loading, validating and indexing the pipeline's input files.
//!
//! Event and transfer logs are JSON Lines; registries are small CSV files.
//! Amounts are always decimal strings in base units. Parsing collects every
//! rejected line instead of stopping at the first one, so callers can report
//! `lines == accepted + rejected`.

mod files;
mod replay;
mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use files::*;
pub use replay::{validate_replay, Discrepancy};
pub use store::{DataStore, PriceTable};

use crate::model::{AccountAddress, Asset};

/// Why one input line was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// Missing field or value of the wrong shape.
    Schema(String),
    /// The record parsed but breaks its kind's invariant.
    KindInvariant(String),
    /// `(tx_hash, log_index)` or registry address seen before.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the source file (the CSV header is line 1).
    pub line: usize,
    pub field: String,
    pub reason: RejectReason,
}

impl std::fmt::Display for Reject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.reason {
            RejectReason::Schema(m) => write!(f, "line {}: field {}: {}", self.line, self.field, m),
            RejectReason::KindInvariant(m) => {
                write!(f, "line {}: kind invariant: {}", self.line, m)
            }
            RejectReason::Duplicate => {
                write!(f, "line {}: duplicate record ({})", self.line, self.field)
            }
        }
    }
}

/// Result of a lenient parse: every non-blank line ends up in exactly one of
/// `records` or `rejects`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
    pub lines: usize,
}

impl<T> Parsed<T> {
    /// Turns any reject into an error naming the source.
    pub fn into_strict(self, source: &str) -> Result<Vec<T>, IngestError> {
        if self.rejects.is_empty() {
            Ok(self.records)
        } else {
            Err(IngestError::Rejected {
                file: source.to_string(),
                rejects: self.rejects,
            })
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {} rejected record(s), first: {}", rejects.len(), rejects.first().map(|r| r.to_string()).unwrap_or_default())]
    Rejected { file: String, rejects: Vec<Reject> },
    #[error("{file}: bad header, expected `{expected}`")]
    Header { file: String, expected: String },
    #[error("event {tx}:{log_index} references unknown pool {pool}")]
    UnknownPool {
        tx: String,
        log_index: u32,
        pool: AccountAddress,
    },
    #[error("pool {pool} references unknown token {token}")]
    UnknownToken {
        pool: AccountAddress,
        token: AccountAddress,
    },
    #[error("duplicate record {0}")]
    DuplicateRecord(String),
    #[error("price table lacks required price for {0}")]
    RequiredPrice(Asset),
    #[error("study time {study} precedes the last record at {last}")]
    StudyTime { study: u64, last: u64 },
}

impl IngestError {
    /// Rejected lines carried by this error, if any.
    pub fn rejects(&self) -> &[Reject] {
        match self {
            IngestError::Rejected { rejects, .. } => rejects,
            _ => &[],
        }
    }
}

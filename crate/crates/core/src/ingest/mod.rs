//! Workload ingestion: sparse matrices, probabilistic circuits, JSON DAGs
//! and seeded synthetic generators.

mod json;
mod mtx;
mod psdd;
mod random;
mod sptrsv;
pub mod synth;

use thiserror::Error;

use crate::dag::DagError;

pub use json::{parse_json_dag, write_json_dag};
pub use mtx::{parse_matrix_market, write_matrix_market, MatrixEntry, SparseMatrix};
pub use psdd::parse_psdd;
pub use random::random_dag;
pub use sptrsv::{sptrsv_dag, sptrsv_system, SptrsvSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("zero or missing diagonal in row {0}")]
    ZeroDiagonal(usize),
    #[error("line {line}: unsupported line kind `{kind}`")]
    UnsupportedLineKind { line: usize, kind: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Dag(#[from] DagError),
}

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Parse { line, msg: msg.into() }
}

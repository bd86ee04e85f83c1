use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub rel_error: f64,
    /// Regularization weight used by the alpha update, when there is one.
    pub lambda: Option<f64>,
    pub nnz_alpha: usize,
    /// Weights after this iteration (sparse solver only).
    pub alpha: Option<Vec<f64>>,
    pub wall_ms: f64,
}

/// Per-iteration history of a decomposition run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<String>,
    /// Free-form description of the regularization choices in effect.
    pub notes: Vec<String>,
}

impl SolveTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.rel_error)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rel_error).collect()
    }

    /// CSV with columns `iter,rel_error,lambda,nnz_alpha`. Timings are left
    /// out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "rel_error", "lambda", "nnz_alpha"])
            .expect("in-memory write");
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.rel_error.to_string(),
                r.lambda.map(|l| l.to_string()).unwrap_or_default(),
                r.nnz_alpha.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

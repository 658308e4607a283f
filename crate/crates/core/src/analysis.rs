//! Pearson correlation between descriptor columns and cosine similarity
//! between element rows.
//!
//! Cells that are undefined (zero variance, zero norm) hold `NaN` and are
//! listed in `warnings` instead of failing the whole matrix.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element_data::EmbeddingTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("row count mismatch: {0} vs {1}")]
    RowMismatch(usize, usize),
    #[error("label count does not match matrix shape")]
    LabelMismatch,
    #[error("ragged matrix")]
    Ragged,
}

/// Rows are elements, columns are descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl LabeledMatrix {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        if values.len() != row_labels.len() {
            return Err(AnalysisError::LabelMismatch);
        }
        if values.iter().any(|r| r.len() != col_labels.len()) {
            return Err(AnalysisError::Ragged);
        }
        Ok(Self {
            row_labels,
            col_labels,
            values,
        })
    }

    /// Descriptor columns named `<prefix><j>`.
    pub fn from_table(table: &EmbeddingTable, prefix: &str) -> Self {
        Self {
            row_labels: table.elements().to_vec(),
            col_labels: (0..table.dim()).map(|j| format!("{prefix}{j}")).collect(),
            values: (0..table.len()).map(|i| table.row(i).to_vec()).collect(),
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl SimilarityMatrix {
    /// Header row `label,<col labels>`, then one labeled row per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (c, norm)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_scale(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Entry `(i, j)` is the correlation of `a`'s column `i` with `b`'s column `j`.
pub fn pearson_matrix(a: &LabeledMatrix, b: &LabeledMatrix) -> Result<SimilarityMatrix, AnalysisError> {
    if a.values.len() != b.values.len() {
        return Err(AnalysisError::RowMismatch(a.values.len(), b.values.len()));
    }
    let prep = |m: &LabeledMatrix| -> Vec<(Vec<f64>, f64)> {
        (0..m.col_labels.len()).map(|j| centered(&m.column(j))).collect()
    };
    let (ca, cb) = (prep(a), prep(b));
    let mut warnings = Vec::new();
    for (side, m, cols) in [("left", a, &ca), ("right", b, &cb)] {
        for (j, (_, n)) in cols.iter().enumerate() {
            if *n == 0.0 {
                warnings.push(format!("{side} column {} has zero variance", m.col_labels[j]));
            }
        }
    }
    let values = ca
        .par_iter()
        .map(|(x, nx)| {
            cb.iter()
                .map(|(y, ny)| {
                    if *nx == 0.0 || *ny == 0.0 {
                        f64::NAN
                    } else {
                        unit_scale(dot(x, y) / (nx * ny))
                    }
                })
                .collect()
        })
        .collect();
    Ok(SimilarityMatrix {
        row_labels: a.col_labels.clone(),
        col_labels: b.col_labels.clone(),
        values,
        warnings,
    })
}

/// Cosine similarity between every pair of element rows.
pub fn cosine_similarity_matrix(table: &EmbeddingTable) -> SimilarityMatrix {
    let norms: Vec<f64> = (0..table.len())
        .map(|i| dot(table.row(i), table.row(i)).sqrt())
        .collect();
    let warnings = norms
        .iter()
        .zip(table.elements())
        .filter(|(n, _)| **n == 0.0)
        .map(|(_, e)| format!("row {e} has zero norm"))
        .collect();
    let values = (0..table.len())
        .into_par_iter()
        .map(|i| {
            (0..table.len())
                .map(|j| {
                    if norms[i] == 0.0 || norms[j] == 0.0 {
                        f64::NAN
                    } else if i == j {
                        1.0
                    } else {
                        unit_scale(dot(table.row(i), table.row(j)) / (norms[i] * norms[j]))
                    }
                })
                .collect()
        })
        .collect();
    SimilarityMatrix {
        row_labels: table.elements().to_vec(),
        col_labels: table.elements().to_vec(),
        values,
        warnings,
    }
}

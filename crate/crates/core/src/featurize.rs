//! Composition features by mole-averaging element descriptor columns.
//!
//! Mole averaging is the only aggregator implemented. Elements whose
//! fraction is exactly zero need not appear in the descriptor table.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composition::Composition;
use crate::element_data::{Dataset, EmbeddingTable};

#[derive(Debug, Error, PartialEq)]
pub enum FeaturizeError {
    #[error("element {0} has a nonzero fraction but no descriptor row")]
    MissingElement(String),
    #[error("invalid feature subset: {0}")]
    InvalidSubset(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("dataset has no class labels on every row")]
    MissingLabels,
    #[error("expected {expected} fractions, found {found}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Strictly increasing descriptor-column indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    /// Sorts `columns`; rejects empty lists and repeated indices.
    pub fn new(mut columns: Vec<usize>) -> Result<Self, FeaturizeError> {
        if columns.is_empty() {
            return Err(FeaturizeError::InvalidSubset("empty subset".into()));
        }
        columns.sort_unstable();
        if columns.windows(2).any(|w| w[0] == w[1]) {
            return Err(FeaturizeError::InvalidSubset(format!("repeated index in {columns:?}")));
        }
        Ok(Self(columns))
    }

    /// `new` plus a bound check against a table width.
    pub fn for_dim(columns: Vec<usize>, dim: usize) -> Result<Self, FeaturizeError> {
        let s = Self::new(columns)?;
        s.check_dim(dim)?;
        Ok(s)
    }

    pub fn all(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    pub fn columns(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), FeaturizeError> {
        match self.0.last() {
            Some(&max) if max >= dim => Err(FeaturizeError::InvalidSubset(format!(
                "index {max} out of range for {dim} columns"
            ))),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for FeatureSubset {
    type Error = FeaturizeError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FeatureSubset> for Vec<usize> {
    fn from(s: FeatureSubset) -> Self {
        s.0
    }
}

/// On-disk form of a selected subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDocument {
    pub columns: FeatureSubset,
    pub source_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub column_ids: Vec<usize>,
}

/// Descriptor rows resolved once for a fixed element list and column subset,
/// so batches of compositions featurize with one multiply-add per entry.
#[derive(Debug, Clone)]
pub struct Featurizer {
    elements: Vec<String>,
    columns: Vec<usize>,
    /// One entry per element; `None` when the table has no row for it.
    rows: Vec<Option<Vec<f64>>>,
}

impl Featurizer {
    pub fn new(
        elements: &[String],
        table: &EmbeddingTable,
        subset: Option<&FeatureSubset>,
    ) -> Result<Self, FeaturizeError> {
        let columns = match subset {
            Some(s) => {
                s.check_dim(table.dim())?;
                s.columns().to_vec()
            }
            None => (0..table.dim()).collect(),
        };
        let rows = elements
            .iter()
            .map(|e| table.get(e).map(|r| columns.iter().map(|&j| r[j]).collect()))
            .collect();
        Ok(Self {
            elements: elements.to_vec(),
            columns,
            rows,
        })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn featurize_into(&self, fractions: &[f64], out: &mut [f64]) -> Result<(), FeaturizeError> {
        if fractions.len() != self.rows.len() {
            return Err(FeaturizeError::LengthMismatch {
                expected: self.rows.len(),
                found: fractions.len(),
            });
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, (&x, row)) in fractions.iter().zip(&self.rows).enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = row
                .as_ref()
                .ok_or_else(|| FeaturizeError::MissingElement(self.elements[i].clone()))?;
            for (o, r) in out.iter_mut().zip(row) {
                *o += x * r;
            }
        }
        Ok(())
    }

    pub fn featurize(&self, fractions: &[f64]) -> Result<Vec<f64>, FeaturizeError> {
        let mut out = vec![0.0; self.width()];
        self.featurize_into(fractions, &mut out)?;
        Ok(out)
    }

    pub fn featurize_matrix<'a, I>(&self, rows: I) -> Result<DMatrix<f64>, FeaturizeError>
    where
        I: ExactSizeIterator<Item = &'a [f64]>,
    {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, self.width());
        let mut buf = vec![0.0; self.width()];
        for (i, f) in rows.enumerate() {
            self.featurize_into(f, &mut buf)?;
            for (j, v) in buf.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }
}

/// `value_j = sum_i fraction_i * table[element_i][column_j]`.
pub fn mole_average(
    c: &Composition,
    table: &EmbeddingTable,
    subset: Option<&FeatureSubset>,
) -> Result<FeatureVector, FeaturizeError> {
    let f = Featurizer::new(c.elements(), table, subset)?;
    Ok(FeatureVector {
        values: f.featurize(c.fractions())?,
        column_ids: f.columns,
    })
}

/// What to predict from a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Property(String),
    Class,
}

impl FromStr for Target {
    type Err = std::convert::Infallible;

    /// `class` selects the label column; anything else names a property.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "class" {
            Target::Class
        } else {
            Target::Property(s.to_string())
        })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Property(p) => f.write_str(p),
            Target::Class => f.write_str("class"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Vec<f64>),
    Labels(Vec<String>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Values(v) => Targets::Values(rows.iter().map(|&i| v[i]).collect()),
            Targets::Labels(l) => Targets::Labels(rows.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

pub fn extract_targets(ds: &Dataset, target: &Target) -> Result<Targets, FeaturizeError> {
    match target {
        Target::Property(name) => ds
            .property_values(name)
            .map(Targets::Values)
            .ok_or_else(|| FeaturizeError::UnknownProperty(name.clone())),
        Target::Class => ds.labels().map(Targets::Labels).ok_or(FeaturizeError::MissingLabels),
    }
}

/// Row `i` is the mole average of dataset row `i`.
pub fn featurize_dataset(
    ds: &Dataset,
    table: &EmbeddingTable,
    subset: Option<&FeatureSubset>,
    target: &Target,
) -> Result<(DMatrix<f64>, Targets), FeaturizeError> {
    let targets = extract_targets(ds, target)?;
    let f = Featurizer::new(ds.elements(), table, subset)?;
    let x = f.featurize_matrix(ds.samples().iter().map(|s| s.fractions.as_slice()))?;
    Ok((x, targets))
}

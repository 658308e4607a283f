//! Descriptor tables and composition/property datasets, with their CSV forms.
//!
//! Embedding table:
//!
//! ```text
//! element,e0,e1,...,e{D-1}
//! Ni,0.12,-1.5,...
//! ```
//!
//! Dataset:
//!
//! ```text
//! element:Ti,element:Nb,element:Zr,prop:sigma_y,class
//! 0.7,0.2,0.1,812.5,high
//! ```
//!
//! Numbers use `.` as the decimal separator; scientific notation is accepted.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::composition::Composition;
use crate::elements;

/// Fractions within this distance of a unit sum are renormalized on load.
pub const LOAD_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: duplicate element symbol `{symbol}`")]
    DuplicateElement { line: usize, symbol: String },
    #[error("line {line}: `{symbol}` is not an element symbol")]
    UnknownElement { line: usize, symbol: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse `{value}` as a number")]
    NonNumeric { line: usize, column: usize, value: String },
    #[error("line {line}, column {column}: value is not finite")]
    NonFinite { line: usize, column: usize },
    #[error("element columns {found:?} do not match expected {expected:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("line {line}: negative fraction {value} for {element}")]
    NegativeFraction { line: usize, element: String, value: f64 },
    #[error("line {line}: fractions sum to {sum}, not 1")]
    SimplexSum { line: usize, sum: f64 },
    #[error("line {line}: missing value for property `{name}`")]
    MissingProperty { line: usize, name: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_number(cell: &str, line: usize, column: usize) -> Result<f64, DataError> {
    let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
        line,
        column,
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite { line, column });
    }
    Ok(v)
}

fn read_file(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Iterates `(1-based line number, line)` skipping blank lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn check_symbol(symbol: &str, line: usize) -> Result<(), DataError> {
    if elements::is_known(symbol) {
        Ok(())
    } else {
        Err(DataError::UnknownElement {
            line,
            symbol: symbol.to_string(),
        })
    }
}

/// Per-element descriptor vectors, one row per element symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    elements: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    source_label: String,
}

impl EmbeddingTable {
    pub fn new(elements: Vec<String>, rows: Vec<Vec<f64>>, source_label: impl Into<String>) -> Result<Self, DataError> {
        if elements.len() != rows.len() {
            return Err(DataError::Invalid(format!(
                "{} element symbols for {} rows",
                elements.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(DataError::Invalid(
                "embedding table needs at least one row and one column".into(),
            ));
        }
        let mut seen = HashSet::new();
        let mut values = Vec::with_capacity(dim * rows.len());
        for (i, (symbol, row)) in elements.iter().zip(&rows).enumerate() {
            if !elements::is_known(symbol) {
                return Err(DataError::Invalid(format!(
                    "row {i}: `{symbol}` is not an element symbol"
                )));
            }
            if !seen.insert(symbol.as_str()) {
                return Err(DataError::Invalid(format!(
                    "row {i}: duplicate element symbol `{symbol}`"
                )));
            }
            if row.len() != dim {
                return Err(DataError::Invalid(format!(
                    "row {i}: expected {dim} values, found {}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Invalid(format!("row {i}: non-finite value")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            elements,
            dim,
            values,
            source_label: source_label.into(),
        })
    }

    /// Seeded table of standard-normal entries.
    pub fn random(elements: &[&str], dim: usize, seed: u64, source_label: &str) -> Result<Self, DataError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = elements
            .iter()
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Self::new(elements.iter().map(|s| s.to_string()).collect(), rows, source_label)
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn set_source_label(&mut self, label: impl Into<String>) {
        self.source_label = label.into();
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.elements.iter().position(|e| e == symbol)
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, symbol: &str) -> Option<&[f64]> {
        self.index_of(symbol).map(|i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.values[i * self.dim + j]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.elements
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks_exact(self.dim))
    }

    pub fn parse(text: &str, source_label: &str) -> Result<Self, DataError> {
        let mut lines = content_lines(text);
        let (hline, header) = lines.next().ok_or(DataError::MalformedHeader {
            line: 1,
            reason: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols[0] != "element" {
            return Err(DataError::MalformedHeader {
                line: hline,
                reason: format!("first column must be `element`, found `{}`", cols[0]),
            });
        }
        let dim = cols.len() - 1;
        if dim == 0 {
            return Err(DataError::MalformedHeader {
                line: hline,
                reason: "no descriptor columns".into(),
            });
        }
        for (j, c) in cols[1..].iter().enumerate() {
            if *c != format!("e{j}") {
                return Err(DataError::MalformedHeader {
                    line: hline,
                    reason: format!("column {} must be `e{j}`, found `{c}`", j + 1),
                });
            }
        }

        let mut elements = Vec::new();
        let mut values = Vec::new();
        let mut seen = HashSet::new();
        for (line, text) in lines {
            let cells: Vec<&str> = text.split(',').collect();
            let symbol = cells[0].trim();
            check_symbol(symbol, line)?;
            if !seen.insert(symbol.to_string()) {
                return Err(DataError::DuplicateElement {
                    line,
                    symbol: symbol.to_string(),
                });
            }
            if cells.len() - 1 != dim {
                return Err(DataError::DimensionMismatch {
                    line,
                    expected: dim,
                    found: cells.len() - 1,
                });
            }
            for (j, cell) in cells[1..].iter().enumerate() {
                values.push(parse_number(cell, line, j + 2)?);
            }
            elements.push(symbol.to_string());
        }
        if elements.is_empty() {
            return Err(DataError::Invalid("embedding table has no rows".into()));
        }
        Ok(Self {
            elements,
            dim,
            values,
            source_label: source_label.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("element");
        for j in 0..self.dim {
            write!(out, ",e{j}").unwrap();
        }
        out.push('\n');
        for (symbol, row) in self.rows() {
            out.push_str(symbol);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Loads an embedding table; the source label is the file stem.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable, DataError> {
    let path = path.as_ref();
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingTable::parse(&read_file(path)?, &label)
}

pub fn write_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, table.to_csv())
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub fractions: Vec<f64>,
    /// Aligned with the dataset's `property_names`.
    pub properties: Vec<f64>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    elements: Arc<[String]>,
    property_names: Vec<String>,
    has_class: bool,
    samples: Vec<Sample>,
}

fn is_plain_cell(s: &str) -> bool {
    !s.contains([',', '\n', '\r'])
}

impl Dataset {
    /// Validates the samples; fractions within [`LOAD_SUM_TOLERANCE`] of a
    /// unit sum are rescaled to sum to one.
    pub fn new(elements: Vec<String>, property_names: Vec<String>, samples: Vec<Sample>) -> Result<Self, DataError> {
        if elements.is_empty() {
            return Err(DataError::Invalid("dataset needs at least one element".into()));
        }
        let mut seen = HashSet::new();
        for e in &elements {
            if !elements::is_known(e) {
                return Err(DataError::Invalid(format!("`{e}` is not an element symbol")));
            }
            if !seen.insert(e.as_str()) {
                return Err(DataError::Invalid(format!("duplicate element column `{e}`")));
            }
        }
        let mut seen = HashSet::new();
        for p in &property_names {
            if p.is_empty() || !is_plain_cell(p) || !seen.insert(p.as_str()) {
                return Err(DataError::Invalid(format!("bad or duplicate property name `{p}`")));
            }
        }
        let has_class = samples.iter().any(|s| s.label.is_some());
        let mut checked = Vec::with_capacity(samples.len());
        for (i, mut s) in samples.into_iter().enumerate() {
            let line = i + 2;
            if s.fractions.len() != elements.len() {
                return Err(DataError::DimensionMismatch {
                    line,
                    expected: elements.len(),
                    found: s.fractions.len(),
                });
            }
            if s.properties.len() != property_names.len() {
                return Err(DataError::Invalid(format!(
                    "row {i}: {} property values for {} names",
                    s.properties.len(),
                    property_names.len()
                )));
            }
            normalize_row(&mut s.fractions, &elements, line)?;
            if let Some(j) = s.properties.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    line,
                    column: elements.len() + j + 1,
                });
            }
            if let Some(l) = &s.label {
                if !is_plain_cell(l) {
                    return Err(DataError::Invalid(format!("row {i}: label `{l}` contains a delimiter")));
                }
            }
            checked.push(s);
        }
        Ok(Self {
            elements: elements.into(),
            property_names,
            has_class,
            samples: checked,
        })
    }

    pub fn parse(text: &str, expected_elements: Option<&[String]>) -> Result<Self, DataError> {
        let mut lines = content_lines(text);
        let (hline, header) = lines.next().ok_or(DataError::MalformedHeader {
            line: 1,
            reason: "empty file".into(),
        })?;
        let mut elements = Vec::new();
        let mut props = Vec::new();
        let mut class_col = None;
        for (j, col) in header.split(',').map(str::trim).enumerate() {
            if let Some(sym) = col.strip_prefix("element:") {
                if !props.is_empty() || class_col.is_some() {
                    return Err(DataError::MalformedHeader {
                        line: hline,
                        reason: "element columns must come first".into(),
                    });
                }
                check_symbol(sym, hline)?;
                if elements.iter().any(|e| e == sym) {
                    return Err(DataError::DuplicateElement {
                        line: hline,
                        symbol: sym.to_string(),
                    });
                }
                elements.push(sym.to_string());
            } else if let Some(name) = col.strip_prefix("prop:") {
                if name.is_empty() || props.iter().any(|p| p == name) {
                    return Err(DataError::MalformedHeader {
                        line: hline,
                        reason: format!("empty or repeated property `{name}`"),
                    });
                }
                props.push(name.to_string());
            } else if col == "class" && class_col.is_none() {
                class_col = Some(j);
            } else {
                return Err(DataError::MalformedHeader {
                    line: hline,
                    reason: format!("unrecognised column `{col}`"),
                });
            }
        }
        if elements.is_empty() {
            return Err(DataError::MalformedHeader {
                line: hline,
                reason: "no element:<Symbol> columns".into(),
            });
        }
        if let Some(expected) = expected_elements {
            if expected != elements.as_slice() {
                return Err(DataError::SchemaMismatch {
                    expected: expected.to_vec(),
                    found: elements,
                });
            }
        }

        let ncols = elements.len() + props.len() + usize::from(class_col.is_some());
        let mut samples = Vec::new();
        for (line, text) in lines {
            let cells: Vec<&str> = text.split(',').map(str::trim).collect();
            if cells.len() != ncols {
                return Err(DataError::DimensionMismatch {
                    line,
                    expected: ncols,
                    found: cells.len(),
                });
            }
            let mut fractions = Vec::with_capacity(elements.len());
            let mut properties = Vec::with_capacity(props.len());
            let mut label = None;
            let mut p = 0;
            for (j, cell) in cells.iter().enumerate() {
                if j < elements.len() {
                    fractions.push(parse_number(cell, line, j + 1)?);
                } else if Some(j) == class_col {
                    label = (!cell.is_empty()).then(|| cell.to_string());
                } else {
                    if cell.is_empty() {
                        return Err(DataError::MissingProperty {
                            line,
                            name: props[p].clone(),
                        });
                    }
                    properties.push(parse_number(cell, line, j + 1)?);
                    p += 1;
                }
            }
            normalize_row(&mut fractions, &elements, line)?;
            samples.push(Sample {
                fractions,
                properties,
                label,
            });
        }
        Ok(Self {
            elements: elements.into(),
            property_names: props,
            has_class: class_col.is_some(),
            samples,
        })
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn element_list(&self) -> Arc<[String]> {
        Arc::clone(&self.elements)
    }

    pub fn property_names(&self) -> &[String] {
        &self.property_names
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_class(&self) -> bool {
        self.has_class
    }

    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.property_names.iter().position(|p| p == name)
    }

    pub fn property_values(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.property_index(name)?;
        Some(self.samples.iter().map(|s| s.properties[j]).collect())
    }

    /// Class labels, or `None` when any row lacks one.
    pub fn labels(&self) -> Option<Vec<String>> {
        self.samples.iter().map(|s| s.label.clone()).collect()
    }

    pub fn composition(&self, i: usize) -> Composition {
        Composition::from_validated(self.element_list(), self.samples[i].fractions.clone())
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            elements: self.element_list(),
            property_names: self.property_names.clone(),
            has_class: self.has_class,
            samples: rows.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut cols: Vec<String> = self.elements.iter().map(|e| format!("element:{e}")).collect();
        cols.extend(self.property_names.iter().map(|p| format!("prop:{p}")));
        if self.has_class {
            cols.push("class".into());
        }
        let mut out = cols.join(",");
        out.push('\n');
        for s in &self.samples {
            let mut cells: Vec<String> = s.fractions.iter().map(f64::to_string).collect();
            cells.extend(s.properties.iter().map(f64::to_string));
            if self.has_class {
                cells.push(s.label.clone().unwrap_or_default());
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn normalize_row(fractions: &mut [f64], elements: &[String], line: usize) -> Result<(), DataError> {
    for (v, e) in fractions.iter().zip(elements) {
        if !v.is_finite() {
            return Err(DataError::NonFinite { line, column: 0 });
        }
        if *v < 0.0 {
            return Err(DataError::NegativeFraction {
                line,
                element: e.clone(),
                value: *v,
            });
        }
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > LOAD_SUM_TOLERANCE {
        return Err(DataError::SimplexSum { line, sum });
    }
    if (sum - 1.0).abs() > crate::composition::PROJECTION_TOLERANCE {
        fractions.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Loads a dataset. When `expected_elements` is given the file's element
/// columns must match it exactly, order included.
pub fn load_dataset(path: impl AsRef<Path>, expected_elements: Option<&[String]>) -> Result<Dataset, DataError> {
    Dataset::parse(&read_file(path.as_ref())?, expected_elements)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, ds.to_csv())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "element,e0,e1,e2,e3\nH,1,2,3,4\nHe,0.5,-1,2e-3,0\nLi,7,7,7,7\n";

    #[test]
    fn loads_three_row_fixture() {
        let t = EmbeddingTable::parse(FIXTURE, "fixture").unwrap();
        assert_eq!(t.elements(), ["H", "He", "Li"]);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.row(1), [0.5, -1.0, 2e-3, 0.0]);
        assert_eq!(t.get("Li").unwrap(), [7.0; 4]);
    }

    #[test]
    fn duplicate_element_names_line() {
        let text = "element,e0,e1,e2,e3\nH,1,2,3,4\nH,1,2,3,4\n";
        match EmbeddingTable::parse(text, "") {
            Err(DataError::DuplicateElement { line, symbol }) => {
                assert_eq!(line, 3);
                assert_eq!(symbol, "H");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_is_dimension_mismatch() {
        let text = "element,e0,e1,e2,e3\nH,1,2,3\n";
        assert!(matches!(
            EmbeddingTable::parse(text, ""),
            Err(DataError::DimensionMismatch {
                line: 2,
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn table_header_and_cells_are_checked() {
        assert!(matches!(
            EmbeddingTable::parse("elem,e0\nH,1\n", ""),
            Err(DataError::MalformedHeader { line: 1, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("element,e0,e2\nH,1,2\n", ""),
            Err(DataError::MalformedHeader { .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("element,e0\nH,abc\n", ""),
            Err(DataError::NonNumeric { line: 2, column: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("element,e0\nXq,1\n", ""),
            Err(DataError::UnknownElement { line: 2, .. })
        ));
        assert!(matches!(
            EmbeddingTable::parse("element,e0\nH,inf\n", ""),
            Err(DataError::NonFinite { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_embedding_table("/nonexistent/table.csv"),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn table_csv_round_trip() {
        let t = EmbeddingTable::random(&["Ni", "Ti", "Cu"], 5, 3, "r").unwrap();
        let text = t.to_csv();
        let back = EmbeddingTable::parse(&text, "r").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), text);
    }

    const DATA: &str = "element:Ti,element:Nb,element:Zr,prop:sigma_s\n0.7,0.2,0.1,812.5\n0.5,0.5,0,790\n";

    #[test]
    fn loads_two_row_dataset() {
        let ds = Dataset::parse(DATA, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.property_names(), ["sigma_s"]);
        assert_eq!(ds.property_values("sigma_s").unwrap(), [812.5, 790.0]);
        assert!(!ds.has_class());
    }

    #[test]
    fn simplex_violation_rejected() {
        let text = "element:Ti,element:Nb,element:Zr,prop:p\n0.6,0.6,0.0,1\n";
        assert!(matches!(
            Dataset::parse(text, None),
            Err(DataError::SimplexSum { line: 2, .. })
        ));
    }

    #[test]
    fn near_unit_sum_is_renormalized() {
        let text = "element:Ti,element:Nb,prop:p\n0.5000004,0.5,1\n";
        let ds = Dataset::parse(text, None).unwrap();
        let s: f64 = ds.samples()[0].fractions.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        crate::composition::make_composition(ds.elements(), &ds.samples()[0].fractions).unwrap();
    }

    #[test]
    fn schema_mismatch_and_bad_cells() {
        let expected = vec!["Ni".to_string(), "Ti".to_string()];
        assert!(matches!(
            Dataset::parse(DATA, Some(&expected)),
            Err(DataError::SchemaMismatch { .. })
        ));
        assert!(matches!(
            Dataset::parse("element:Ti,element:Nb,prop:p\n1.1,-0.1,1\n", None),
            Err(DataError::NegativeFraction { line: 2, .. })
        ));
        assert!(matches!(
            Dataset::parse("element:Ti,element:Nb,prop:p\n0.5,0.5,\n", None),
            Err(DataError::MissingProperty { line: 2, .. })
        ));
        assert!(matches!(
            Dataset::parse("element:Ti,foo\n1,2\n", None),
            Err(DataError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn class_column_round_trip() {
        let text = "element:Ni,element:Ti,prop:a,class\n0.5,0.5,1.5,high\n1,0,2,low\n";
        let ds = Dataset::parse(text, None).unwrap();
        assert_eq!(ds.labels().unwrap(), ["high", "low"]);
        assert_eq!(ds.to_csv(), text);
    }
}

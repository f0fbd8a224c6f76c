//! Tabular datasets: schema, CSV ingestion and feature encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::learners::{FeatureMatrix, Label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// A sensitive attribute and the value that marks the privileged group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedColumn {
    pub name: String,
    pub privileged: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub target: String,
    /// Raw target value mapped to label 1.
    pub positive_label: String,
    #[serde(default)]
    pub protected: Vec<ProtectedColumn>,
    #[serde(default)]
    pub features: Vec<ColumnSpec>,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let names = std::iter::once(self.target.as_str())
            .chain(self.protected.iter().map(|p| p.name.as_str()))
            .chain(self.features.iter().map(|f| f.name.as_str()));
        for name in names {
            if name.is_empty() {
                return Err(Error::Config("empty column name in schema".into()));
            }
            if !seen.insert(name) {
                return Err(Error::Config(format!("column `{name}` listed twice in schema")));
            }
        }
        Ok(())
    }

    pub fn protected_column(&self, name: &str) -> Option<&ProtectedColumn> {
        self.protected.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodedKind {
    Numeric,
    /// One level of a one-hot encoded categorical.
    OneHot,
    /// `1.0` iff the protected column holds its privileged value.
    ProtectedIndicator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EncodedColumn {
    pub source: String,
    pub level: Option<String>,
    pub kind: EncodedKind,
}

impl EncodedColumn {
    pub fn name(&self) -> String {
        match &self.level {
            Some(l) => format!("{}={}", self.source, l),
            None => self.source.clone(),
        }
    }
}

/// Encoded features, binary labels and the raw protected values per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    schema: Arc<DatasetSchema>,
    columns: Arc<Vec<EncodedColumn>>,
    features: FeatureMatrix,
    labels: Vec<Label>,
    protected: BTreeMap<String, Vec<String>>,
}

impl LabeledDataset {
    pub fn from_parts(
        schema: Arc<DatasetSchema>,
        columns: Arc<Vec<EncodedColumn>>,
        features: FeatureMatrix,
        labels: Vec<Label>,
        protected: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        if features.cols() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: features.cols(),
            });
        }
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        for p in &schema.protected {
            let v = protected
                .get(&p.name)
                .ok_or_else(|| Error::MissingColumn(p.name.clone()))?;
            if v.len() != labels.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: v.len(),
                });
            }
        }
        Ok(Self {
            schema,
            columns,
            features,
            labels,
            protected,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[EncodedColumn] {
        &self.columns
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn protected_values(&self, column: &str) -> Result<&[String]> {
        self.protected
            .get(column)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(column.to_string()))
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            schema: Arc::clone(&self.schema),
            columns: Arc::clone(&self.columns),
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            protected: self
                .protected
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }

    /// Indices of encoded columns not derived from a protected attribute.
    pub fn non_protected_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind != EncodedKind::ProtectedIndicator)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).collect()
    }

    /// Median of every numeric column that has missing entries, ignoring
    /// the gaps. Columns that are entirely missing get 0.
    pub fn missing_medians(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            if c.kind != EncodedKind::Numeric {
                continue;
            }
            let col: Vec<f64> = (0..self.len()).map(|i| self.features.get(i, j)).collect();
            if col.iter().all(|v| v.is_finite()) {
                continue;
            }
            out.push((j, median(col.into_iter().filter(|v| v.is_finite()).collect())));
        }
        out
    }

    /// Fills missing numeric cells of the listed columns.
    pub fn impute(&mut self, fills: &[(usize, f64)]) {
        for &(j, v) in fills {
            for i in 0..self.len() {
                if !self.features.get(i, j).is_finite() {
                    self.features.set(i, j, v);
                }
            }
        }
    }

    /// Renders the dataset back to CSV with the original column names.
    /// One-hot blocks are collapsed to their active level.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in self.columns.iter() {
            if c.kind != EncodedKind::ProtectedIndicator && seen.insert(c.source.clone()) {
                header.push(c.source.clone());
            }
        }
        header.extend(self.schema.protected.iter().map(|p| p.name.clone()));
        header.push(self.schema.target.clone());
        w.write_record(&header)?;
        let negative = format!("not_{}", self.schema.positive_label);
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            let row = self.features.row(i);
            let mut j = 0;
            while j < self.columns.len() {
                let c = &self.columns[j];
                match c.kind {
                    EncodedKind::Numeric => {
                        rec.push(if row[j].is_finite() { row[j].to_string() } else { String::new() });
                        j += 1;
                    }
                    EncodedKind::OneHot => {
                        let mut level = String::new();
                        while j < self.columns.len() && self.columns[j].source == c.source {
                            if row[j] == 1.0 {
                                level = self.columns[j].level.clone().unwrap_or_default();
                            }
                            j += 1;
                        }
                        rec.push(level);
                    }
                    EncodedKind::ProtectedIndicator => j += 1,
                }
            }
            for p in &self.schema.protected {
                rec.push(self.protected[&p.name][i].clone());
            }
            rec.push(if self.labels[i] == 1 {
                self.schema.positive_label.clone()
            } else {
                negative.clone()
            });
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: LabeledDataset,
    /// Rows skipped because the target cell was empty.
    pub dropped_missing_target: usize,
}

const MISSING_LEVEL: &str = "missing";

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn matches_value(raw: &str, expected: &str) -> bool {
    let (a, b) = (raw.trim(), expected.trim());
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Encodes string records laid out according to `header`.
///
/// Numeric columns are parsed (missing cells become `NaN` until imputed),
/// categorical columns are one-hot encoded over their sorted levels with an
/// explicit `missing` level, and each protected column contributes one
/// privileged-indicator feature.
pub fn encode_records(schema: &DatasetSchema, header: &[String], records: &[Vec<String>]) -> Result<CsvLoad> {
    schema.validate()?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_idx = col(&schema.target)?;
    let protected_idx: Vec<usize> = schema.protected.iter().map(|p| col(&p.name)).collect::<Result<_>>()?;
    let feature_idx: Vec<usize> = schema.features.iter().map(|f| col(&f.name)).collect::<Result<_>>()?;

    let kept: Vec<(usize, &Vec<String>)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !is_missing(r.get(target_idx).map_or("", String::as_str)))
        .collect();
    let dropped = records.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let cell = |r: &Vec<String>, j: usize| r.get(j).map_or(String::new(), |s| s.trim().to_string());

    let mut columns = Vec::new();
    let mut levels: Vec<Vec<String>> = Vec::new();
    for (spec, &j) in schema.features.iter().zip(&feature_idx) {
        match spec.kind {
            ColumnKind::Numeric => {
                columns.push(EncodedColumn {
                    source: spec.name.clone(),
                    level: None,
                    kind: EncodedKind::Numeric,
                });
                levels.push(Vec::new());
            }
            ColumnKind::Categorical => {
                let set: BTreeSet<String> = kept
                    .iter()
                    .map(|(_, r)| {
                        let v = cell(r, j);
                        if is_missing(&v) { MISSING_LEVEL.to_string() } else { v }
                    })
                    .collect();
                for l in &set {
                    columns.push(EncodedColumn {
                        source: spec.name.clone(),
                        level: Some(l.clone()),
                        kind: EncodedKind::OneHot,
                    });
                }
                levels.push(set.into_iter().collect());
            }
        }
    }
    for p in &schema.protected {
        columns.push(EncodedColumn {
            source: p.name.clone(),
            level: None,
            kind: EncodedKind::ProtectedIndicator,
        });
    }

    let mut data = Vec::with_capacity(kept.len() * columns.len());
    let mut labels = Vec::with_capacity(kept.len());
    let mut protected: BTreeMap<String, Vec<String>> =
        schema.protected.iter().map(|p| (p.name.clone(), Vec::with_capacity(kept.len()))).collect();
    for &(row_no, r) in &kept {
        for ((spec, &j), lv) in schema.features.iter().zip(&feature_idx).zip(&levels) {
            let v = cell(r, j);
            match spec.kind {
                ColumnKind::Numeric => {
                    if is_missing(&v) {
                        data.push(f64::NAN);
                    } else {
                        let x: f64 = v.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| {
                            Error::UnparsableCell {
                                row: row_no + 1,
                                column: spec.name.clone(),
                                value: v.clone(),
                            }
                        })?;
                        data.push(x);
                    }
                }
                ColumnKind::Categorical => {
                    let v = if is_missing(&v) { MISSING_LEVEL.to_string() } else { v };
                    data.extend(lv.iter().map(|l| if *l == v { 1.0 } else { 0.0 }));
                }
            }
        }
        for (p, &j) in schema.protected.iter().zip(&protected_idx) {
            let v = cell(r, j);
            data.push(if matches_value(&v, &p.privileged) { 1.0 } else { 0.0 });
            protected.get_mut(&p.name).expect("initialized").push(v);
        }
        labels.push(matches_value(&cell(r, target_idx), &schema.positive_label) as Label);
    }

    let features = FeatureMatrix::with_missing(kept.len(), columns.len(), data)?;
    let dataset = LabeledDataset::from_parts(
        Arc::new(schema.clone()),
        Arc::new(columns),
        features,
        labels,
        protected,
    )?;
    Ok(CsvLoad {
        dataset,
        dropped_missing_target: dropped,
    })
}

pub fn read_csv_str(schema: &DatasetSchema, text: &str) -> Result<CsvLoad> {
    read_csv(schema, csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes()))
}

fn read_csv<R: std::io::Read>(schema: &DatasetSchema, mut rdr: csv::Reader<R>) -> Result<CsvLoad> {
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec?.iter().map(str::to_string).collect());
    }
    encode_records(schema, &header, &records)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<CsvLoad> {
    let rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    read_csv(schema, rdr)
}

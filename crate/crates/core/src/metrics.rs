//! Confusion-matrix metrics, per-subgroup breakdowns, disparities and
//! aggregation over repeated runs.
//!
//! Rates whose denominator is zero are `None`, never `0` or `NaN`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::conditioning::{GroupSpec, Membership};
use crate::harness::dataset::LabeledDataset;
use crate::learners::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            true_pos: self.true_pos + o.true_pos,
            false_pos: self.false_pos + o.false_pos,
            true_neg: self.true_neg + o.true_neg,
            false_neg: self.false_neg + o.false_neg,
        }
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => c.true_pos += 1,
            (false, true) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (true, false) => c.false_neg += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Tpr,
    Fpr,
    Fnr,
    Tnr,
    /// Share of rows predicted positive.
    SelectionRate,
    /// Share of rows whose true label is positive.
    PositiveRate,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Accuracy,
        Metric::Tpr,
        Metric::Fpr,
        Metric::Fnr,
        Metric::Tnr,
        Metric::SelectionRate,
        Metric::PositiveRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Tpr => "tpr",
            Metric::Fpr => "fpr",
            Metric::Fnr => "fnr",
            Metric::Tnr => "tnr",
            Metric::SelectionRate => "selection_rate",
            Metric::PositiveRate => "positive_rate",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub tnr: Option<f64>,
    pub selection_rate: Option<f64>,
    pub positive_rate: Option<f64>,
}

impl MetricSet {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Tpr => self.tpr,
            Metric::Fpr => self.fpr,
            Metric::Fnr => self.fnr,
            Metric::Tnr => self.tnr,
            Metric::SelectionRate => self.selection_rate,
            Metric::PositiveRate => self.positive_rate,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metric_set(c: &ConfusionCounts) -> MetricSet {
    let n = c.total();
    let pos = c.true_pos + c.false_neg;
    let neg = c.true_neg + c.false_pos;
    MetricSet {
        accuracy: ratio(c.true_pos + c.true_neg, n),
        tpr: ratio(c.true_pos, pos),
        fpr: ratio(c.false_pos, neg),
        fnr: ratio(c.false_neg, pos),
        tnr: ratio(c.true_neg, neg),
        selection_rate: ratio(c.true_pos + c.false_pos, n),
        positive_rate: ratio(pos, n),
    }
}

/// A named row filter: every condition must hold. No conditions means the
/// whole test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgroup {
    pub name: String,
    pub conditions: Vec<(String, String, Membership)>,
}

pub const FULL: &str = "Full";

impl Subgroup {
    pub fn full() -> Self {
        Self {
            name: FULL.into(),
            conditions: Vec::new(),
        }
    }

    pub fn rows(&self, dataset: &LabeledDataset) -> Result<Vec<usize>> {
        let cols = self
            .conditions
            .iter()
            .map(|(c, p, m)| Ok((dataset.protected_values(c)?, p, *m)))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..dataset.len())
            .filter(|&i| {
                cols.iter().all(|(v, p, m)| {
                    let is_priv = v[i].trim() == p.trim();
                    is_priv == (*m == Membership::Priv)
                })
            })
            .collect())
    }
}

fn spec_subgroups(spec: &GroupSpec) -> Vec<Subgroup> {
    spec.group_ids()
        .into_iter()
        .map(|id| Subgroup {
            name: spec.subgroup_name(&id),
            conditions: spec
                .columns
                .iter()
                .zip(&spec.privileged_values)
                .zip(&id.0)
                .map(|((c, p), m)| (c.clone(), p.clone(), *m))
                .collect(),
        })
        .collect()
}

/// `Full`, then for each spec its own groups, then (for multi-column specs)
/// the single-column marginals. Names already present are skipped.
pub fn subgroup_roster(specs: &[GroupSpec]) -> Vec<Subgroup> {
    let mut out = vec![Subgroup::full()];
    let push = |s: Subgroup, out: &mut Vec<Subgroup>| {
        if !out.iter().any(|o| o.name == s.name) {
            out.push(s);
        }
    };
    for spec in specs {
        for s in spec_subgroups(spec) {
            push(s, &mut out);
        }
        if spec.columns.len() > 1 {
            for (c, p) in spec.columns.iter().zip(&spec.privileged_values) {
                let marginal = GroupSpec {
                    columns: vec![c.clone()],
                    privileged_values: vec![p.clone()],
                };
                for s in spec_subgroups(&marginal) {
                    push(s, &mut out);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupMetrics {
    pub name: String,
    pub size: usize,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

/// Metrics for every subgroup of the roster, in roster order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown(pub Vec<SubgroupMetrics>);

impl Breakdown {
    pub fn get(&self, name: &str) -> Option<&SubgroupMetrics> {
        self.0.iter().find(|s| s.name == name)
    }
}

pub fn group_breakdown(test: &LabeledDataset, preds: &[Label], specs: &[GroupSpec]) -> Result<Breakdown> {
    if preds.len() != test.len() {
        return Err(Error::LengthMismatch {
            left: test.len(),
            right: preds.len(),
        });
    }
    let y = test.labels();
    subgroup_roster(specs)
        .into_iter()
        .map(|s| {
            let rows = s.rows(test)?;
            let t: Vec<Label> = rows.iter().map(|&i| y[i]).collect();
            let p: Vec<Label> = rows.iter().map(|&i| preds[i]).collect();
            let counts = confusion(&t, &p)?;
            Ok(SubgroupMetrics {
                name: s.name,
                size: rows.len(),
                counts,
                metrics: metric_set(&counts),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Breakdown)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disparity {
    pub max_abs_difference: f64,
    /// `min / max`; `1` when every defined value is zero.
    pub ratio_min_over_max: f64,
}

/// Spread of `metric` across the groups of `spec`, over groups where the
/// metric is defined. Needs at least two defined groups.
pub fn disparity(report: &Breakdown, metric: Metric, spec: &GroupSpec) -> Result<Disparity> {
    let vals: Vec<f64> = spec
        .group_ids()
        .iter()
        .filter_map(|id| report.get(&spec.subgroup_name(id)))
        .filter_map(|s| s.metrics.get(metric))
        .collect();
    if vals.len() < 2 {
        return Err(Error::InsufficientDefinedCells(format!(
            "{metric} over `{}` has {} defined group(s)",
            spec.name(),
            vals.len()
        )));
    }
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Disparity {
        max_abs_difference: max - min,
        ratio_min_over_max: if max == 0.0 { 1.0 } else { min / max },
    })
}

/// Share of rows falling in each non-`Full` subgroup of the roster.
pub fn demographic_composition(dataset: &LabeledDataset, specs: &[GroupSpec]) -> Result<Vec<(String, f64)>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.len() as f64;
    subgroup_roster(specs)
        .into_iter()
        .skip(1)
        .map(|s| Ok((s.name.clone(), s.rows(dataset)?.len() as f64 / n)))
        .collect()
}

/// One metric value of one model on one subgroup in one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub model: String,
    pub subgroup: String,
    pub metric: Metric,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub model: String,
    pub subgroup: String,
    pub metric: Metric,
    /// Mean over runs where the value is defined.
    pub mean: Option<f64>,
    /// Sample standard deviation; needs two defined runs.
    pub std: Option<f64>,
    pub defined_runs: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedMetricsReport {
    pub runs: usize,
    pub models: Vec<String>,
    pub subgroups: Vec<String>,
    pub metrics: Vec<Metric>,
    pub cells: Vec<CellStats>,
}

impl GroupedMetricsReport {
    /// Aggregates records over runs. Cells are ordered model-major, then
    /// subgroup, then metric, following the given orders.
    pub fn aggregate(runs: usize, models: &[String], subgroups: &[String], records: &[RunRecord]) -> Self {
        let mut values: BTreeMap<(&str, &str, Metric), Vec<f64>> = BTreeMap::new();
        for r in records {
            let e = values.entry((&r.model, &r.subgroup, r.metric)).or_default();
            if let Some(v) = r.value {
                e.push(v);
            }
        }
        let mut cells = Vec::new();
        for m in models {
            for s in subgroups {
                for metric in Metric::ALL {
                    let v = values.get(&(m.as_str(), s.as_str(), metric)).map_or(&[][..], |v| &v[..]);
                    let k = v.len();
                    let mean = (k > 0).then(|| v.iter().sum::<f64>() / k as f64);
                    let std = mean.filter(|_| k > 1).map(|mu| {
                        (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (k - 1) as f64).sqrt()
                    });
                    cells.push(CellStats {
                        model: m.clone(),
                        subgroup: s.clone(),
                        metric,
                        mean,
                        std,
                        defined_runs: k,
                        runs,
                    });
                }
            }
        }
        Self {
            runs,
            models: models.to_vec(),
            subgroups: subgroups.to_vec(),
            metrics: Metric::ALL.to_vec(),
            cells,
        }
    }

    pub fn cell(&self, model: &str, subgroup: &str, metric: Metric) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.subgroup == subgroup && c.metric == metric)
    }
}

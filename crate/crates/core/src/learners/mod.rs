//! Base predictors and clustering used by the conditioning layer.
//!
//! All learners operate on a dense [`FeatureMatrix`] with binary labels in
//! `{0, 1}`. Fitted models are immutable and `Send + Sync`.

mod kmeans;
mod knn;
pub mod logistic;
mod tree;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use kmeans::{kmeans_assign, kmeans_fit, kmeans_fit_with, KMeansConfig, KMeansModel};
pub use knn::KnnModel;
pub use logistic::LogisticModel;
pub use tree::DecisionTree;

/// Binary class label; `1` is the positive class.
pub type Label = u8;

/// Dense row-major matrix of encoded features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::with_missing(rows, cols, data)?;
        m.check_finite()?;
        Ok(m)
    }

    /// Like [`FeatureMatrix::new`] but allows `NaN` as a missing-value marker.
    /// Learners reject such matrices until the gaps are imputed.
    pub fn with_missing(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(p) if self.cols > 0 => Err(Error::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            Some(_) => Ok(()),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in self.iter_rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }
}

/// Per-column affine scaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    /// Column statistics of `x`; constant columns get scale 1.
    pub fn fit(x: &FeatureMatrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut means = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut scales = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((s, v), m) in scales.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn identity(cols: usize) -> Self {
        Self {
            means: vec![0.0; cols],
            scales: vec![1.0; cols],
        }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        let mut buf = Vec::with_capacity(x.cols());
        for r in x.iter_rows() {
            self.transform_row(r, &mut buf);
            data.extend_from_slice(&buf);
        }
        FeatureMatrix {
            rows: x.rows(),
            cols: x.cols(),
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    LogisticRegression(LogisticParams),
    DecisionTree(TreeParams),
    KNeighbors(KnnParams),
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::DecisionTree(TreeParams::default())
    }
}

impl LearnerConfig {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::LogisticRegression(_) => LearnerKind::LogisticRegression,
            LearnerConfig::DecisionTree(_) => LearnerKind::DecisionTree,
            LearnerConfig::KNeighbors(_) => LearnerKind::KNeighbors,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LearnerConfig::LogisticRegression(p) => {
                p.learning_rate > 0.0 && p.learning_rate.is_finite() && p.iterations > 0 && p.l2 >= 0.0
            }
            LearnerConfig::DecisionTree(p) => p.max_depth > 0 && p.min_samples_leaf > 0,
            LearnerConfig::KNeighbors(p) => p.k > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad hyperparameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    LogisticRegression,
    DecisionTree,
    KNeighbors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FittedModel {
    /// Training labels were all identical.
    Constant(Label),
    Logistic(LogisticModel),
    Tree(DecisionTree),
    Knn(KnnModel),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedLearner {
    pub kind: LearnerKind,
    pub n_features: usize,
    pub model: FittedModel,
}

impl FittedLearner {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<Label>> {
        predict(self, x)
    }
}

pub(crate) fn check_xy(x: &FeatureMatrix, y: &[Label]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if let Some(&bad) = y.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidParams(format!("label {bad} is not binary")));
    }
    x.check_finite()
}

/// Fits a learner. The current learners are deterministic, so `seed` only
/// matters for future stochastic kinds; it is part of the contract so that
/// callers thread it through consistently.
pub fn fit(config: &LearnerConfig, x: &FeatureMatrix, y: &[Label], _seed: u64) -> Result<FittedLearner> {
    config.validate()?;
    check_xy(x, y)?;
    let model = if y.iter().all(|&l| l == y[0]) {
        FittedModel::Constant(y[0])
    } else {
        match config {
            LearnerConfig::LogisticRegression(p) => FittedModel::Logistic(LogisticModel::fit(x, y, p)),
            LearnerConfig::DecisionTree(p) => FittedModel::Tree(DecisionTree::fit(x, y, p)),
            LearnerConfig::KNeighbors(p) => FittedModel::Knn(KnnModel::fit(x, y, p)),
        }
    };
    Ok(FittedLearner {
        kind: config.kind(),
        n_features: x.cols(),
        model,
    })
}

pub fn predict(model: &FittedLearner, x: &FeatureMatrix) -> Result<Vec<Label>> {
    if x.cols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            found: x.cols(),
        });
    }
    x.check_finite()?;
    Ok(match &model.model {
        FittedModel::Constant(l) => vec![*l; x.rows()],
        FittedModel::Logistic(m) => m.predict(x),
        FittedModel::Tree(m) => x.iter_rows().map(|r| m.predict_row(r)).collect(),
        FittedModel::Knn(m) => m.predict(x),
    })
}

pub fn accuracy(y_true: &[Label], y_pred: &[Label]) -> f64 {
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    hits as f64 / y_true.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_configs() -> [LearnerConfig; 3] {
        [
            LearnerConfig::LogisticRegression(LogisticParams::default()),
            LearnerConfig::DecisionTree(TreeParams::default()),
            LearnerConfig::KNeighbors(KnnParams::default()),
        ]
    }

    #[test]
    fn separable_1d_logistic() {
        let xs: Vec<Vec<f64>> = (-20..=20).filter(|&i| i != 0).map(|i| vec![i as f64 / 4.0]).collect();
        let y: Vec<Label> = xs.iter().map(|r| (r[0] > 0.0) as Label).collect();
        let x = FeatureMatrix::from_rows(&xs).unwrap();
        let cfg = LearnerConfig::LogisticRegression(LogisticParams {
            learning_rate: 0.5,
            iterations: 2000,
            l2: 0.0,
        });
        let m = fit(&cfg, &x, &y, 0).unwrap();
        assert_eq!(accuracy(&y, &predict(&m, &x).unwrap()), 1.0);
    }

    #[test]
    fn constant_labels_give_constant_predictor() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![5.0, 5.0]]).unwrap();
        let y = vec![1, 1, 1];
        let probe = FeatureMatrix::from_rows(&[vec![-100.0, 3.0], vec![7.0, 7.0]]).unwrap();
        for cfg in all_configs() {
            let m = fit(&cfg, &x, &y, 0).unwrap();
            assert_eq!(predict(&m, &probe).unwrap(), vec![1, 1]);
        }
    }

    #[test]
    fn dimension_and_length_errors() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            fit(&LearnerConfig::default(), &x, &[0], 0),
            Err(Error::LengthMismatch { .. })
        ));
        let m = fit(&LearnerConfig::default(), &x, &[0, 1], 0).unwrap();
        let wide = FeatureMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(predict(&m, &wide), Err(Error::DimensionMismatch { .. })));
        let empty = FeatureMatrix::new(0, 1, vec![]).unwrap();
        assert!(matches!(
            fit(&LearnerConfig::default(), &empty, &[], 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn missing_values_rejected_by_learners() {
        let x = FeatureMatrix::with_missing(2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            fit(&LearnerConfig::default(), &x, &[0, 1], 0),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
        assert!(FeatureMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let bad = [
            LearnerConfig::DecisionTree(TreeParams { max_depth: 0, min_samples_leaf: 1 }),
            LearnerConfig::KNeighbors(KnnParams { k: 0 }),
            LearnerConfig::LogisticRegression(LogisticParams { learning_rate: 0.0, ..Default::default() }),
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn predict_is_pure() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let y: Vec<Label> = (0..40).map(|i| ((i % 7) + (i % 5) > 5) as Label).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        for cfg in all_configs() {
            let m = fit(&cfg, &x, &y, 0).unwrap();
            assert_eq!(predict(&m, &x).unwrap(), predict(&m, &x).unwrap());
        }
    }

    #[test]
    fn config_from_toml() {
        #[derive(Deserialize)]
        struct W {
            learner: LearnerConfig,
        }
        let w: W = toml::from_str("[learner]\nkind = \"decision_tree\"\nmax_depth = 3\n").unwrap();
        assert_eq!(
            w.learner,
            LearnerConfig::DecisionTree(TreeParams { max_depth: 3, min_samples_leaf: 5 })
        );
        let w: W = toml::from_str("[learner]\nkind = \"k_neighbors\"\nk = 1\n").unwrap();
        assert_eq!(w.learner, LearnerConfig::KNeighbors(KnnParams { k: 1 }));
    }
}

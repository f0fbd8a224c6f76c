//! Synthetic data following the group-conditional generative assumption.
//!
//! Features are standard normal in every group. Each group labels its rows
//! with its own noisy linear rule `y = 1[w_g . x - b_g + e > 0]`, where
//! `|w_g| = 1` and `e ~ N(0, noise_g^2)`. The privileged rule is
//! `w = e1, b = 0`; the disadvantaged normal is `e1` rotated towards `e2` by
//! `rotation` radians and offset by `boundary_shift`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::dataset::{ColumnKind, ColumnSpec, DatasetSchema, EncodedColumn, EncodedKind, LabeledDataset, ProtectedColumn};
use crate::learners::{FeatureMatrix, Label};
use crate::seed;
use crate::{Error, Result};

pub const GROUP_COLUMN: &str = "group";
pub const PRIV_VALUE: &str = "priv";
pub const DIS_VALUE: &str = "dis";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_priv: usize,
    pub n_dis: usize,
    pub dims: usize,
    pub boundary_shift: f64,
    pub rotation: f64,
    pub noise_priv: f64,
    pub noise_dis: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_priv: 3000,
            n_dis: 1000,
            dims: 4,
            boundary_shift: 0.5,
            rotation: std::f64::consts::FRAC_PI_2,
            noise_priv: 0.1,
            noise_dis: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_priv == 0 || self.n_dis == 0 {
            return Err(Error::InvalidParams("both groups need at least one row".into()));
        }
        if self.dims < 2 {
            return Err(Error::InvalidParams("synthetic data needs at least 2 dimensions".into()));
        }
        let finite = [self.boundary_shift, self.rotation, self.noise_priv, self.noise_dis];
        if finite.iter().any(|v| !v.is_finite()) || self.noise_priv < 0.0 || self.noise_dis < 0.0 {
            return Err(Error::InvalidParams("shift, rotation and noise must be finite, noise >= 0".into()));
        }
        Ok(())
    }

    fn rule(&self, is_priv: bool) -> ([f64; 2], f64, f64) {
        if is_priv {
            ([1.0, 0.0], 0.0, self.noise_priv)
        } else {
            ([self.rotation.cos(), self.rotation.sin()], self.boundary_shift, self.noise_dis)
        }
    }
}

/// Accuracy of the Bayes-optimal classifier within each group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BayesRates {
    pub priv_accuracy: f64,
    pub dis_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: LabeledDataset,
    pub bayes: BayesRates,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Bayes accuracy for the rule `1[z - offset + e > 0]` with `z ~ N(0,1)` and
/// `e ~ N(0, noise^2)`: the Bayes classifier predicts `1[z > offset]` and is
/// right with probability `Phi(|z - offset| / noise)` given `z`.
pub fn bayes_accuracy(offset: f64, noise: f64) -> f64 {
    if noise == 0.0 {
        return 1.0;
    }
    let g = |z: f64| std_normal_pdf(z) * std_normal_cdf((z - offset).abs() / noise);
    let lo = offset.min(-12.0);
    let hi = offset.max(12.0);
    // split at the kink of |z - offset|
    simpson(g, lo, offset, 8000) + simpson(g, offset, hi, 8000)
}

pub fn schema(dims: usize) -> DatasetSchema {
    DatasetSchema {
        target: "y".into(),
        positive_label: "1".into(),
        protected: vec![ProtectedColumn {
            name: GROUP_COLUMN.into(),
            privileged: PRIV_VALUE.into(),
        }],
        features: (1..=dims)
            .map(|i| ColumnSpec {
                name: format!("x{i}"),
                kind: ColumnKind::Numeric,
            })
            .collect(),
    }
}

/// Privileged rows first, then disadvantaged rows.
pub fn synth_ciid(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let n = cfg.n_priv + cfg.n_dis;
    let d = cfg.dims;
    let mut rng = seed::rng(cfg.seed);
    let mut data = Vec::with_capacity(n * (d + 1));
    let mut labels: Vec<Label> = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let is_priv = i < cfg.n_priv;
        let (w, offset, noise) = cfg.rule(is_priv);
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let e: f64 = rng.sample(StandardNormal);
        let score = w[0] * x[0] + w[1] * x[1] - offset + noise * e;
        data.extend_from_slice(&x);
        data.push(if is_priv { 1.0 } else { 0.0 });
        labels.push((score > 0.0) as Label);
        groups.push(if is_priv { PRIV_VALUE } else { DIS_VALUE }.to_string());
    }
    let schema = schema(d);
    let mut columns: Vec<EncodedColumn> = schema
        .features
        .iter()
        .map(|f| EncodedColumn {
            source: f.name.clone(),
            level: None,
            kind: EncodedKind::Numeric,
        })
        .collect();
    columns.push(EncodedColumn {
        source: GROUP_COLUMN.into(),
        level: None,
        kind: EncodedKind::ProtectedIndicator,
    });
    let dataset = LabeledDataset::from_parts(
        Arc::new(schema),
        Arc::new(columns),
        FeatureMatrix::new(n, d + 1, data)?,
        labels,
        BTreeMap::from([(GROUP_COLUMN.to_string(), groups)]),
    )?;
    let bayes = BayesRates {
        priv_accuracy: bayes_accuracy(0.0, cfg.noise_priv),
        dis_accuracy: bayes_accuracy(cfg.boundary_shift, cfg.noise_dis),
    };
    Ok(SynthData { dataset, bayes })
}

/// Predictions of the generating rules without noise, i.e. the Bayes
/// classifier for each row's own group.
pub fn bayes_predictions(cfg: &SynthConfig, dataset: &LabeledDataset) -> Result<Vec<Label>> {
    let groups = dataset.protected_values(GROUP_COLUMN)?;
    Ok(groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (w, offset, _) = cfg.rule(g == PRIV_VALUE);
            let x = dataset.features().row(i);
            (w[0] * x[0] + w[1] * x[1] - offset > 0.0) as Label
        })
        .collect())
}

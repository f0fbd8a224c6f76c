use serde::Serialize;

use super::{FeatureMatrix, KnnParams, Label, Standardizer};

/// Brute-force k-nearest-neighbour classifier on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnModel {
    k: usize,
    scaler: Standardizer,
    train: FeatureMatrix,
    labels: Vec<Label>,
}

impl KnnModel {
    pub fn fit(x: &FeatureMatrix, y: &[Label], p: &KnnParams) -> Self {
        let scaler = Standardizer::fit(x);
        Self {
            k: p.k,
            train: scaler.transform(x),
            scaler,
            labels: y.to_vec(),
        }
    }

    fn predict_row(&self, query: &[f64], dist: &mut Vec<(f64, usize)>) -> Label {
        dist.clear();
        dist.extend(self.train.iter_rows().enumerate().map(|(i, r)| {
            let d2 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (d2, i)
        }));
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let pos = dist[..k].iter().filter(|&&(_, i)| self.labels[i] == 1).count();
        // vote ties go to label 0
        (2 * pos > k) as Label
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<Label> {
        let mut q = Vec::with_capacity(x.cols());
        let mut dist = Vec::with_capacity(self.train.rows());
        x.iter_rows()
            .map(|r| {
                self.scaler.transform_row(r, &mut q);
                self.predict_row(&q, &mut dist)
            })
            .collect()
    }
}

//! L2-regularized logistic regression trained by full-batch gradient descent
//! on standardized features.

use serde::Serialize;

use super::{FeatureMatrix, Label, LogisticParams, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
    scaler: Standardizer,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean log-loss plus `l2 / 2 * |w|^2` and its gradient.
///
/// `params` holds the weights followed by the intercept; the intercept is
/// not penalized.
pub fn loss_and_gradient(params: &[f64], x: &FeatureMatrix, y: &[Label], l2: f64) -> (f64, Vec<f64>) {
    let d = x.cols();
    assert_eq!(params.len(), d + 1, "params must be weights + intercept");
    let (w, b) = params.split_at(d);
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.iter_rows().zip(y) {
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b[0];
        let t = f64::from(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, v) in grad.iter_mut().zip(w) {
        *g += l2 * v;
    }
    (loss, grad)
}

impl LogisticModel {
    pub fn fit(x: &FeatureMatrix, y: &[Label], p: &LogisticParams) -> Self {
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let mut params = vec![0.0; x.cols() + 1];
        for _ in 0..p.iterations {
            let (_, g) = loss_and_gradient(&params, &xs, y, p.l2);
            for (v, g) in params.iter_mut().zip(&g) {
                *v -= p.learning_rate * g;
            }
        }
        let bias = params.pop().unwrap_or(0.0);
        Self {
            weights: params,
            bias,
            scaler,
        }
    }

    /// Model with fixed coefficients acting on the given standardization.
    pub fn from_parts(weights: Vec<f64>, bias: f64, scaler: Standardizer) -> Self {
        Self { weights, bias, scaler }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn probability_row(&self, row: &[f64], buf: &mut Vec<f64>) -> f64 {
        self.scaler.transform_row(row, buf);
        let z = buf.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias;
        sigmoid(z)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<Label> {
        let mut buf = Vec::with_capacity(x.cols());
        x.iter_rows()
            .map(|r| (self.probability_row(r, &mut buf) > 0.5) as Label)
            .collect()
    }
}

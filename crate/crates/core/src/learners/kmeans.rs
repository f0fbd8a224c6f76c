//! Lloyd's k-means with k-means++ seeding and best-of-n restarts. Each
//! Lloyd fixpoint is polished with Hartigan single-point transfers, which
//! escape many of the local optima Lloyd stalls in on small inputs.

use rand::Rng;
use serde::Serialize;

use super::FeatureMatrix;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, max_iters: usize) -> Self {
        Self {
            k,
            max_iters,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances of the training data.
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
    /// Training assignment at termination.
    pub labels: Vec<usize>,
    pub converged: bool,
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Cluster sizes of the training assignment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.labels.iter().for_each(|&l| s[l] += 1);
        s
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest id.
fn nearest(centroids: &[Vec<f64>], row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, row);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Draw an index with probability proportional to `weights` (all >= 0,
/// positive total).
fn weighted_pick<R: Rng>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut t = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && t < w {
            return i;
        }
        t -= w;
    }
    // rounding landed past the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Greedy k-means++: each new centroid is the best of `2 + ln k` D²-weighted
/// candidates, judged by the resulting potential.
fn plus_plus_init<R: Rng>(x: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = x.rows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // every point coincides with a centroid; take unused rows in order
            chosen.push((0..n).find(|i| !chosen.contains(i)).unwrap_or(0));
            continue;
        }
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let c = weighted_pick(&d2, total, rng);
            let cand: Vec<f64> = x.iter_rows().zip(&d2).map(|(r, &d)| d.min(sq_dist(r, x.row(c)))).collect();
            let pot: f64 = cand.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| pot < *p) {
                best = Some((pot, cand, c));
            }
        }
        let (_, cand, c) = best.expect("at least one trial");
        chosen.push(c);
        d2 = cand;
    }
    chosen.into_iter().map(|i| x.row(i).to_vec()).collect()
}

fn lloyd(x: &FeatureMatrix, mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeansModel {
    let k = centroids.len();
    let d = x.cols();
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let mut next = Vec::with_capacity(x.rows());
        let mut inertia = 0.0;
        for r in x.iter_rows() {
            let (j, dist) = nearest(&centroids, r);
            next.push(j);
            inertia += dist;
        }
        history.push(inertia);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &j) in x.iter_rows().zip(&labels) {
            counts[j] += 1;
            sums[j].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // Re-seed empty clusters at the point farthest from its centroid
        // among clusters that can spare one.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = x
                .iter_rows()
                .enumerate()
                .filter(|&(i, _)| counts[labels[i]] > 1)
                .map(|(i, r)| (i, sq_dist(r, &centroids[labels[i]])))
                .fold(None, |acc: Option<(usize, f64)>, (i, dd)| match acc {
                    Some((_, best)) if best >= dd => acc,
                    _ => Some((i, dd)),
                });
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                counts[j] = 1;
                labels[i] = j;
                centroids[j] = x.row(i).to_vec();
            }
        }
    }
    let inertia = x
        .iter_rows()
        .zip(&labels)
        .map(|(r, &j)| sq_dist(r, &centroids[j]))
        .sum();
    KMeansModel {
        k,
        centroids,
        inertia,
        inertia_history: history,
        labels,
        converged,
    }
}

/// One sweep of Hartigan transfers: move a point to another cluster whenever
/// that strictly lowers the total within-cluster sum of squares. Returns
/// whether anything moved.
fn hartigan_sweep(x: &FeatureMatrix, labels: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    let mut moved = false;
    for (i, r) in x.iter_rows().enumerate() {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let na = counts[a] as f64;
        let removal = na / (na - 1.0) * sq_dist(r, &centroids[a]);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let cost = nb / (nb + 1.0) * sq_dist(r, &centroids[b]);
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((b, cost));
            }
        }
        let Some((b, cost)) = best else { continue };
        // relative margin keeps rounding from cycling a point back and forth
        if cost < removal * (1.0 - 1e-12) {
            let nb = counts[b] as f64;
            for (c, v) in centroids[a].iter_mut().zip(r) {
                *c = (*c * na - v) / (na - 1.0);
            }
            for (c, v) in centroids[b].iter_mut().zip(r) {
                *c = (*c * nb + v) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    moved
}

/// Alternate Hartigan sweeps and Lloyd until neither changes the partition,
/// so the result is still a fixpoint of nearest-centroid assignment.
fn refine(x: &FeatureMatrix, mut m: KMeansModel, max_iters: usize) -> KMeansModel {
    for _ in 0..max_iters.max(1) {
        let mut labels = m.labels.clone();
        let mut centroids = m.centroids.clone();
        if !hartigan_sweep(x, &mut labels, &mut centroids) {
            break;
        }
        let mut history = std::mem::take(&mut m.inertia_history);
        let next = lloyd(x, centroids, max_iters);
        history.extend(next.inertia_history.iter().copied());
        m = KMeansModel { inertia_history: history, ..next };
    }
    m
}

pub fn kmeans_fit_with(x: &FeatureMatrix, cfg: &KMeansConfig, seed: u64) -> Result<KMeansModel> {
    if cfg.k < 2 {
        return Err(Error::InvalidParams(format!("k-means needs k >= 2, got {}", cfg.k)));
    }
    if x.rows() < cfg.k {
        return Err(Error::TooFewSamples {
            needed: cfg.k,
            found: x.rows(),
        });
    }
    x.check_finite()?;
    let mut best: Option<KMeansModel> = None;
    for run in 0..cfg.n_init.max(1) {
        let mut rng = seed::child_rng(seed, run as u64);
        let init = plus_plus_init(x, cfg.k, &mut rng);
        let m = refine(x, lloyd(x, init, cfg.max_iters), cfg.max_iters);
        if best.as_ref().is_none_or(|b| m.inertia < b.inertia) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans_fit(x: &FeatureMatrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansModel> {
    kmeans_fit_with(x, &KMeansConfig::new(k, max_iters), seed)
}

/// Nearest-centroid assignment; equidistant points go to the lowest id.
pub fn kmeans_assign(model: &KMeansModel, x: &FeatureMatrix) -> Result<Vec<usize>> {
    if x.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.cols(),
        });
    }
    Ok(x.iter_rows().map(|r| nearest(&model.centroids, r).0).collect())
}

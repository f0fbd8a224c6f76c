//! Mean estimation in a two-component Gaussian mixture with an observed
//! component label.
//!
//! Each sample carries a scalar value and a flag telling which component
//! (privileged or disadvantaged) produced it. Five estimators are compared:
//! the pooled sample mean, the routed group-conditional mean, the average of
//! the two group means, and each group mean applied to everybody. For every
//! estimator [`analytic_tradeoffs`] gives the closed-form bias on each group
//! and the variance, and [`monte_carlo_tradeoffs`] / [`verify_table`] check
//! those expressions by simulation.
//!
//! Group counts are fixed per draw, which makes the bias expressions exact.
//! Bias is kept signed throughout; [`TradeoffEntry::magnitudes`] recovers the
//! absolute values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::seed;
use crate::{Error, Result};

/// Parameters of the two-component mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmmParams {
    pub mu_priv: f64,
    pub mu_dis: f64,
    pub sigma2_priv: f64,
    pub sigma2_dis: f64,
    pub n_priv: usize,
    pub n_dis: usize,
}

impl GmmParams {
    pub fn new(
        mu_priv: f64,
        mu_dis: f64,
        sigma2_priv: f64,
        sigma2_dis: f64,
        n_priv: usize,
        n_dis: usize,
    ) -> Result<Self> {
        let params = Self {
            mu_priv,
            mu_dis,
            sigma2_priv,
            sigma2_dis,
            n_priv,
            n_dis,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_priv.is_finite() && self.mu_dis.is_finite()) {
            return Err(Error::InvalidParams("means must be finite".into()));
        }
        if !(self.sigma2_priv >= 0.0 && self.sigma2_dis >= 0.0)
            || !(self.sigma2_priv.is_finite() && self.sigma2_dis.is_finite())
        {
            return Err(Error::InvalidParams(
                "variances must be finite and non-negative".into(),
            ));
        }
        if self.n_priv == 0 || self.n_dis == 0 {
            return Err(Error::InvalidParams(
                "both groups need at least one sample".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n_priv + self.n_dis
    }

    pub fn p_priv(&self) -> f64 {
        self.n_priv as f64 / self.n() as f64
    }

    pub fn p_dis(&self) -> f64 {
        self.n_dis as f64 / self.n() as f64
    }

    /// `|mu_priv - mu_dis|`
    pub fn delta_mu(&self) -> f64 {
        (self.mu_priv - self.mu_dis).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSample {
    pub value: f64,
    pub is_priv: bool,
}

impl ScalarSample {
    pub fn new(value: f64, is_priv: bool) -> Self {
        Self { value, is_priv }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanEstimatorKind {
    /// Pooled sample mean over both groups.
    Overall,
    /// Each sample gets the mean of its own group.
    Ciid,
    /// Unweighted average of the two group means.
    Ensemble,
    /// Mean of the disadvantaged group, applied to everyone.
    DisOnly,
    /// Mean of the privileged group, applied to everyone.
    PrivOnly,
}

impl MeanEstimatorKind {
    pub const ALL: [MeanEstimatorKind; 5] = [
        MeanEstimatorKind::Overall,
        MeanEstimatorKind::Ciid,
        MeanEstimatorKind::Ensemble,
        MeanEstimatorKind::DisOnly,
        MeanEstimatorKind::PrivOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeanEstimatorKind::Overall => "overall",
            MeanEstimatorKind::Ciid => "ciid",
            MeanEstimatorKind::Ensemble => "ensemble",
            MeanEstimatorKind::DisOnly => "dis_only",
            MeanEstimatorKind::PrivOnly => "priv_only",
        }
    }
}

impl fmt::Display for MeanEstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeanEstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeanEstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown estimator `{s}`")))
    }
}

/// Value an estimator assigns to a privileged and to a disadvantaged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub value_for_priv: f64,
    pub value_for_dis: f64,
}

/// Signed bias on each group plus the estimator variance seen by each group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffEntry {
    pub bias_on_priv: f64,
    pub bias_on_dis: f64,
    pub variance_on_priv: f64,
    pub variance_on_dis: f64,
}

impl TradeoffEntry {
    /// Same entry with both biases replaced by their absolute values.
    pub fn magnitudes(&self) -> Self {
        Self {
            bias_on_priv: self.bias_on_priv.abs(),
            bias_on_dis: self.bias_on_dis.abs(),
            ..*self
        }
    }

    pub fn cell(&self, cell: TradeoffCell) -> f64 {
        match cell {
            TradeoffCell::BiasOnPriv => self.bias_on_priv,
            TradeoffCell::BiasOnDis => self.bias_on_dis,
            TradeoffCell::VarianceOnPriv => self.variance_on_priv,
            TradeoffCell::VarianceOnDis => self.variance_on_dis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeoffCell {
    BiasOnPriv,
    BiasOnDis,
    VarianceOnPriv,
    VarianceOnDis,
}

impl TradeoffCell {
    pub const ALL: [TradeoffCell; 4] = [
        TradeoffCell::BiasOnPriv,
        TradeoffCell::BiasOnDis,
        TradeoffCell::VarianceOnPriv,
        TradeoffCell::VarianceOnDis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TradeoffCell::BiasOnPriv => "bias_on_priv",
            TradeoffCell::BiasOnDis => "bias_on_dis",
            TradeoffCell::VarianceOnPriv => "variance_on_priv",
            TradeoffCell::VarianceOnDis => "variance_on_dis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(replicates: usize, seed: u64) -> Result<Self> {
        if replicates < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 replicates, got {replicates}"
            )));
        }
        Ok(Self { replicates, seed })
    }
}

/// Draws `n_priv` privileged samples followed by `n_dis` disadvantaged ones.
pub fn sample_dataset(params: &GmmParams, seed: u64) -> Vec<ScalarSample> {
    let mut out = Vec::with_capacity(params.n());
    fill_dataset(params, &mut seed::rng(seed), &mut out);
    out
}

fn fill_dataset<R: Rng>(params: &GmmParams, rng: &mut R, out: &mut Vec<ScalarSample>) {
    out.clear();
    let sd_priv = params.sigma2_priv.sqrt();
    let sd_dis = params.sigma2_dis.sqrt();
    for _ in 0..params.n_priv {
        let z: f64 = rng.sample(StandardNormal);
        out.push(ScalarSample::new(params.mu_priv + sd_priv * z, true));
    }
    for _ in 0..params.n_dis {
        let z: f64 = rng.sample(StandardNormal);
        out.push(ScalarSample::new(params.mu_dis + sd_dis * z, false));
    }
}

/// Per-group sums; every estimator is a function of these.
#[derive(Debug, Clone, Copy, Default)]
struct GroupSums {
    sum_priv: f64,
    n_priv: usize,
    sum_dis: f64,
    n_dis: usize,
}

impl GroupSums {
    fn of(samples: &[ScalarSample]) -> Self {
        let mut s = Self::default();
        for x in samples {
            if x.is_priv {
                s.sum_priv += x.value;
                s.n_priv += 1;
            } else {
                s.sum_dis += x.value;
                s.n_dis += 1;
            }
        }
        s
    }

    fn priv_mean(&self) -> Result<f64> {
        if self.n_priv == 0 {
            return Err(Error::EmptyGroup("privileged"));
        }
        Ok(self.sum_priv / self.n_priv as f64)
    }

    fn dis_mean(&self) -> Result<f64> {
        if self.n_dis == 0 {
            return Err(Error::EmptyGroup("disadvantaged"));
        }
        Ok(self.sum_dis / self.n_dis as f64)
    }

    fn overall_mean(&self) -> Result<f64> {
        let n = self.n_priv + self.n_dis;
        if n == 0 {
            return Err(Error::EmptyGroup("overall"));
        }
        Ok((self.sum_priv + self.sum_dis) / n as f64)
    }

    fn estimate(&self, kind: MeanEstimatorKind) -> Result<MeanEstimate> {
        let both = |v: f64| MeanEstimate {
            value_for_priv: v,
            value_for_dis: v,
        };
        Ok(match kind {
            MeanEstimatorKind::Overall => both(self.overall_mean()?),
            MeanEstimatorKind::PrivOnly => both(self.priv_mean()?),
            MeanEstimatorKind::DisOnly => both(self.dis_mean()?),
            MeanEstimatorKind::Ciid => MeanEstimate {
                value_for_priv: self.priv_mean()?,
                value_for_dis: self.dis_mean()?,
            },
            MeanEstimatorKind::Ensemble => both(0.5 * (self.priv_mean()? + self.dis_mean()?)),
        })
    }
}

pub fn estimate_mean(kind: MeanEstimatorKind, samples: &[ScalarSample]) -> Result<MeanEstimate> {
    GroupSums::of(samples).estimate(kind)
}

/// Closed-form bias and variance of every estimator.
///
/// Bias is signed (`E[estimate] - true mean` of the group); variance is the
/// variance of the value the estimator hands to samples of that group.
pub fn analytic_tradeoffs(params: &GmmParams) -> BTreeMap<MeanEstimatorKind, TradeoffEntry> {
    let d = params.mu_dis - params.mu_priv;
    let (p_priv, p_dis) = (params.p_priv(), params.p_dis());
    let var_priv_mean = params.sigma2_priv / params.n_priv as f64;
    let var_dis_mean = params.sigma2_dis / params.n_dis as f64;
    let var_overall =
        (p_priv * params.sigma2_priv + p_dis * params.sigma2_dis) / params.n() as f64;
    let var_ensemble = 0.25 * (var_priv_mean + var_dis_mean);

    let single = |bias_on_priv: f64, bias_on_dis: f64, variance: f64| TradeoffEntry {
        bias_on_priv,
        bias_on_dis,
        variance_on_priv: variance,
        variance_on_dis: variance,
    };

    MeanEstimatorKind::ALL
        .into_iter()
        .map(|kind| {
            let entry = match kind {
                MeanEstimatorKind::Overall => single(p_dis * d, -p_priv * d, var_overall),
                MeanEstimatorKind::Ensemble => single(0.5 * d, -0.5 * d, var_ensemble),
                MeanEstimatorKind::DisOnly => single(d, 0.0, var_dis_mean),
                MeanEstimatorKind::PrivOnly => single(0.0, -d, var_priv_mean),
                MeanEstimatorKind::Ciid => TradeoffEntry {
                    bias_on_priv: 0.0,
                    bias_on_dis: 0.0,
                    variance_on_priv: var_priv_mean,
                    variance_on_dis: var_dis_mean,
                },
            };
            (kind, entry)
        })
        .collect()
}

/// Streaming central moments up to fourth order, mergeable in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.merge(&Moments {
            n: 1.0,
            mean: x,
            ..Default::default()
        });
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n, other.n);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d_n = delta / n;
        let d2 = delta * delta;

        let mean = self.mean + d_n * nb;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2);
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3);

        *self = Moments {
            n,
            mean,
            m2,
            m3,
            m4,
        };
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        self.m2 / (self.n - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Large-sample standard error of [`Moments::variance`].
    pub fn se_variance(&self) -> f64 {
        if self.n < 4.0 {
            return f64::INFINITY;
        }
        let n = self.n;
        let s2 = self.variance();
        let mu4 = self.m4 / n;
        let v = (mu4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n;
        v.max(0.0).sqrt()
    }
}

/// Result of a Monte Carlo run for one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McTradeoffs {
    pub empirical: TradeoffEntry,
    pub se: TradeoffEntry,
}

// Distinct per-replicate statistics: overall, ensemble, priv mean, dis mean.
const N_SERIES: usize = 4;
const CHUNK: usize = 1024;

fn series_of(kind: MeanEstimatorKind) -> (usize, usize) {
    match kind {
        MeanEstimatorKind::Overall => (0, 0),
        MeanEstimatorKind::Ensemble => (1, 1),
        MeanEstimatorKind::PrivOnly => (2, 2),
        MeanEstimatorKind::DisOnly => (3, 3),
        MeanEstimatorKind::Ciid => (2, 3),
    }
}

fn replicate_moments(params: &GmmParams, mc: &McConfig) -> Result<[Moments; N_SERIES]> {
    params.validate()?;
    if mc.replicates < 2 {
        return Err(Error::InvalidParams("need at least 2 replicates".into()));
    }
    let n_chunks = mc.replicates.div_ceil(CHUNK);
    let chunks: Vec<Result<[Moments; N_SERIES]>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [Moments::default(); N_SERIES];
            let mut buf = Vec::with_capacity(params.n());
            let end = ((c + 1) * CHUNK).min(mc.replicates);
            for r in c * CHUNK..end {
                fill_dataset(params, &mut seed::child_rng(mc.seed, r as u64), &mut buf);
                let sums = GroupSums::of(&buf);
                let overall = sums.estimate(MeanEstimatorKind::Overall)?.value_for_priv;
                let ensemble = sums.estimate(MeanEstimatorKind::Ensemble)?.value_for_priv;
                acc[0].push(overall);
                acc[1].push(ensemble);
                acc[2].push(sums.priv_mean()?);
                acc[3].push(sums.dis_mean()?);
            }
            Ok(acc)
        })
        .collect();

    // Fixed left-to-right reduction keeps the result independent of the
    // thread schedule.
    let mut total = [Moments::default(); N_SERIES];
    for chunk in chunks {
        let chunk = chunk?;
        for (t, c) in total.iter_mut().zip(chunk.iter()) {
            t.merge(c);
        }
    }
    Ok(total)
}

fn tradeoffs_from(
    params: &GmmParams,
    moments: &[Moments; N_SERIES],
    kind: MeanEstimatorKind,
) -> McTradeoffs {
    let (sp, sd) = series_of(kind);
    let (mp, md) = (&moments[sp], &moments[sd]);
    McTradeoffs {
        empirical: TradeoffEntry {
            bias_on_priv: mp.mean() - params.mu_priv,
            bias_on_dis: md.mean() - params.mu_dis,
            variance_on_priv: mp.variance(),
            variance_on_dis: md.variance(),
        },
        se: TradeoffEntry {
            bias_on_priv: mp.se_mean(),
            bias_on_dis: md.se_mean(),
            variance_on_priv: mp.se_variance(),
            variance_on_dis: md.se_variance(),
        },
    }
}

/// Empirical bias and variance of one estimator over `mc.replicates`
/// independent datasets. Replicate `r` uses the stream `(mc.seed, r)`.
pub fn monte_carlo_tradeoffs(
    params: &GmmParams,
    kind: MeanEstimatorKind,
    mc: &McConfig,
) -> Result<McTradeoffs> {
    let moments = replicate_moments(params, mc)?;
    Ok(tradeoffs_from(params, &moments, kind))
}

/// All five estimators evaluated on the same replicate datasets.
pub fn monte_carlo_all(
    params: &GmmParams,
    mc: &McConfig,
) -> Result<BTreeMap<MeanEstimatorKind, McTradeoffs>> {
    let moments = replicate_moments(params, mc)?;
    Ok(MeanEstimatorKind::ALL
        .into_iter()
        .map(|k| (k, tradeoffs_from(params, &moments, k)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCheck {
    pub estimator: MeanEstimatorKind,
    pub cell: TradeoffCell,
    pub analytic: f64,
    pub empirical: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub params: GmmParams,
    pub mc: McConfig,
    pub abs_tol: f64,
    pub se_mult: f64,
    pub cells: Vec<CellCheck>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| !c.pass)
    }

    /// CSV with header `estimator,cell,analytic,empirical,se,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,cell,analytic,empirical,se,pass\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.estimator.name(),
                c.cell.name(),
                c.analytic,
                c.empirical,
                c.se,
                c.pass
            ));
        }
        out
    }
}

/// Compares every analytic cell with its Monte Carlo counterpart. A cell
/// passes iff `|empirical - analytic| <= max(abs_tol, se_mult * se)`.
pub fn verify_table(
    params: &GmmParams,
    mc: &McConfig,
    abs_tol: f64,
    se_mult: f64,
) -> Result<VerificationReport> {
    if !(se_mult > 0.0) || !(abs_tol >= 0.0) {
        return Err(Error::InvalidParams(
            "se_mult must be positive and abs_tol non-negative".into(),
        ));
    }
    let analytic = analytic_tradeoffs(params);
    let empirical = monte_carlo_all(params, mc)?;
    let mut cells = Vec::with_capacity(MeanEstimatorKind::ALL.len() * TradeoffCell::ALL.len());
    for kind in MeanEstimatorKind::ALL {
        for cell in TradeoffCell::ALL {
            let a = analytic[&kind].cell(cell);
            let e = empirical[&kind].empirical.cell(cell);
            let se = empirical[&kind].se.cell(cell);
            let tol = abs_tol.max(se_mult * se);
            cells.push(CellCheck {
                estimator: kind,
                cell,
                analytic: a,
                empirical: e,
                se,
                pass: (e - a).abs() <= tol,
            });
        }
    }
    Ok(VerificationReport {
        params: *params,
        mc: *mc,
        abs_tol,
        se_mult,
        cells,
    })
}

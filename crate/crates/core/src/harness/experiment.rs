//! Repeated train/test experiments over a roster of conditional models.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{load_csv, DatasetSchema, LabeledDataset};
use super::split::{split, Split, SplitConfig};
use super::synth::{synth_ciid, BayesRates, SynthConfig};
use crate::conditioning::{enumerate_models, predict_routed, train_scheme, ClusterRouter, GroupSpec, TrainingScheme};
use crate::learners::{self, LearnerConfig};
use crate::metrics::{demographic_composition, group_breakdown, subgroup_roster, GroupedMetricsReport, Metric, RunRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Relative paths resolve against the config file's directory.
    Csv { path: PathBuf },
    Synthetic(SynthConfig),
}

fn default_runs() -> usize {
    18
}

fn default_split() -> [u32; 3] {
    [80, 10, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DataSource,
    /// Required for CSV sources; synthetic data brings its own.
    #[serde(default)]
    pub schema: Option<DatasetSchema>,
    /// Each entry is a list of protected columns forming one group spec.
    #[serde(default)]
    pub specs: Vec<Vec<String>>,
    /// Cluster counts; each adds `Group1..Groupk` and a routed cluster model.
    #[serde(default)]
    pub clusters: Vec<usize>,
    /// Restricts the roster to these model names.
    #[serde(default)]
    pub models: Option<Vec<String>>,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Candidates scored on the validation split of the first run; the best
    /// one replaces `learner`.
    #[serde(default)]
    pub grid: Vec<LearnerConfig>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split: [u32; 3],
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let DataSource::Csv { path: p } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let Some(k) = self.clusters.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!("cluster count must be at least 2, got {k}")));
        }
        SplitConfig::new(self.split, 0)?;
        self.learner.validate()?;
        self.grid.iter().try_for_each(LearnerConfig::validate)?;
        match (&self.dataset, &self.schema) {
            (DataSource::Csv { .. }, None) => Err(Error::Config("csv datasets need a [schema] table".into())),
            (DataSource::Synthetic(s), _) => s.validate(),
            _ => Ok(()),
        }
    }

    /// Split used by run `run` (1-based): seed is the base seed plus `run`.
    pub fn split_config(&self, run: usize) -> SplitConfig {
        SplitConfig {
            ratios: self.split,
            seed: self.seed.wrapping_add(run as u64),
        }
    }
}

#[derive(Deserialize)]
struct SchemaFile {
    #[serde(flatten)]
    schema: DatasetSchema,
    #[serde(default)]
    specs: Vec<Vec<String>>,
}

/// Each protected column on its own, then all of them together when there
/// are several.
pub fn default_specs(schema: &DatasetSchema) -> Vec<Vec<String>> {
    let cols: Vec<String> = schema.protected.iter().map(|p| p.name.clone()).collect();
    let mut specs: Vec<Vec<String>> = cols.iter().map(|c| vec![c.clone()]).collect();
    if cols.len() > 1 {
        specs.push(cols);
    }
    specs
}

/// Reads a schema and its group specs from either a full experiment config
/// or a bare schema table with an optional `specs` key. Missing specs fall
/// back to [`default_specs`].
pub fn schema_from_toml(text: &str) -> Result<(DatasetSchema, Vec<Vec<String>>)> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let (schema, specs) = if table.contains_key("schema") {
        let cfg = ExperimentConfig::from_toml_str(text)?;
        let schema = cfg
            .schema
            .ok_or_else(|| Error::Config("missing [schema] table".into()))?;
        (schema, cfg.specs)
    } else {
        let f: SchemaFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        (f.schema, f.specs)
    };
    schema.validate()?;
    let specs = if specs.is_empty() { default_specs(&schema) } else { specs };
    Ok((schema, specs))
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: LabeledDataset,
    pub dropped_missing_target: usize,
    pub bayes: Option<BayesRates>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LoadedData> {
    match &cfg.dataset {
        DataSource::Csv { path } => {
            let schema = cfg
                .schema
                .as_ref()
                .ok_or_else(|| Error::Config("csv datasets need a [schema] table".into()))?;
            let load = load_csv(path, schema)?;
            Ok(LoadedData {
                dataset: load.dataset,
                dropped_missing_target: load.dropped_missing_target,
                bayes: None,
            })
        }
        DataSource::Synthetic(s) => {
            let data = synth_ciid(s)?;
            Ok(LoadedData {
                dataset: data.dataset,
                dropped_missing_target: 0,
                bayes: Some(data.bayes),
            })
        }
    }
}

/// Identifies a split so that runs can be checked to share one test set
/// across every model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitFingerprint {
    pub run: usize,
    pub split_seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub validation_rows: usize,
    /// FNV-1a over the test row indices.
    pub test_hash: u64,
}

fn fnv1a(idx: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in idx {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Why a model produced no metrics in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedModel {
    pub run: usize,
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompositionRow {
    /// `Full` for the whole dataset, or `Group<j>` for clusters of the first
    /// run's train split.
    pub population: String,
    pub size: usize,
    pub shares: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub rows: usize,
    pub dropped_missing_target: usize,
    pub bayes: Option<BayesRates>,
    pub learner: LearnerConfig,
    pub report: GroupedMetricsReport,
    pub records: Vec<RunRecord>,
    pub splits: Vec<SplitFingerprint>,
    pub skipped: Vec<SkippedModel>,
    pub composition: Vec<CompositionRow>,
}

/// Fits every grid candidate as an overall model on `train` and returns the
/// one with the best validation accuracy; ties keep the earlier candidate.
pub fn grid_search(train: &LabeledDataset, validation: &LabeledDataset, grid: &[LearnerConfig]) -> Result<LearnerConfig> {
    let mut best: Option<(f64, &LearnerConfig)> = None;
    for cand in grid {
        let model = train_scheme(train, &TrainingScheme::overall(), cand, 0)?;
        let acc = learners::accuracy(validation.labels(), &predict_routed(&model, validation)?);
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, cand));
        }
    }
    best.map(|(_, c)| c.clone())
        .ok_or_else(|| Error::Config("grid search needs at least one candidate".into()))
}

/// Splits, then fills missing numeric cells of every part with the training
/// medians.
pub fn imputed_split(dataset: &LabeledDataset, cfg: &SplitConfig) -> Result<Split> {
    let mut s = split(dataset, cfg)?;
    let fills = s.train.missing_medians();
    s.train.impute(&fills);
    s.test.impute(&fills);
    s.validation.impute(&fills);
    Ok(s)
}

fn is_undefined_cell(e: &Error) -> bool {
    matches!(
        e,
        Error::EmptyTargetGroup(_) | Error::TooFewSamples { .. } | Error::UnseenGroup(_)
    )
}

struct RunResult {
    records: Vec<RunRecord>,
    fingerprint: SplitFingerprint,
    skipped: Vec<SkippedModel>,
}

fn one_run(
    run: usize,
    dataset: &LabeledDataset,
    cfg: &ExperimentConfig,
    roster: &[TrainingScheme],
    specs: &[GroupSpec],
    learner: &LearnerConfig,
) -> Result<RunResult> {
    let split_cfg = cfg.split_config(run);
    let s = imputed_split(dataset, &split_cfg)?;
    let fingerprint = SplitFingerprint {
        run,
        split_seed: split_cfg.seed,
        train_rows: s.train.len(),
        test_rows: s.test.len(),
        validation_rows: s.validation.len(),
        test_hash: fnv1a(&s.test_idx),
    };
    let subgroups = subgroup_roster(specs);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for scheme in roster {
        let outcome = train_scheme(&s.train, scheme, learner, split_cfg.seed)
            .and_then(|m| predict_routed(&m, &s.test))
            .and_then(|p| group_breakdown(&s.test, &p, specs));
        match outcome {
            Ok(b) => {
                for sm in b.0 {
                    for metric in Metric::ALL {
                        records.push(RunRecord {
                            run,
                            model: scheme.name.clone(),
                            subgroup: sm.name.clone(),
                            metric,
                            value: sm.metrics.get(metric),
                        });
                    }
                }
            }
            Err(e) if is_undefined_cell(&e) => {
                skipped.push(SkippedModel {
                    run,
                    model: scheme.name.clone(),
                    reason: e.to_string(),
                });
                for sg in &subgroups {
                    for metric in Metric::ALL {
                        records.push(RunRecord {
                            run,
                            model: scheme.name.clone(),
                            subgroup: sg.name.clone(),
                            metric,
                            value: None,
                        });
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunResult {
        records,
        fingerprint,
        skipped,
    })
}

/// Filtered model roster for a config over `dataset`.
pub fn roster_for(cfg: &ExperimentConfig, dataset: &LabeledDataset) -> Result<(Vec<GroupSpec>, Vec<TrainingScheme>)> {
    let specs = cfg
        .specs
        .iter()
        .map(|cols| GroupSpec::from_schema(dataset.schema(), cols))
        .collect::<Result<Vec<_>>>()?;
    let mut roster = enumerate_models(&specs, &cfg.clusters);
    if let Some(keep) = &cfg.models {
        if let Some(unknown) = keep.iter().find(|k| !roster.iter().any(|r| &r.name == *k)) {
            return Err(Error::Config(format!("model `{unknown}` is not in the roster")));
        }
        roster.retain(|r| keep.contains(&r.name));
    }
    Ok((specs, roster))
}

fn composition(
    dataset: &LabeledDataset,
    cfg: &ExperimentConfig,
    specs: &[GroupSpec],
) -> Result<Vec<CompositionRow>> {
    let mut rows = vec![CompositionRow {
        population: "Full".into(),
        size: dataset.len(),
        shares: demographic_composition(dataset, specs)?,
    }];
    if cfg.clusters.is_empty() || specs.is_empty() {
        return Ok(rows);
    }
    let s = imputed_split(dataset, &cfg.split_config(1))?;
    for &k in &cfg.clusters {
        let router = ClusterRouter::fit(&s.train, k, cfg.split_config(1).seed)?;
        let assigned = router.assign(&s.train)?;
        for j in 0..k {
            let idx: Vec<usize> = (0..assigned.len()).filter(|&i| assigned[i] == j).collect();
            let part = s.train.subset(&idx);
            let prefix = if cfg.clusters.len() > 1 { format!("k{k}_") } else { String::new() };
            rows.push(CompositionRow {
                population: format!("{prefix}Group{}", j + 1),
                size: part.len(),
                shares: if part.is_empty() { Vec::new() } else { demographic_composition(&part, specs)? },
            });
        }
    }
    Ok(rows)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let loaded = load_dataset(cfg)?;
    run_experiment_on(cfg, loaded)
}

/// Runs are independent and execute in parallel; results are gathered in
/// run order so the outcome does not depend on scheduling.
pub fn run_experiment_on(cfg: &ExperimentConfig, loaded: LoadedData) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dataset = &loaded.dataset;
    let (specs, roster) = roster_for(cfg, dataset)?;

    let learner = if cfg.grid.is_empty() {
        cfg.learner.clone()
    } else {
        let s = imputed_split(dataset, &cfg.split_config(1))?;
        grid_search(&s.train, &s.validation, &cfg.grid)?
    };

    let results = (1..=cfg.runs)
        .into_par_iter()
        .map(|run| one_run(run, dataset, cfg, &roster, &specs, &learner))
        .collect::<Result<Vec<_>>>()?;

    let models: Vec<String> = roster.iter().map(|r| r.name.clone()).collect();
    let subgroups: Vec<String> = subgroup_roster(&specs).into_iter().map(|s| s.name).collect();
    let mut records = Vec::new();
    let mut splits = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        records.extend(r.records);
        splits.push(r.fingerprint);
        skipped.extend(r.skipped);
    }
    let report = GroupedMetricsReport::aggregate(cfg.runs, &models, &subgroups, &records);
    Ok(ExperimentOutcome {
        name: cfg.name.clone(),
        rows: dataset.len(),
        dropped_missing_target: loaded.dropped_missing_target,
        bayes: loaded.bayes,
        learner,
        report,
        records,
        splits,
        skipped,
        composition: composition(dataset, cfg, &specs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::GROUP_COLUMN;
    use crate::learners::{KnnParams, TreeParams};

    fn cfg(runs: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            dataset: DataSource::Synthetic(SynthConfig {
                n_priv: 200,
                n_dis: 100,
                ..SynthConfig::default()
            }),
            schema: None,
            specs: vec![vec![GROUP_COLUMN.into()]],
            clusters: vec![2],
            models: None,
            learner: LearnerConfig::default(),
            grid: vec![],
            runs,
            seed: 11,
            split: [80, 10, 10],
        }
    }

    #[test]
    fn parses_toml() {
        let text = r#"
name = "demo"
specs = [["group"]]
clusters = [3]
runs = 4
seed = 2

[dataset]
source = "synthetic"
n_priv = 100
n_dis = 50

[learner]
kind = "logistic_regression"
iterations = 50
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.runs, 4);
        assert_eq!(c.split, [80, 10, 10]);
        assert!(matches!(c.dataset, DataSource::Synthetic(s) if s.n_dis == 50 && s.dims == 4));
        assert_eq!(c.learner.kind(), learners::LearnerKind::LogisticRegression);
        assert!(ExperimentConfig::from_toml_str("name = 1").is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{text}\nbogus = 1")).is_err());
    }

    #[test]
    fn schema_file_forms() {
        let bare = r#"
target = "y"
positive_label = "1"
protected = [{ name = "sex", privileged = "F" }, { name = "race", privileged = "W" }]
features = [{ name = "age", kind = "numeric" }]
"#;
        let (schema, specs) = schema_from_toml(bare).unwrap();
        assert_eq!(schema.protected.len(), 2);
        assert_eq!(specs, vec![vec!["sex".to_string()], vec!["race".into()], vec!["sex".into(), "race".into()]]);
        let with_specs = format!("specs = [[\"race\"]]\n{bare}");
        assert_eq!(schema_from_toml(&with_specs).unwrap().1, vec![vec!["race".to_string()]]);
        assert!(schema_from_toml("target = 3").is_err());
    }

    #[test]
    fn csv_needs_schema() {
        let mut c = cfg(1);
        c.dataset = DataSource::Csv { path: "x.csv".into() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn runs_share_test_split_and_are_deterministic() {
        let c = cfg(3);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.splits.len(), 3);
        assert_eq!(a.splits[0].split_seed, 12);
        assert_eq!(a.report.models.len(), 1 + 2 + 1 + 2 + 1);
        assert_eq!(a.report.subgroups, ["Full", "group_priv", "group_dis"]);
        let per_run = a.report.models.len() * 3 * Metric::ALL.len();
        assert_eq!(a.records.len(), 3 * per_run);
        assert!(a.report.cells.iter().filter(|c| c.metric == Metric::Accuracy).all(|c| c.defined_runs == 3));
    }

    #[test]
    fn unknown_model_filter() {
        let mut c = cfg(1);
        c.models = Some(vec!["nope".into()]);
        assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
        c.models = Some(vec!["overall".into(), "group_ciid".into()]);
        assert_eq!(run_experiment(&c).unwrap().report.models, ["overall", "group_ciid"]);
    }

    #[test]
    fn grid_prefers_first_on_ties() {
        let c = cfg(1);
        let loaded = load_dataset(&c).unwrap();
        let s = imputed_split(&loaded.dataset, &c.split_config(1)).unwrap();
        let same = LearnerConfig::DecisionTree(TreeParams::default());
        let grid = [same.clone(), same.clone()];
        assert_eq!(grid_search(&s.train, &s.validation, &grid).unwrap(), same);
        let knn = LearnerConfig::KNeighbors(KnnParams { k: 1 });
        let picked = grid_search(&s.train, &s.validation, &[knn.clone(), same.clone()]).unwrap();
        assert!(picked == knn || picked == same);
        assert!(grid_search(&s.train, &s.validation, &[]).is_err());
    }

    #[test]
    fn composition_rows() {
        let out = run_experiment(&cfg(1)).unwrap();
        assert_eq!(out.composition.len(), 3);
        assert_eq!(out.composition[0].size, 300);
        let cluster_total: usize = out.composition[1..].iter().map(|r| r.size).sum();
        assert_eq!(cluster_total, 240);
    }
}

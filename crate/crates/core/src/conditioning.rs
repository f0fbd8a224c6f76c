//! Group- and cluster-conditioned composite predictors.
//!
//! A [`GroupSpec`] turns one or more protected columns into a binary
//! privileged/disadvantaged flag per column; the tuple of flags is the
//! row's [`GroupId`]. A [`TrainingScheme`] says which rows each learner sees
//! and how test rows are routed to learners:
//!
//! * `Overall`: one learner on every row, protected indicators included.
//! * `PerGroup`: one learner per group id, each test row scored by the
//!   learner of its own group.
//! * `SingleGroup`: the learner of one group applied to everybody.
//! * `PerCluster`: k-means on standardized non-protected features, one
//!   learner per cluster, test rows routed by nearest centroid.
//! * `SingleCluster`: the learner of one cluster applied to everybody.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::harness::dataset::{DatasetSchema, LabeledDataset};
use crate::learners::{self, FeatureMatrix, FittedLearner, KMeansConfig, KMeansModel, Label, LearnerConfig, Standardizer};
use crate::{Error, Result};

pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Priv,
    Dis,
}

impl Membership {
    pub fn name(self) -> &'static str {
        match self {
            Membership::Priv => "priv",
            Membership::Dis => "dis",
        }
    }
}

/// One membership flag per column of the owning [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupId(pub Vec<Membership>);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|m| m.name()).collect();
        f.write_str(&parts.join("_"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSpec {
    pub columns: Vec<String>,
    pub privileged_values: Vec<String>,
}

impl GroupSpec {
    pub fn new(columns: Vec<String>, privileged_values: Vec<String>) -> Result<Self> {
        if columns.is_empty() || columns.len() != privileged_values.len() {
            return Err(Error::Config(
                "group spec needs one privileged value per column and at least one column".into(),
            ));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::Config(format!("column `{c}` repeated in group spec")));
            }
        }
        Ok(Self {
            columns,
            privileged_values,
        })
    }

    /// Spec over `columns` with privileged values taken from the schema.
    pub fn from_schema(schema: &DatasetSchema, columns: &[String]) -> Result<Self> {
        let values = columns
            .iter()
            .map(|c| {
                schema
                    .protected_column(c)
                    .map(|p| p.privileged.clone())
                    .ok_or_else(|| Error::UnknownColumn(c.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(columns.to_vec(), values)
    }

    /// Columns joined with `_`, e.g. `sex_race`.
    pub fn name(&self) -> String {
        self.columns.join("_")
    }

    /// e.g. `sex_race_dis_priv`
    pub fn subgroup_name(&self, id: &GroupId) -> String {
        format!("{}_{}", self.name(), id)
    }

    /// All `2^c` ids, privileged-first in lexicographic order.
    pub fn group_ids(&self) -> Vec<GroupId> {
        let c = self.columns.len();
        (0..1usize << c)
            .map(|bits| {
                GroupId(
                    (0..c)
                        .map(|j| {
                            if bits >> (c - 1 - j) & 1 == 0 {
                                Membership::Priv
                            } else {
                                Membership::Dis
                            }
                        })
                        .collect(),
                )
            })
            .collect()
    }

    pub fn group_of_rows(&self, dataset: &LabeledDataset) -> Result<Vec<GroupId>> {
        let cols = self
            .columns
            .iter()
            .map(|c| dataset.protected_values(c))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..dataset.len())
            .map(|i| {
                GroupId(
                    cols.iter()
                        .zip(&self.privileged_values)
                        .map(|(v, p)| {
                            if v[i].trim() == p.trim() {
                                Membership::Priv
                            } else {
                                Membership::Dis
                            }
                        })
                        .collect(),
                )
            })
            .collect())
    }
}

/// Splits rows by group id. Every id of the spec is present in the result;
/// groups without rows map to empty datasets. Row order is preserved.
pub fn partition_by_group(dataset: &LabeledDataset, spec: &GroupSpec) -> Result<BTreeMap<GroupId, LabeledDataset>> {
    let ids = spec.group_of_rows(dataset)?;
    let mut rows: BTreeMap<GroupId, Vec<usize>> = spec.group_ids().into_iter().map(|g| (g, Vec::new())).collect();
    for (i, g) in ids.into_iter().enumerate() {
        rows.get_mut(&g).expect("all ids enumerated").push(i);
    }
    Ok(rows.into_iter().map(|(g, idx)| (g, dataset.subset(&idx))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SchemeKind {
    Overall,
    PerGroup(GroupSpec),
    SingleGroup(GroupSpec, GroupId),
    PerCluster { k: usize },
    /// Zero-based cluster index after ordering clusters by decreasing size.
    SingleCluster { k: usize, cluster: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingScheme {
    pub name: String,
    pub kind: SchemeKind,
    pub include_protected_features: bool,
}

impl TrainingScheme {
    pub fn overall() -> Self {
        Self {
            name: "overall".into(),
            kind: SchemeKind::Overall,
            include_protected_features: true,
        }
    }

    pub fn per_group(spec: GroupSpec) -> Self {
        Self {
            name: format!("{}_ciid", spec.name()),
            kind: SchemeKind::PerGroup(spec),
            include_protected_features: false,
        }
    }

    pub fn single_group(spec: GroupSpec, id: GroupId) -> Result<Self> {
        if id.0.len() != spec.columns.len() {
            return Err(Error::Config(format!(
                "group id `{id}` does not fit spec `{}`",
                spec.name()
            )));
        }
        Ok(Self {
            name: spec.subgroup_name(&id),
            kind: SchemeKind::SingleGroup(spec, id),
            include_protected_features: false,
        })
    }

    pub fn per_cluster(k: usize) -> Self {
        Self {
            name: format!("cluster{k}_ciid"),
            kind: SchemeKind::PerCluster { k },
            include_protected_features: false,
        }
    }

    pub fn single_cluster(k: usize, cluster: usize) -> Result<Self> {
        if cluster >= k {
            return Err(Error::Config(format!("cluster {cluster} out of range for k={k}")));
        }
        Ok(Self {
            name: format!("Group{}", cluster + 1),
            kind: SchemeKind::SingleCluster { k, cluster },
            include_protected_features: false,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_protected_features(mut self, include: bool) -> Self {
        self.include_protected_features = include;
        self
    }
}

/// Model roster: the overall model, every single-group model of every spec,
/// the routed model of every spec, then for each `k` the single-cluster
/// models `Group1..Groupk` followed by the routed cluster model.
pub fn enumerate_models(specs: &[GroupSpec], ks: &[usize]) -> Vec<TrainingScheme> {
    let mut out = vec![TrainingScheme::overall()];
    for spec in specs {
        for id in spec.group_ids() {
            out.push(TrainingScheme::single_group(spec.clone(), id).expect("id from spec"));
        }
    }
    out.extend(specs.iter().cloned().map(TrainingScheme::per_group));
    for &k in ks {
        for j in 0..k {
            let s = TrainingScheme::single_cluster(k, j).expect("j < k");
            let s = if ks.len() > 1 {
                let name = format!("k{k}_{}", s.name);
                s.with_name(name)
            } else {
                s
            };
            out.push(s);
        }
        out.push(TrainingScheme::per_cluster(k));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Route {
    All,
    Group(GroupId),
    Cluster(usize),
}

/// k-means over standardized non-protected features. Cluster ids are
/// ordered by decreasing training size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRouter {
    pub columns: Vec<usize>,
    pub scaler: Standardizer,
    pub kmeans: KMeansModel,
}

impl ClusterRouter {
    pub fn fit(train: &LabeledDataset, k: usize, seed: u64) -> Result<Self> {
        if train.len() < k {
            return Err(Error::TooFewSamples {
                needed: k,
                found: train.len(),
            });
        }
        let columns = train.non_protected_columns();
        let raw = train.features().select_cols(&columns);
        let scaler = Standardizer::fit(&raw);
        let x = scaler.transform(&raw);
        let km = learners::kmeans_fit_with(&x, &KMeansConfig::new(k, KMEANS_MAX_ITERS), seed)?;

        let sizes = km.sizes();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&j| (std::cmp::Reverse(sizes[j]), j));
        let mut rank = vec![0; k];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        let kmeans = KMeansModel {
            centroids: order.iter().map(|&j| km.centroids[j].clone()).collect(),
            labels: km.labels.iter().map(|&l| rank[l]).collect(),
            ..km
        };
        Ok(Self {
            columns,
            scaler,
            kmeans,
        })
    }

    pub fn assign(&self, dataset: &LabeledDataset) -> Result<Vec<usize>> {
        let x = self.scaler.transform(&dataset.features().select_cols(&self.columns));
        learners::kmeans_assign(&self.kmeans, &x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalModel {
    pub scheme: TrainingScheme,
    pub learners: BTreeMap<Route, FittedLearner>,
    pub router: Option<ClusterRouter>,
    /// Encoded dataset columns fed to the learners.
    pub feature_columns: Vec<usize>,
    /// Encoded width of the training data.
    pub n_columns: usize,
}

fn fit_on(
    learner: &LearnerConfig,
    data: &LabeledDataset,
    cols: &[usize],
    seed: u64,
    label: impl FnOnce() -> String,
) -> Result<FittedLearner> {
    if data.is_empty() {
        return Err(Error::EmptyTargetGroup(label()));
    }
    learners::fit(learner, &data.features().select_cols(cols), data.labels(), seed)
}

fn rows_where<T: PartialEq>(keys: &[T], key: &T) -> Vec<usize> {
    keys.iter().enumerate().filter(|(_, k)| *k == key).map(|(i, _)| i).collect()
}

pub fn train_scheme(
    train: &LabeledDataset,
    scheme: &TrainingScheme,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<ConditionalModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cols = if scheme.include_protected_features {
        train.all_columns()
    } else {
        train.non_protected_columns()
    };
    let mut fitted = BTreeMap::new();
    let mut router = None;
    match &scheme.kind {
        SchemeKind::Overall => {
            fitted.insert(Route::All, fit_on(learner, train, &cols, seed, || "overall".into())?);
        }
        SchemeKind::PerGroup(spec) => {
            for (id, part) in partition_by_group(train, spec)? {
                let m = fit_on(learner, &part, &cols, seed, || spec.subgroup_name(&id))?;
                fitted.insert(Route::Group(id), m);
            }
        }
        SchemeKind::SingleGroup(spec, id) => {
            let parts = partition_by_group(train, spec)?;
            let part = parts
                .get(id)
                .ok_or_else(|| Error::Config(format!("group id `{id}` does not fit spec `{}`", spec.name())))?;
            fitted.insert(Route::All, fit_on(learner, part, &cols, seed, || spec.subgroup_name(id))?);
        }
        SchemeKind::PerCluster { k } => {
            let r = ClusterRouter::fit(train, *k, seed)?;
            let assigned = r.assign(train)?;
            for j in 0..*k {
                let part = train.subset(&rows_where(&assigned, &j));
                let m = fit_on(learner, &part, &cols, seed, || format!("Group{}", j + 1))?;
                fitted.insert(Route::Cluster(j), m);
            }
            router = Some(r);
        }
        SchemeKind::SingleCluster { k, cluster } => {
            let r = ClusterRouter::fit(train, *k, seed)?;
            let assigned = r.assign(train)?;
            let part = train.subset(&rows_where(&assigned, cluster));
            fitted.insert(
                Route::All,
                fit_on(learner, &part, &cols, seed, || format!("Group{}", cluster + 1))?,
            );
        }
    }
    Ok(ConditionalModel {
        scheme: scheme.clone(),
        learners: fitted,
        router,
        feature_columns: cols,
        n_columns: train.columns().len(),
    })
}

fn predict_grouped<'a, K: Ord + Clone>(
    x: &FeatureMatrix,
    keys: &[K],
    learner_for: impl Fn(&K) -> Result<&'a FittedLearner>,
) -> Result<Vec<Label>> {
    let mut buckets: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        buckets.entry(k.clone()).or_default().push(i);
    }
    let mut out = vec![0; x.rows()];
    for (k, idx) in buckets {
        let preds = learners::predict(learner_for(&k)?, &x.select_rows(&idx))?;
        for (i, p) in idx.into_iter().zip(preds) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Scores each test row with the learner its routing rule selects.
pub fn predict_routed(model: &ConditionalModel, test: &LabeledDataset) -> Result<Vec<Label>> {
    if test.columns().len() != model.n_columns {
        return Err(Error::DimensionMismatch {
            expected: model.n_columns,
            found: test.columns().len(),
        });
    }
    let x = test.features().select_cols(&model.feature_columns);
    match &model.scheme.kind {
        SchemeKind::Overall | SchemeKind::SingleGroup(..) | SchemeKind::SingleCluster { .. } => {
            learners::predict(&model.learners[&Route::All], &x)
        }
        SchemeKind::PerGroup(spec) => {
            let ids = spec.group_of_rows(test)?;
            predict_grouped(&x, &ids, |id| {
                model
                    .learners
                    .get(&Route::Group(id.clone()))
                    .ok_or_else(|| Error::UnseenGroup(spec.subgroup_name(id)))
            })
        }
        SchemeKind::PerCluster { .. } => {
            let router = model
                .router
                .as_ref()
                .ok_or_else(|| Error::Config("cluster model without router".into()))?;
            let ids = router.assign(test)?;
            predict_grouped(&x, &ids, |j| {
                model
                    .learners
                    .get(&Route::Cluster(*j))
                    .ok_or_else(|| Error::UnseenGroup(format!("Group{}", j + 1)))
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::read_csv_str;
    use crate::harness::dataset::{ColumnKind, ColumnSpec, ProtectedColumn};
    use crate::harness::synth::{synth_ciid, SynthConfig, GROUP_COLUMN, PRIV_VALUE};
    use crate::learners::{FittedModel, LearnerKind, TreeParams};

    fn two_attr_schema() -> DatasetSchema {
        DatasetSchema {
            target: "y".into(),
            positive_label: "1".into(),
            protected: vec![
                ProtectedColumn { name: "sex".into(), privileged: "F".into() },
                ProtectedColumn { name: "race".into(), privileged: "W".into() },
            ],
            features: vec![ColumnSpec { name: "x".into(), kind: ColumnKind::Numeric }],
        }
    }

    fn small() -> LabeledDataset {
        let csv = "x,sex,race,y\n\
                   1,F,W,1\n2,M,W,0\n3,F,B,1\n4,M,B,0\n5,M,B,1\n\
                   6,F,W,0\n7,M,W,1\n8,M,B,0\n9,F,B,1\n10,M,W,0\n";
        read_csv_str(&two_attr_schema(), csv).unwrap().dataset
    }

    fn spec(cols: &[&str]) -> GroupSpec {
        let cols: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
        GroupSpec::from_schema(&two_attr_schema(), &cols).unwrap()
    }

    fn constant(l: Label, n_features: usize) -> FittedLearner {
        FittedLearner { kind: LearnerKind::DecisionTree, n_features, model: FittedModel::Constant(l) }
    }

    #[test]
    fn group_ids_and_names() {
        let s = spec(&["sex", "race"]);
        let names: Vec<String> = s.group_ids().iter().map(|g| s.subgroup_name(g)).collect();
        assert_eq!(
            names,
            ["sex_race_priv_priv", "sex_race_priv_dis", "sex_race_dis_priv", "sex_race_dis_dis"]
        );
        assert!(GroupSpec::from_schema(&two_attr_schema(), &["age".to_string()]).is_err());
    }

    #[test]
    fn partition_law_and_order() {
        let d = small();
        let parts = partition_by_group(&d, &spec(&["sex", "race"])).unwrap();
        assert_eq!(parts.len(), 4);
        assert_eq!(parts.values().map(|p| p.len()).sum::<usize>(), d.len());
        let ww = &parts[&GroupId(vec![Membership::Priv, Membership::Priv])];
        let xs: Vec<f64> = ww.features().iter_rows().map(|r| r[0]).collect();
        assert_eq!(xs, vec![1.0, 6.0]);
    }

    #[test]
    fn partition_all_privileged() {
        let d = small();
        let women: Vec<usize> = (0..d.len()).filter(|&i| d.protected_values("sex").unwrap()[i] == "F").collect();
        let d = d.subset(&women);
        let parts = partition_by_group(&d, &spec(&["sex"])).unwrap();
        assert_eq!(parts[&GroupId(vec![Membership::Priv])].len(), d.len());
        assert!(parts[&GroupId(vec![Membership::Dis])].is_empty());
    }

    #[test]
    fn unknown_column() {
        let d = small();
        let s = GroupSpec::new(vec!["age".into()], vec!["1".into()]).unwrap();
        assert!(matches!(partition_by_group(&d, &s), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn roster_counts() {
        let s = [spec(&["sex"]), spec(&["race"]), spec(&["sex", "race"])];
        let roster = enumerate_models(&s, &[3]);
        // overall + singles (2 + 2 + 4) + routed per spec (3) + Group1..3 + routed clusters
        assert_eq!(roster.len(), 1 + 2 + 2 + 4 + 3 + 3 + 1);
        let names: Vec<&str> = roster.iter().map(|r| r.name.as_str()).collect();
        for n in ["overall", "sex_priv", "race_dis", "sex_race_dis_dis", "sex_race_ciid", "Group3", "cluster3_ciid"] {
            assert!(names.contains(&n), "{n}");
        }
        assert_eq!(enumerate_models(&[], &[]), vec![TrainingScheme::overall()]);
        let only_sex: Vec<String> = enumerate_models(&[spec(&["sex"])], &[])
            .into_iter()
            .filter(|r| matches!(r.kind, SchemeKind::SingleGroup(..)))
            .map(|r| r.name)
            .collect();
        assert_eq!(only_sex, ["sex_priv", "sex_dis"]);
    }

    #[test]
    fn overall_has_one_learner_with_protected_features() {
        let d = small();
        let m = train_scheme(&d, &TrainingScheme::overall(), &LearnerConfig::default(), 0).unwrap();
        assert_eq!(m.learners.len(), 1);
        assert_eq!(m.feature_columns, vec![0, 1, 2]);
        let g = train_scheme(&d, &TrainingScheme::per_group(spec(&["sex", "race"])), &LearnerConfig::default(), 0).unwrap();
        assert_eq!(g.learners.len(), 4);
        assert_eq!(g.feature_columns, vec![0]);
    }

    #[test]
    fn routing_hand_traced() {
        let d = small();
        let s = spec(&["sex"]);
        let mut learners = BTreeMap::new();
        learners.insert(Route::Group(GroupId(vec![Membership::Priv])), constant(0, 1));
        learners.insert(Route::Group(GroupId(vec![Membership::Dis])), constant(1, 1));
        let model = ConditionalModel {
            scheme: TrainingScheme::per_group(s),
            learners,
            router: None,
            feature_columns: vec![0],
            n_columns: 3,
        };
        let pred = predict_routed(&model, &d).unwrap();
        let dis: Vec<Label> = d.protected_values("sex").unwrap().iter().map(|v| (v != "F") as Label).collect();
        assert_eq!(pred, dis);
    }

    #[test]
    fn unseen_group_is_an_error() {
        let d = small();
        let s = spec(&["sex"]);
        let mut learners = BTreeMap::new();
        learners.insert(Route::Group(GroupId(vec![Membership::Priv])), constant(1, 1));
        let model = ConditionalModel {
            scheme: TrainingScheme::per_group(s),
            learners,
            router: None,
            feature_columns: vec![0],
            n_columns: 3,
        };
        assert!(matches!(predict_routed(&model, &d), Err(Error::UnseenGroup(g)) if g == "sex_dis"));
    }

    #[test]
    fn empty_target_group() {
        let d = small();
        let women: Vec<usize> = (0..d.len()).filter(|&i| d.protected_values("sex").unwrap()[i] == "F").collect();
        let d = d.subset(&women);
        let err = train_scheme(&d, &TrainingScheme::per_group(spec(&["sex"])), &LearnerConfig::default(), 0);
        assert!(matches!(err, Err(Error::EmptyTargetGroup(g)) if g == "sex_dis"));
        let single = TrainingScheme::single_group(spec(&["sex"]), GroupId(vec![Membership::Dis])).unwrap();
        assert!(matches!(train_scheme(&d, &single, &LearnerConfig::default(), 0), Err(Error::EmptyTargetGroup(_))));
    }

    fn synth(seed: u64) -> LabeledDataset {
        synth_ciid(&SynthConfig { n_priv: 300, n_dis: 150, seed, ..SynthConfig::default() }).unwrap().dataset
    }

    fn group_spec() -> GroupSpec {
        GroupSpec::new(vec![GROUP_COLUMN.into()], vec![PRIV_VALUE.into()]).unwrap()
    }

    #[test]
    fn router_consistency_with_single_group_models() {
        let train = synth(1);
        let test = synth(2);
        let s = group_spec();
        let learner = LearnerConfig::DecisionTree(TreeParams::default());
        let routed = train_scheme(&train, &TrainingScheme::per_group(s.clone()), &learner, 5).unwrap();
        let pred = predict_routed(&routed, &test).unwrap();
        let ids = s.group_of_rows(&test).unwrap();
        for id in s.group_ids() {
            let single = train_scheme(&train, &TrainingScheme::single_group(s.clone(), id.clone()).unwrap(), &learner, 5).unwrap();
            let single_pred = predict_routed(&single, &test).unwrap();
            for i in 0..test.len() {
                if ids[i] == id {
                    assert_eq!(pred[i], single_pred[i]);
                }
            }
        }
    }

    #[test]
    fn dis_only_test_set_matches_dis_model() {
        let train = synth(1);
        let test = synth(3);
        let dis_rows: Vec<usize> = (0..test.len())
            .filter(|&i| test.protected_values(GROUP_COLUMN).unwrap()[i] != PRIV_VALUE)
            .collect();
        let test = test.subset(&dis_rows);
        let s = group_spec();
        let learner = LearnerConfig::default();
        let routed = train_scheme(&train, &TrainingScheme::per_group(s.clone()), &learner, 0).unwrap();
        let dis = TrainingScheme::single_group(s, GroupId(vec![Membership::Dis])).unwrap();
        let dis = train_scheme(&train, &dis, &learner, 0).unwrap();
        assert_eq!(predict_routed(&routed, &test).unwrap(), predict_routed(&dis, &test).unwrap());
    }

    #[test]
    fn cluster_scheme_is_blind() {
        let train = synth(4);
        let test = synth(5);
        let m = train_scheme(&train, &TrainingScheme::per_cluster(3), &LearnerConfig::default(), 9).unwrap();
        assert_eq!(m.learners.len(), 3);
        let router = m.router.as_ref().unwrap();
        let sizes = router.kmeans.sizes();
        assert_eq!(sizes.iter().sum::<usize>(), train.len());
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));

        // flip every protected value, keep other features
        let flipped_groups: Vec<String> = test
            .protected_values(GROUP_COLUMN)
            .unwrap()
            .iter()
            .map(|g| if g == PRIV_VALUE { "dis".to_string() } else { PRIV_VALUE.to_string() })
            .collect();
        let mut feats = test.features().clone();
        let ind = test
            .columns()
            .iter()
            .position(|c| c.kind == crate::harness::dataset::EncodedKind::ProtectedIndicator)
            .unwrap();
        for i in 0..feats.rows() {
            let v = feats.get(i, ind);
            feats.set(i, ind, 1.0 - v);
        }
        let flipped = LabeledDataset::from_parts(
            std::sync::Arc::new(test.schema().clone()),
            std::sync::Arc::new(test.columns().to_vec()),
            feats,
            test.labels().to_vec(),
            BTreeMap::from([(GROUP_COLUMN.to_string(), flipped_groups)]),
        )
        .unwrap();
        assert_eq!(router.assign(&test).unwrap(), router.assign(&flipped).unwrap());
        assert_eq!(predict_routed(&m, &test).unwrap(), predict_routed(&m, &flipped).unwrap());
    }

    #[test]
    fn deterministic_training() {
        let train = synth(6);
        let test = synth(7);
        for scheme in enumerate_models(&[group_spec()], &[3]) {
            let a = train_scheme(&train, &scheme, &LearnerConfig::default(), 1).unwrap();
            let b = train_scheme(&train, &scheme, &LearnerConfig::default(), 1).unwrap();
            assert_eq!(a, b);
            assert_eq!(predict_routed(&a, &test).unwrap(), predict_routed(&b, &test).unwrap());
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let train = synth(6);
        let m = train_scheme(&train, &TrainingScheme::overall(), &LearnerConfig::default(), 1).unwrap();
        assert!(matches!(predict_routed(&m, &small()), Err(Error::DimensionMismatch { .. })));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ciid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ciid"))
        .args(args)
        .env_remove("CIID_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, runs: usize) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    fs::write(
        &p,
        format!(
            r#"
name = "small"
specs = [["group"]]
clusters = [2]
runs = {runs}
seed = 5

[dataset]
source = "synthetic"
n_priv = 150
n_dis = 80
seed = 1

[learner]
kind = "decision_tree"
max_depth = 4
"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn gmm_verify_defaults_pass() {
    let out = ciid(&["gmm-verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("estimator,cell,analytic,empirical,se,pass"));
    assert_eq!(lines.count(), 20);
}

#[test]
fn gmm_verify_rejects_bad_flags() {
    assert_eq!(ciid(&["gmm-verify", "--replicates", "1"]).status.code(), Some(2));
    assert_eq!(ciid(&["gmm-verify", "--sigma2-priv", "-1"]).status.code(), Some(2));
    assert_eq!(ciid(&["gmm-verify", "--bogus"]).status.code(), Some(2));
}

#[test]
fn gmm_verify_failure_exit_code() {
    // with a vanishing tolerance some cells must fall outside
    let out = ciid(&["gmm-verify", "--replicates", "200", "--abs-tol", "0", "--se-mult", "1e-9"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gmm_verify_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    let out = ciid(&["gmm-verify", "--replicates", "5000", "--output", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(fs::read_to_string(p).unwrap().starts_with("estimator,"));
}

fn read_bundle(dir: &Path) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for name in ["report.json", "metrics.csv", "summary.csv", "composition.csv"] {
        m.insert(name.to_string(), fs::read_to_string(dir.join(name)).unwrap());
    }
    for e in fs::read_dir(dir.join("plots")).unwrap() {
        let e = e.unwrap();
        m.insert(format!("plots/{}", e.file_name().to_string_lossy()), fs::read_to_string(e.path()).unwrap());
    }
    m
}

#[test]
fn run_writes_complete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    let out_dir = dir.path().join("out");
    let out = ciid(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let b = read_bundle(&out_dir);
    assert_eq!(b.keys().filter(|k| k.starts_with("plots/")).count(), 7);

    // runs x models x subgroups x metrics, undefined cells included
    let models = 1 + 2 + 1 + 2 + 1;
    let rows = b["metrics.csv"].lines().count() - 1;
    assert_eq!(rows, 3 * models * 3 * 7);
    assert!(b["metrics.csv"].starts_with("run,model,subgroup,metric,value\n"));
    assert!(b["composition.csv"].starts_with("population,size,group_priv,group_dis\nFull,230,"));

    let json: serde_json::Value = serde_json::from_str(&b["report.json"]).unwrap();
    assert_eq!(json["base_seed"], 5);
    assert_eq!(json["split_seeds"], serde_json::json!([6, 7, 8]));
    assert_eq!(json["config"]["name"], "small");
}

/// Every bar in every chart must be recomputable from the per-run log.
#[test]
fn plot_values_derive_from_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 4);
    let out_dir = dir.path().join("out");
    assert_eq!(
        ciid(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]).status.code(),
        Some(0)
    );
    let mut log: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(out_dir.join("metrics.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let e = log.entry((rec[1].to_string(), rec[2].to_string(), rec[3].to_string())).or_default();
        if &rec[4] != "undefined" {
            e.push(rec[4].parse().unwrap());
        }
    }
    let attr = |tag: &str, key: &str| -> String {
        let start = tag.find(&format!("{key}=\"")).unwrap() + key.len() + 2;
        tag[start..].split('"').next().unwrap().to_string()
    };
    let mut bars = 0;
    for e in fs::read_dir(out_dir.join("plots")).unwrap() {
        let path = e.unwrap().path();
        let metric = path.file_stem().unwrap().to_string_lossy().to_string();
        let svg = fs::read_to_string(&path).unwrap();
        for tag in svg.split('<').filter(|t| t.starts_with("rect class=\"bar\"")) {
            bars += 1;
            let key = (attr(tag, "data-model"), attr(tag, "data-subgroup"), metric.clone());
            let vals = &log[&key];
            let mean: f64 = attr(tag, "data-mean").parse().unwrap();
            let k = vals.len() as f64;
            let mu = vals.iter().sum::<f64>() / k;
            assert_eq!(mean, mu, "{key:?}");
            let sd: f64 = attr(tag, "data-std").parse().unwrap();
            let s = (vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (k - 1.0)).sqrt();
            assert!((sd - s).abs() <= 1e-12 * s.max(1.0), "{key:?}: {sd} vs {s}");
            assert_eq!(attr(tag, "data-defined-runs"), vals.len().to_string());
        }
    }
    assert!(bars > 0);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert_eq!(ciid(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]).status.code(), Some(0));
    }
    assert_eq!(read_bundle(&a), read_bundle(&b));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let env_out = dir.path().join("env-out");
    let status = Command::new(env!("CARGO_BIN_EXE_ciid"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("CIID_OUT_DIR", &env_out)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(env_out.join("metrics.csv").exists());
}

#[test]
fn config_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nruns = 0\n[dataset]\nsource = \"synthetic\"\n").unwrap();
    let out = ciid(&["run", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let syntax = dir.path().join("syntax.toml");
    fs::write(&syntax, "name = \"x\"\n[dataset\n").unwrap();
    let out = ciid(&["run", "--config", syntax.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let missing = ciid(&["run", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(missing.status.code(), Some(2));

    let csv_cfg = dir.path().join("csv.toml");
    fs::write(
        &csv_cfg,
        "name = \"x\"\n[dataset]\nsource = \"csv\"\npath = \"data.csv\"\n[schema]\ntarget = \"y\"\npositive_label = \"1\"\nfeatures = [{ name = \"a\", kind = \"numeric\" }]\n",
    )
    .unwrap();
    fs::write(dir.path().join("data.csv"), "a,y\n1,1\nfoo,0\n").unwrap();
    let out = ciid(&["run", "--config", csv_cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.csv") && err.contains("foo"), "{err}");
}

#[test]
fn compose_single_group_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x,sex,y\n1,F,0\n2,F,1\n3,F,1\n").unwrap();
    let schema = dir.path().join("s.toml");
    fs::write(
        &schema,
        "target = \"y\"\npositive_label = \"1\"\nprotected = [{ name = \"sex\", privileged = \"F\" }]\nfeatures = [{ name = \"x\", kind = \"numeric\" }]\n",
    )
    .unwrap();
    let out = ciid(&["compose", "--data", data.to_str().unwrap(), "--schema", schema.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "population,size,sex_priv,sex_dis\nFull,3,1.000,0.000\n"
    );
}

#[test]
fn compose_accepts_experiment_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "a,s,r,y\n1,F,W,0\n2,M,W,1\n3,M,B,1\n4,M,B,0\n").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        r#"
name = "c"
specs = [["s", "r"]]
[dataset]
source = "csv"
path = "d.csv"
[schema]
target = "y"
positive_label = "1"
protected = [{ name = "s", privileged = "F" }, { name = "r", privileged = "W" }]
features = [{ name = "a", kind = "numeric" }]
"#,
    )
    .unwrap();
    let out = ciid(&["compose", "--data", data.to_str().unwrap(), "--schema", cfg.to_str().unwrap()]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "population,size,s_r_priv_priv,s_r_priv_dis,s_r_dis_priv,s_r_dis_dis,s_priv,s_dis,r_priv,r_dis\n\
         Full,4,0.250,0.000,0.250,0.500,0.250,0.750,0.500,0.500\n"
    );
}

#[test]
fn synth_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let out = ciid(&["synth", "--n-priv", "30", "--n-dis", "20", "--seed", "3", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bayes accuracy"));
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("x1,x2,x3,x4,group,y\n"), "{}", text.lines().next().unwrap());
    let again = ciid(&["synth", "--n-priv", "30", "--n-dis", "20", "--seed", "3"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
    assert_eq!(ciid(&["synth", "--n-dis", "0"]).status.code(), Some(2));
}

#[test]
fn help_documents_exit_codes() {
    let out = ciid(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    for sub in ["gmm-verify", "run", "compose", "synth"] {
        assert!(text.contains(sub));
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ciid_cli::report;
use ciid_core::gmm::{verify_table, GmmParams, McConfig};
use ciid_core::harness::experiment::{
    load_dataset, run_experiment_on, schema_from_toml, CompositionRow, DataSource, ExperimentConfig,
};
use ciid_core::harness::synth::{synth_ciid, SynthConfig};
use ciid_core::harness::load_csv;
use ciid_core::conditioning::GroupSpec;
use ciid_core::metrics::demographic_composition;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or unexpected failure
  2  usage or configuration error
  3  data error (unreadable or malformed dataset)
  4  verification failure (gmm-verify)";

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "ciid", version, about = "Group-conditioned estimation and classification experiments", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic and Monte Carlo bias/variance of the mean estimators.
    GmmVerify(GmmArgs),
    /// Run a classification experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the report bundle.
        #[arg(long, env = "CIID_OUT_DIR", default_value = "ciid-out")]
        out: PathBuf,
    },
    /// Print the demographic composition of a CSV dataset.
    Compose {
        #[arg(long)]
        data: PathBuf,
        /// Schema TOML: a bare schema table (optionally with `specs`) or a
        /// full experiment config.
        #[arg(long)]
        schema: PathBuf,
    },
    /// Write a synthetic two-group dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GmmArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu_priv: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    mu_dis: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma2_priv: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma2_dis: f64,
    #[arg(long, default_value_t = 140)]
    n_priv: usize,
    #[arg(long, default_value_t = 60)]
    n_dis: usize,
    #[arg(long, default_value_t = 200_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    abs_tol: f64,
    #[arg(long, default_value_t = 4.0)]
    se_mult: f64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthConfig::default().n_priv)]
    n_priv: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_dis)]
    n_dis: usize,
    #[arg(long, default_value_t = SynthConfig::default().dims)]
    dims: usize,
    #[arg(long, default_value_t = SynthConfig::default().boundary_shift, allow_negative_numbers = true)]
    boundary_shift: f64,
    /// Angle in radians between the two groups' decision normals.
    #[arg(long, default_value_t = SynthConfig::default().rotation, allow_negative_numbers = true)]
    rotation: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise_priv)]
    noise_priv: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise_dis)]
    noise_dis: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error tagged with the process exit code it should produce.
#[derive(Debug)]
struct Tagged(u8);

impl std::fmt::Display for Tagged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            EXIT_CONFIG => f.write_str("configuration error"),
            EXIT_DATA => f.write_str("data error"),
            _ => f.write_str("failure"),
        }
    }
}

fn classify(e: &ciid_core::Error) -> u8 {
    use ciid_core::Error as E;
    match e {
        E::Csv(_)
        | E::Io(_)
        | E::MissingColumn(_)
        | E::UnparsableCell { .. }
        | E::EmptyDataset
        | E::TooFewRows { .. }
        | E::NonFinite { .. } => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(t) = err.downcast_ref::<Tagged>() {
        return t.0;
    }
    if let Some(e) = err.downcast_ref::<ciid_core::Error>() {
        return classify(e);
    }
    EXIT_IO
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .context("writing to stdout"),
    }
}

fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .context(Tagged(EXIT_CONFIG))
}

fn gmm_verify(a: &GmmArgs) -> Result<u8> {
    let params = GmmParams::new(a.mu_priv, a.mu_dis, a.sigma2_priv, a.sigma2_dis, a.n_priv, a.n_dis)?;
    let mc = McConfig::new(a.replicates, a.seed)?;
    let report = verify_table(&params, &mc, a.abs_tol, a.se_mult)?;
    write_out(a.output.as_deref(), &report.to_csv())?;
    let failures = report.failures().count();
    if failures == 0 {
        Ok(0)
    } else {
        eprintln!("{failures} cell(s) outside tolerance");
        Ok(EXIT_VERIFY)
    }
}

fn run(config: &Path, out: &Path) -> Result<u8> {
    let text = read_config_text(config)?;
    let mut cfg =
        ExperimentConfig::from_toml_str(&text).with_context(|| format!("in config {}", config.display()))?;
    if let DataSource::Csv { path } = &mut cfg.dataset {
        if path.is_relative() {
            if let Some(dir) = config.parent() {
                *path = dir.join(&*path);
            }
        }
    }
    cfg.validate().with_context(|| format!("in config {}", config.display()))?;
    let source = match &cfg.dataset {
        DataSource::Csv { path } => path.display().to_string(),
        DataSource::Synthetic(_) => "synthetic data".into(),
    };
    let loaded = load_dataset(&cfg).with_context(|| format!("loading {source}"))?;
    let outcome = run_experiment_on(&cfg, loaded).with_context(|| format!("running {}", config.display()))?;
    let files = report::write_bundle(out, &cfg, &outcome).with_context(|| format!("writing to {}", out.display()))?;
    for s in &outcome.skipped {
        eprintln!("run {}: {} skipped ({})", s.run, s.model, s.reason);
    }
    eprintln!(
        "{} rows, {} runs, {} models; wrote {} files to {}",
        outcome.rows,
        cfg.runs,
        outcome.report.models.len(),
        files.len(),
        out.display()
    );
    Ok(0)
}

fn compose(data: &Path, schema_path: &Path) -> Result<u8> {
    let text = read_config_text(schema_path)?;
    let (schema, specs) = schema_from_toml(&text).with_context(|| format!("in schema {}", schema_path.display()))?;
    let load = load_csv(data, &schema).with_context(|| format!("loading {}", data.display()))?;
    let specs = specs
        .iter()
        .map(|cols| GroupSpec::from_schema(&schema, cols))
        .collect::<ciid_core::Result<Vec<_>>>()?;
    let row = CompositionRow {
        population: "Full".into(),
        size: load.dataset.len(),
        shares: demographic_composition(&load.dataset, &specs)?,
    };
    write_out(None, &report::composition_csv(&[row], Some(3))?)?;
    if load.dropped_missing_target > 0 {
        eprintln!("dropped {} rows with a missing target", load.dropped_missing_target);
    }
    Ok(0)
}

fn synth(a: &SynthArgs) -> Result<u8> {
    let cfg = SynthConfig {
        n_priv: a.n_priv,
        n_dis: a.n_dis,
        dims: a.dims,
        boundary_shift: a.boundary_shift,
        rotation: a.rotation,
        noise_priv: a.noise_priv,
        noise_dis: a.noise_dis,
        seed: a.seed,
    };
    let data = synth_ciid(&cfg)?;
    write_out(a.out.as_deref(), &data.dataset.to_csv()?)?;
    eprintln!(
        "bayes accuracy: priv {:.4}, dis {:.4}",
        data.bayes.priv_accuracy, data.bayes.dis_accuracy
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GmmVerify(a) => gmm_verify(a),
        Command::Run { config, out } => run(config, out),
        Command::Compose { data, schema } => compose(data, schema),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

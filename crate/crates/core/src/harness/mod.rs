//! Data loading, splitting, synthetic generation and experiment driver.

pub mod dataset;
pub mod experiment;
pub mod split;
pub mod synth;

pub use dataset::{load_csv, read_csv_str, ColumnKind, ColumnSpec, DatasetSchema, LabeledDataset, ProtectedColumn};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentOutcome};
pub use split::{split, Split, SplitConfig};
pub use synth::{synth_ciid, SynthConfig};

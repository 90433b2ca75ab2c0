//! Dataset handling and experiment orchestration.

mod fixtures;
mod manifest;

pub use fixtures::{gen_fixtures, item_seed, synthesize, FIXTURE_SECONDS, TRAIN_FRACTION};
pub use manifest::{Manifest, ManifestRow, Split, MANIFEST_HEADER};
mod pipeline;

pub use pipeline::{corrupt_set, featurize, noisy_set, train_model, training_examples, ExperimentConfig, Labeled};
mod grid;

pub use grid::{
    checkpoint_hash, run_ablation, run_grid, AblationReport, AblationRow, GridReport, GridRow, GridSpec, Spread,
};
mod explain_run;

pub use explain_run::{explain_audio, ExplainMethod, ExplainOptions, ExplainOutput};

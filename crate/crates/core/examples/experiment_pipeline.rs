//! The command pipeline driven from code: prepare, cross-validate two
//! variants, then build report tables, all under a temporary directory.
//!
//! `cargo run --release --example experiment_pipeline`

use std::fs;

use carets::cli::{cmd_cv, cmd_prepare, cmd_report, ExperimentConfig};
use carets::data::write_series;
use carets::encoders::EncoderKind;
use carets::model::Variant;
use carets::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data_path = dir.path().join("series.csv");
    write_series(&data_path, &generate(&SyntheticConfig { len: 800, ..SyntheticConfig::default() }))?;

    let mut config = ExperimentConfig {
        data_path,
        output_dir: dir.path().join("out"),
        encoder: EncoderKind::Cnn,
        num_folds: 3,
        hidden_dim: 16,
        fc_hidden: 16,
        include_persistence: true,
        ..ExperimentConfig::default()
    };
    config.train.max_epochs = 30;
    config.train.patience = 10;
    config.train.learning_rate = 0.003;

    let prepared = cmd_prepare(&config)?;
    println!("prepared {} pool and {} test windows", prepared.data.pool.len(), prepared.data.test.len());

    let mut runs = Vec::new();
    for variant in [Variant::Carets1, Variant::Baseline1] {
        config.variant = variant;
        runs.push(cmd_cv(&config)?.run_dir);
    }
    let written = cmd_report(&runs, &config.output_dir.join("report"))?;
    for path in &written {
        println!("wrote {}", path.strip_prefix(dir.path())?.display());
    }
    print!("{}", fs::read_to_string(config.output_dir.join("report/comparison.csv"))?);
    Ok(())
}

//! Multi-task training against the same model trained on the forecast loss
//! alone.
//!
//! `cargo run --release --example single_task_ablation`

use carets::cli::mode_comparison;
use carets::data::{default_train_points, make_folds, prepare};
use carets::encoders::{EncoderConfig, EncoderKind};
use carets::heads::HeadConfig;
use carets::model::Variant;
use carets::synthetic::{generate, SyntheticConfig};
use carets::train::{cross_validate, TrainConfig, TrainMode};

fn main() -> carets::Result<()> {
    let series = generate(&SyntheticConfig::default());
    let data = prepare(&series, 12, 6, default_train_points(series.len()))?;
    let folds = make_folds(data.pool.len(), data.test.len(), 3, 2025)?;
    let encoder = EncoderConfig::new(EncoderKind::Cnn).with_hidden_dim(32);
    let head = HeadConfig { fc_hidden: 32, ..HeadConfig::new(6) };
    let run = |mode| {
        let config = TrainConfig { max_epochs: 30, patience: 10, learning_rate: 0.003, mode, ..TrainConfig::default() };
        cross_validate(Variant::Carets2, &encoder, &head, &data, &folds, &config, true)
    };
    let multi = run(TrainMode::MultiTask)?;
    let single = run(TrainMode::SingleTask)?;
    print!("{}", mode_comparison(&multi, &single));
    println!(
        "mean seconds per fold: multi-task {:.1}, single-task {:.1}",
        multi.mean_wall_clock(),
        single.mean_wall_clock()
    );
    Ok(())
}

//! The three single-task baselines next to last-value persistence.
//!
//! `cargo run --release --example baselines`

use carets::data::{default_train_points, make_folds, prepare};
use carets::encoders::{EncoderConfig, EncoderKind};
use carets::heads::HeadConfig;
use carets::model::Variant;
use carets::synthetic::{generate, SyntheticConfig};
use carets::train::{evaluate_persistence, run_fold, Split, TrainConfig};

fn main() -> carets::Result<()> {
    let series = generate(&SyntheticConfig::default());
    let data = prepare(&series, 12, 6, default_train_points(series.len()))?;
    let folds = make_folds(data.pool.len(), data.test.len(), 3, 2025)?;
    let encoder = EncoderConfig::new(EncoderKind::Cnn).with_hidden_dim(32);
    let head = HeadConfig { fc_hidden: 32, ..HeadConfig::new(6) };
    let config = TrainConfig { max_epochs: 30, patience: 10, learning_rate: 0.003, ..TrainConfig::default() };

    for variant in [Variant::Baseline1, Variant::Baseline2, Variant::Baseline3, Variant::Carets2] {
        let (result, _) = run_fold(variant, &encoder, &head, &data, &folds[0], &config)?;
        println!("{:<10} test rmse {:.4}  trend accuracy {:.4}", variant.label(), result.test.rmse_avg, result.test.trend_acc_avg);
    }
    let test: Vec<_> = folds[0].test_indices.iter().map(|i| data.test[*i].clone()).collect();
    let p = evaluate_persistence(&test, Split::Test)?;
    println!("{:<10} test rmse {:.4}  trend accuracy {:.4}", "Persistence", p.rmse_avg, p.trend_acc_avg);
    Ok(())
}

//! Windowing, scaling and fold assignment on a generated hourly series.
//!
//! `cargo run --example prepare_data`

use carets::data::{default_train_points, fold_sizes, make_folds, prepare};
use carets::synthetic::{generate, SyntheticConfig};

fn main() -> carets::Result<()> {
    let series = generate(&SyntheticConfig::default());
    let split = default_train_points(series.len());
    let data = prepare(&series, 12, 6, split)?;
    println!("{} points, training segment {split}", series.len());
    println!("pool windows {}, test windows {}", data.pool.len(), data.test.len());

    let w = &data.pool[0];
    println!("first window: {} inputs (3 calendar + 12 lags), x_n = {:.4}", w.features.len(), w.x_n);
    println!("  targets     {:?}", rounded(&w.targets));
    println!("  trend       {:?}", w.trend_labels);
    println!("  dev up      {:?}", rounded(&w.dev_up));
    println!("  dev down    {:?}", rounded(&w.dev_down));

    let value = data.scaler.column("value")?;
    println!("value scaler: min {:.4}, max {:.4}", value.min, value.max);

    let folds = make_folds(data.pool.len(), data.test.len(), 10, 2025)?;
    println!("10 folds, validation sizes {:?}", fold_sizes(&folds));
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

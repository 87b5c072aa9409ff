//! K-fold cross-validation of every CaReTS variant with one encoder, printed
//! as a summary table (mean ± std over folds).
//!
//! `cargo run --release --example cross_validation -- lstm`

use carets::cli::{table_row, TABLE_HEADER};
use carets::data::{default_train_points, make_folds, prepare};
use carets::encoders::{EncoderConfig, EncoderKind};
use carets::heads::HeadConfig;
use carets::model::Variant;
use carets::synthetic::{generate, SyntheticConfig};
use carets::train::{cross_validate, evaluate_persistence, Split, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kind: EncoderKind = std::env::args().nth(1).unwrap_or_else(|| "cnn".into()).parse()?;
    let series = generate(&SyntheticConfig::default());
    let data = prepare(&series, 12, 6, default_train_points(series.len()))?;
    let folds = make_folds(data.pool.len(), data.test.len(), 3, 2025)?;
    let encoder = EncoderConfig::new(kind).with_hidden_dim(32);
    let head = HeadConfig { fc_hidden: 32, ..HeadConfig::new(6) };
    let config = TrainConfig { max_epochs: 30, patience: 10, learning_rate: 0.003, ..TrainConfig::default() };

    println!("{TABLE_HEADER}");
    for variant in Variant::CARETS {
        let summary = cross_validate(variant, &encoder, &head, &data, &folds, &config, true)?;
        println!("{}", table_row(&summary));
    }
    let persistence = evaluate_persistence(&data.test, Split::Test)?;
    println!("persistence test rmse {:.4}, trend accuracy {:.4}", persistence.rmse_avg, persistence.trend_acc_avg);
    Ok(())
}

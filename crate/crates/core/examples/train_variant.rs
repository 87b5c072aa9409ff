//! Trains one CaReTS variant on one fold and round-trips the checkpoint.
//!
//! `cargo run --release --example train_variant -- carets3 transformer`

use carets::data::{default_train_points, make_folds, prepare};
use carets::encoders::{EncoderConfig, EncoderKind};
use carets::heads::HeadConfig;
use carets::model::{Variant, VariantModel};
use carets::synthetic::{generate, SyntheticConfig};
use carets::train::{evaluate, EpochLog, run_fold, Split, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().unwrap_or_else(|| "carets2".into()).parse()?;
    let kind: EncoderKind = args.next().unwrap_or_else(|| "cnn".into()).parse()?;

    let series = generate(&SyntheticConfig::default());
    let data = prepare(&series, 12, 6, default_train_points(series.len()))?;
    let folds = make_folds(data.pool.len(), data.test.len(), 3, 2025)?;
    let encoder = EncoderConfig::new(kind).with_hidden_dim(32);
    let head = HeadConfig { fc_hidden: 32, ..HeadConfig::new(6) };
    let config = TrainConfig { max_epochs: 30, patience: 10, learning_rate: 0.003, ..TrainConfig::default() };

    let (result, model) = run_fold(variant, &encoder, &head, &data, &folds[0], &config)?;
    let outcome = &result.outcome;
    println!("{} + {kind}: {} epochs, best epoch {}", variant.label(), outcome.epochs_run(), outcome.best_epoch);
    println!("  {}", EpochLog::CSV_HEADER);
    for row in outcome.log.iter().step_by(5) {
        println!("  {}", row.to_csv_row());
    }
    let u = model.uncertainty();
    println!("learned log-variances ca {:+.3} de {:+.3} op {:+.3}", u.log_var_ca, u.log_var_de, u.log_var_op);
    for split in [Split::Train, Split::Val, Split::Test] {
        let r = result.report(split);
        println!("{:<5} rmse {:.4}  trend accuracy {:.4}", split.name(), r.rmse_avg, r.trend_acc_avg);
    }

    let restored = VariantModel::from_checkpoint(&model.to_checkpoint())?;
    let test: Vec<_> = folds[0].test_indices.iter().map(|i| data.test[*i].clone()).collect();
    let again = evaluate(&restored, &test, Split::Test)?;
    println!("checkpoint reload reproduces test rmse: {}", again.rmse_avg == result.test.rmse_avg);
    Ok(())
}

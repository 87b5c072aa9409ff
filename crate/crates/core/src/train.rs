//! Mini-batch Adam training with early stopping, evaluation metrics and
//! k-fold cross-validation.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{FoldSplit, PreparedData, WindowSample};
use crate::encoders::EncoderConfig;
use crate::error::{CaretsError, Result};
use crate::heads::{HeadConfig, TrendMode};
use crate::loss::DEFAULT_REG_COEFF;
use crate::model::{build_variant, Batch, Predictions, Variant, VariantModel};
pub use crate::model::TrainMode;
use crate::nn::Adam;
use crate::tape::Graph;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub reg_coeff: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 600,
            patience: 50,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 2025,
            mode: TrainMode::MultiTask,
            reg_coeff: DEFAULT_REG_COEFF,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(CaretsError::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(CaretsError::Config("batch_size must be >= 1".into()));
        }
        // NaN fails both checks
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0 && self.reg_coeff >= 0.0) {
            return Err(CaretsError::Config(
                "learning_rate must be positive and reg_coeff non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sample-weighted training losses of one epoch and the validation RMSE
/// after it.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_ca: Option<f64>,
    pub l_de: Option<f64>,
    pub l_op: f64,
    /// `[ca, de, op]` at the end of the epoch.
    pub log_vars: [f64; 3],
    pub reg_penalty: f64,
    pub total: f64,
    pub val_rmse: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str =
        "epoch,l_ca,l_de,l_op,log_var_ca,log_var_de,log_var_op,reg_penalty,total,val_rmse";

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            opt(self.l_ca),
            opt(self.l_de),
            self.l_op,
            self.log_vars[0],
            self.log_vars[1],
            self.log_vars[2],
            self.reg_penalty,
            self.total,
            self.val_rmse
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    /// Largest `|log_var|` seen after any optimiser step.
    pub max_abs_log_var: f64,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.log.len()
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from(EpochLog::CSV_HEADER);
        out.push('\n');
        for row in &self.log {
            out.push_str(&row.to_csv_row());
            out.push('\n');
        }
        out
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Trains in place and restores the parameters of the best validation epoch.
pub fn train_model(
    model: &mut VariantModel,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(CaretsError::Empty("training fold"));
    }
    if val.is_empty() {
        return Err(CaretsError::Empty("validation fold"));
    }
    model.trend_mode = match config.mode {
        TrainMode::MultiTask => TrendMode::Hard,
        TrainMode::SingleTask => TrendMode::Continuous,
    };
    let mut adam = Adam::for_store(config.learning_rate, &model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0, model.params.clone());
    let mut since_best = 0;
    let mut max_abs_log_var = 0.0f64;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch)));
        let mut sums = [0.0f64; 5];
        let mut seen = [false; 2];
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&WindowSample> = chunk.iter().map(|i| &train[*i]).collect();
            let batch = Batch::new(&refs)?;
            let mut g = Graph::new();
            let obj = model.objective(&mut g, &model.params, &batch, config.mode, config.reg_coeff)?;
            let terms = [
                ("l_ca", obj.l_ca),
                ("l_de", obj.l_de),
                ("l_op", Some(obj.l_op)),
                ("total", Some(obj.total)),
            ];
            for (name, var) in terms {
                if let Some(v) = var {
                    if !g.scalar(v).is_finite() {
                        return Err(CaretsError::NonFiniteLoss {
                            term: name,
                            epoch,
                            batch: batch_no + 1,
                        });
                    }
                }
            }
            let w = chunk.len() as f64;
            if let Some(v) = obj.l_ca {
                sums[0] += w * g.scalar(v);
                seen[0] = true;
            }
            if let Some(v) = obj.l_de {
                sums[1] += w * g.scalar(v);
                seen[1] = true;
            }
            sums[2] += w * g.scalar(obj.l_op);
            sums[3] += w * obj.penalty.map_or(0.0, |p| g.scalar(p));
            sums[4] += w * g.scalar(obj.total);

            let grads = g.backward(obj.total).for_store(&model.params);
            adam.step(model.params.values_mut(), &grads);
            model.clamp_log_vars();
            let s = model.uncertainty().as_array();
            max_abs_log_var = s.iter().fold(max_abs_log_var, |m, v| m.max(v.abs()));
        }

        let n = train.len() as f64;
        let val_rmse = evaluate(model, val, Split::Val)?.rmse_avg;
        log.push(EpochLog {
            epoch,
            l_ca: seen[0].then(|| sums[0] / n),
            l_de: seen[1].then(|| sums[1] / n),
            l_op: sums[2] / n,
            log_vars: model.uncertainty().as_array(),
            reg_penalty: sums[3] / n,
            total: sums[4] / n,
            val_rmse,
        });
        if !val_rmse.is_finite() {
            return Err(CaretsError::NonFiniteLoss {
                term: "val_rmse",
                epoch,
                batch: 0,
            });
        }
        if val_rmse < best.0 {
            best = (val_rmse, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    model.params = best.2;
    Ok(TrainOutcome {
        log,
        best_epoch: best.1,
        best_val_rmse: best.0,
        max_abs_log_var,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Per-step and averaged RMSE and trend accuracy, in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub split: Split,
    pub rmse_per_step: Vec<f64>,
    pub rmse_avg: f64,
    pub trend_acc_per_step: Vec<f64>,
    pub trend_acc_avg: f64,
    pub wall_clock_seconds: f64,
}

impl MetricsReport {
    /// Metric lines under `prefix` (for example `test.`), without timing.
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{prefix}rmse_avg = {}", self.rmse_avg);
        for (k, v) in self.rmse_per_step.iter().enumerate() {
            let _ = writeln!(out, "{prefix}rmse_step_{} = {v}", k + 1);
        }
        let _ = writeln!(out, "{prefix}trend_acc_avg = {}", self.trend_acc_avg);
        for (k, v) in self.trend_acc_per_step.iter().enumerate() {
            let _ = writeln!(out, "{prefix}trend_acc_step_{} = {v}", k + 1);
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fraction of (sample, step) pairs whose predicted direction matches the
/// label; returns per-step values and their mean.
pub fn trend_accuracy(directions: &[Vec<i8>], labels: &[Vec<u8>]) -> (Vec<f64>, f64) {
    let k = labels.first().map_or(0, Vec::len);
    let per_step: Vec<f64> = (0..k)
        .map(|j| {
            let hits = directions
                .iter()
                .zip(labels)
                .filter(|(d, t)| (d[j] == 1) == (t[j] == 1))
                .count();
            hits as f64 / labels.len() as f64
        })
        .collect();
    let avg = mean(&per_step);
    (per_step, avg)
}

/// Metrics for given predictions against the samples' targets and labels.
pub fn metrics_from_predictions(
    predictions: &Predictions,
    samples: &[WindowSample],
    split: Split,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(CaretsError::Empty("evaluation set"));
    }
    if predictions.forecasts.len() != samples.len() {
        return Err(CaretsError::Dimension(format!(
            "{} predictions for {} samples",
            predictions.forecasts.len(),
            samples.len()
        )));
    }
    let k = samples[0].horizon();
    let rmse_per_step: Vec<f64> = (0..k)
        .map(|j| {
            let sq: f64 = predictions
                .forecasts
                .iter()
                .zip(samples)
                .map(|(f, s)| (f[j] - s.targets[j]).powi(2))
                .sum();
            (sq / samples.len() as f64).sqrt()
        })
        .collect();
    let labels: Vec<Vec<u8>> = samples.iter().map(|s| s.trend_labels.clone()).collect();
    let (trend_acc_per_step, trend_acc_avg) = trend_accuracy(&predictions.directions, &labels);
    Ok(MetricsReport {
        split,
        rmse_avg: mean(&rmse_per_step),
        rmse_per_step,
        trend_acc_per_step,
        trend_acc_avg,
        wall_clock_seconds: 0.0,
    })
}

pub fn evaluate(model: &VariantModel, samples: &[WindowSample], split: Split) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(CaretsError::Empty("evaluation set"));
    }
    let start = Instant::now();
    let mut report = metrics_from_predictions(&model.predict(samples)?, samples, split)?;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Persistence forecasts (`x_n` repeated) with directions by the tie rule,
/// which makes every step "upward".
pub fn persistence_predictions(samples: &[WindowSample]) -> Predictions {
    Predictions {
        forecasts: samples.iter().map(|s| vec![s.x_n; s.horizon()]).collect(),
        directions: samples.iter().map(|s| vec![1; s.horizon()]).collect(),
    }
}

pub fn evaluate_persistence(samples: &[WindowSample], split: Split) -> Result<MetricsReport> {
    metrics_from_predictions(&persistence_predictions(samples), samples, split)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold_id: usize,
    pub train: MetricsReport,
    pub val: MetricsReport,
    pub test: MetricsReport,
    pub outcome: TrainOutcome,
    /// Training plus evaluation.
    pub wall_clock_seconds: f64,
}

impl FoldResult {
    pub fn report(&self, split: Split) -> &MetricsReport {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "fold = {}\nbest_epoch = {}\nepochs_run = {}\n",
            self.fold_id,
            self.outcome.best_epoch,
            self.outcome.epochs_run()
        );
        for split in Split::ALL {
            out.push_str(&self.report(split).to_kv(&format!("{}.", split.name())));
        }
        out
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
        Self { mean: m, std: var.sqrt() }
    }

    /// `0.0691 ± 0.0018` style cell.
    pub fn cell(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitStats {
    pub rmse_avg: Stat,
    pub rmse_per_step: Vec<Stat>,
    pub trend_acc_avg: Stat,
    pub trend_acc_per_step: Vec<Stat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CVSummary {
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub mode: TrainMode,
    pub folds: Vec<FoldResult>,
}

impl CVSummary {
    pub fn stats(&self, split: Split) -> SplitStats {
        let reports: Vec<&MetricsReport> = self.folds.iter().map(|f| f.report(split)).collect();
        let k = reports[0].rmse_per_step.len();
        let col = |f: &dyn Fn(&MetricsReport) -> f64| Stat::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        SplitStats {
            rmse_avg: col(&|r| r.rmse_avg),
            rmse_per_step: (0..k).map(|j| col(&|r| r.rmse_per_step[j])).collect(),
            trend_acc_avg: col(&|r| r.trend_acc_avg),
            trend_acc_per_step: (0..k).map(|j| col(&|r| r.trend_acc_per_step[j])).collect(),
        }
    }

    pub fn mean_wall_clock(&self) -> f64 {
        mean(&self.folds.iter().map(|f| f.wall_clock_seconds).collect::<Vec<_>>())
    }

    /// Deterministic summary: `<split>.<metric>.mean` / `.std` lines.
    pub fn to_kv(&self) -> String {
        let mut out = format!(
            "variant = {}\nencoder = {}\nmode = {}\nfolds = {}\n",
            self.variant,
            self.encoder.kind,
            self.mode,
            self.folds.len()
        );
        for split in Split::ALL {
            let s = self.stats(split);
            let p = split.name();
            let mut put = |name: String, st: &Stat| {
                let _ = writeln!(out, "{p}.{name}.mean = {}", st.mean);
                let _ = writeln!(out, "{p}.{name}.std = {}", st.std);
            };
            put("rmse_avg".into(), &s.rmse_avg);
            for (k, st) in s.rmse_per_step.iter().enumerate() {
                put(format!("rmse_step_{}", k + 1), st);
            }
            put("trend_acc_avg".into(), &s.trend_acc_avg);
            for (k, st) in s.trend_acc_per_step.iter().enumerate() {
                put(format!("trend_acc_step_{}", k + 1), st);
            }
        }
        out
    }

    /// Wall-clock seconds per fold; kept apart from the metrics files.
    pub fn timing_kv(&self) -> String {
        let mut out = String::new();
        for f in &self.folds {
            let _ = writeln!(out, "fold_{}.time_seconds = {}", f.fold_id, f.wall_clock_seconds);
        }
        let _ = writeln!(out, "time_seconds = {}", self.mean_wall_clock());
        out
    }
}

fn select(samples: &[WindowSample], indices: &[usize]) -> Vec<WindowSample> {
    indices.iter().map(|i| samples[*i].clone()).collect()
}

/// Trains one fold from a fresh initialisation seeded with `seed + fold_id`.
pub fn run_fold(
    variant: Variant,
    encoder: &EncoderConfig,
    head: &HeadConfig,
    data: &PreparedData,
    fold: &FoldSplit,
    config: &TrainConfig,
) -> Result<(FoldResult, VariantModel)> {
    let start = Instant::now();
    let seed = config.seed.wrapping_add(fold.fold_id as u64);
    let fold_config = TrainConfig { seed, ..config.clone() };
    let mut model = build_variant(variant, encoder, head, data.input_len(), seed)?;
    let train = select(&data.pool, &fold.train_indices);
    let val = select(&data.pool, &fold.val_indices);
    let test = select(&data.test, &fold.test_indices);
    let outcome = train_model(&mut model, &train, &val, &fold_config)?;
    let result = FoldResult {
        fold_id: fold.fold_id,
        train: evaluate(&model, &train, Split::Train)?,
        val: evaluate(&model, &val, Split::Val)?,
        test: evaluate(&model, &test, Split::Test)?,
        outcome,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, model))
}

/// Independent training per fold, optionally in parallel; the summary does not
/// depend on the execution order.
pub fn cross_validate(
    variant: Variant,
    encoder: &EncoderConfig,
    head: &HeadConfig,
    data: &PreparedData,
    folds: &[FoldSplit],
    config: &TrainConfig,
    parallel: bool,
) -> Result<CVSummary> {
    if folds.is_empty() {
        return Err(CaretsError::Empty("fold list"));
    }
    let run = |fold: &FoldSplit| {
        run_fold(variant, encoder, head, data, fold, config)
            .map(|(r, _)| r)
            .map_err(|e| CaretsError::Fold {
                fold: fold.fold_id,
                source: Box::new(e),
            })
    };
    let results: Vec<Result<FoldResult>> = if parallel {
        folds.par_iter().map(run).collect()
    } else {
        folds.iter().map(run).collect()
    };
    Ok(CVSummary {
        variant,
        encoder: encoder.clone(),
        mode: config.mode,
        folds: results.into_iter().collect::<Result<_>>()?,
    })
}

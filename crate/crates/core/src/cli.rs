//! Experiment configuration and the `prepare` / `train` / `cv` / `report`
//! commands.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! prepared/   pool.csv test.csv scaler.kv folds.kv meta.kv
//! runs/<variant>_<encoder>_<mode>_k<K>/
//!             fold_<i>.kv epoch_log_fold_<i>.csv summary.kv timing.kv
//!             rmse_table.csv trend_table.csv [mode_comparison.csv] [persistence.kv]
//! report/     comparison.csv <run>_rmse_steps.csv <run>_trend_steps.csv
//! ```
//!
//! Metrics files never contain wall-clock times, so reruns are byte-identical;
//! timings go to `timing.kv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    default_train_points, folds_to_kv, load_series, make_folds, prepare, windows_from_csv, windows_to_csv,
    FoldSplit, PreparedData, ScalerParams,
};
use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{CaretsError, Result};
use crate::heads::HeadConfig;
use crate::kv;
use crate::model::{TrainMode, Variant};
use crate::train::{cross_validate, evaluate_persistence, run_fold, CVSummary, Split, Stat, TrainConfig};

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "CARETS_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    pub output_dir: PathBuf,
    pub variant: Variant,
    pub encoder: EncoderKind,
    pub n_lags: usize,
    pub horizon: usize,
    pub num_folds: usize,
    /// Training-segment length; the 6,048/8,784 proportion when unset.
    pub train_points: Option<usize>,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub num_heads: usize,
    pub fc_hidden: usize,
    pub fc_layers: usize,
    pub train: TrainConfig,
    pub single_task: bool,
    pub include_persistence: bool,
    pub native_units: bool,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: PathBuf::from("data.csv"),
            output_dir: PathBuf::from("out"),
            variant: Variant::Carets2,
            encoder: EncoderKind::Transformer,
            n_lags: 12,
            horizon: 6,
            num_folds: 10,
            train_points: None,
            hidden_dim: 64,
            encoder_layers: 2,
            num_heads: 4,
            fc_hidden: 64,
            fc_layers: 2,
            train: TrainConfig::default(),
            single_task: false,
            include_persistence: false,
            native_units: false,
            parallel: true,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CaretsError::Config(format!("`{key}` has invalid value `{value}`")))
}

impl ExperimentConfig {
    /// Parses `key = value` text. Missing keys keep their defaults; unknown
    /// keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self> {
        let map = kv::parse(text).map_err(|e| CaretsError::Config(e.to_string()))?;
        let mut c = Self::default();
        for (key, value) in &map {
            let v = value.as_str();
            match key.as_str() {
                "data_path" => c.data_path = PathBuf::from(v),
                "output_dir" => c.output_dir = PathBuf::from(v),
                "variant" => c.variant = v.parse()?,
                "encoder" => c.encoder = v.parse()?,
                "n_lags" => c.n_lags = parse_value(key, v)?,
                "horizon" => c.horizon = parse_value(key, v)?,
                "num_folds" => c.num_folds = parse_value(key, v)?,
                "train_points" => {
                    c.train_points = if v == "auto" { None } else { Some(parse_value(key, v)?) }
                }
                "hidden_dim" => c.hidden_dim = parse_value(key, v)?,
                "encoder_layers" => c.encoder_layers = parse_value(key, v)?,
                "num_heads" => c.num_heads = parse_value(key, v)?,
                "fc_hidden" => c.fc_hidden = parse_value(key, v)?,
                "fc_layers" => c.fc_layers = parse_value(key, v)?,
                "max_epochs" => c.train.max_epochs = parse_value(key, v)?,
                "patience" => c.train.patience = parse_value(key, v)?,
                "learning_rate" => c.train.learning_rate = parse_value(key, v)?,
                "batch_size" => c.train.batch_size = parse_value(key, v)?,
                "seed" => c.train.seed = parse_value(key, v)?,
                "reg_coeff" => c.train.reg_coeff = parse_value(key, v)?,
                "single_task" => c.single_task = parse_value(key, v)?,
                "include_persistence" => c.include_persistence = parse_value(key, v)?,
                "native_units" => c.native_units = parse_value(key, v)?,
                "parallel" => c.parallel = parse_value(key, v)?,
                other => return Err(CaretsError::Config(format!("unknown config key `{other}`"))),
            }
        }
        c.sync_mode();
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("data_path", self.data_path.display().to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("variant", self.variant.to_string());
        put("encoder", self.encoder.to_string());
        put("n_lags", self.n_lags.to_string());
        put("horizon", self.horizon.to_string());
        put("num_folds", self.num_folds.to_string());
        put("train_points", self.train_points.map_or("auto".into(), |v| v.to_string()));
        put("hidden_dim", self.hidden_dim.to_string());
        put("encoder_layers", self.encoder_layers.to_string());
        put("num_heads", self.num_heads.to_string());
        put("fc_hidden", self.fc_hidden.to_string());
        put("fc_layers", self.fc_layers.to_string());
        put("max_epochs", t.max_epochs.to_string());
        put("patience", t.patience.to_string());
        put("learning_rate", t.learning_rate.to_string());
        put("batch_size", t.batch_size.to_string());
        put("seed", t.seed.to_string());
        put("reg_coeff", t.reg_coeff.to_string());
        put("single_task", self.single_task.to_string());
        put("include_persistence", self.include_persistence.to_string());
        put("native_units", self.native_units.to_string());
        put("parallel", self.parallel.to_string());
        out
    }

    fn sync_mode(&mut self) {
        self.train.mode = if self.single_task {
            TrainMode::SingleTask
        } else {
            TrainMode::MultiTask
        };
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lags == 0 || self.horizon == 0 {
            return Err(CaretsError::Config("n_lags and horizon must be >= 1".into()));
        }
        if self.num_folds < 2 {
            return Err(CaretsError::Config("num_folds must be >= 2".into()));
        }
        self.train.validate()?;
        self.encoder_config().validate()?;
        self.head_config().validate()
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        let mut e = EncoderConfig::new(self.encoder)
            .with_hidden_dim(self.hidden_dim)
            .with_num_layers(self.encoder_layers);
        e.num_heads = self.num_heads;
        e
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            num_fc_layers: self.fc_layers,
            fc_hidden: self.fc_hidden,
            horizon: self.horizon,
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.output_dir.join("prepared")
    }

    pub fn run_name(&self, mode: TrainMode) -> String {
        format!("{}_{}_{}_k{}", self.variant, self.encoder, mode, self.horizon)
    }

    pub fn run_dir(&self, mode: TrainMode) -> PathBuf {
        self.output_dir.join("runs").join(self.run_name(mode))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CaretsError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CaretsError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CaretsError::io(path, e))
}

/// Prepared windows, scaler and fold assignment.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub data: PreparedData,
    pub folds: Vec<FoldSplit>,
}

fn meta_kv(config: &ExperimentConfig, train_points: usize, data: &PreparedData) -> String {
    format!(
        "n_lags = {}\nhorizon = {}\ntrain_points = {train_points}\nnum_folds = {}\nseed = {}\nnum_pool_windows = {}\nnum_test_windows = {}\n",
        config.n_lags,
        config.horizon,
        config.num_folds,
        config.train.seed,
        data.pool.len(),
        data.test.len()
    )
}

/// Ingests the CSV, scales and windows it, assigns folds and writes the
/// results to `<output_dir>/prepared`.
pub fn cmd_prepare(config: &ExperimentConfig) -> Result<PreparedRun> {
    config.validate()?;
    let series = load_series(&config.data_path)?;
    let train_points = config.train_points.unwrap_or_else(|| default_train_points(series.len()));
    let data = prepare(&series, config.n_lags, config.horizon, train_points)?;
    let folds = make_folds(data.pool.len(), data.test.len(), config.num_folds, config.train.seed)?;
    let dir = config.prepared_dir();
    write(&dir.join("pool.csv"), &windows_to_csv(&data.pool))?;
    write(&dir.join("test.csv"), &windows_to_csv(&data.test))?;
    write(&dir.join("scaler.kv"), &data.scaler.to_kv())?;
    write(&dir.join("folds.kv"), &folds_to_kv(&folds))?;
    write(&dir.join("meta.kv"), &meta_kv(config, train_points, &data))?;
    Ok(PreparedRun { data, folds })
}

/// Loads `<output_dir>/prepared` when it matches the configuration, otherwise
/// prepares from the CSV.
pub fn load_or_prepare(config: &ExperimentConfig) -> Result<PreparedRun> {
    let dir = config.prepared_dir();
    let meta_path = dir.join("meta.kv");
    if !meta_path.exists() {
        return cmd_prepare(config);
    }
    let meta = kv::parse(&read(&meta_path)?)?;
    let matches = |key: &str, value: String| meta.get(key) == Some(&value);
    let same = matches("n_lags", config.n_lags.to_string())
        && matches("horizon", config.horizon.to_string())
        && matches("num_folds", config.num_folds.to_string())
        && matches("seed", config.train.seed.to_string())
        && config
            .train_points
            .is_none_or(|tp| matches("train_points", tp.to_string()));
    if !same {
        return cmd_prepare(config);
    }
    let data = PreparedData {
        scaler: ScalerParams::from_kv(&read(&dir.join("scaler.kv"))?)?,
        pool: windows_from_csv(&read(&dir.join("pool.csv"))?, config.horizon)?,
        test: windows_from_csv(&read(&dir.join("test.csv"))?, config.horizon)?,
        n_lags: config.n_lags,
        horizon: config.horizon,
    };
    let folds = make_folds(data.pool.len(), data.test.len(), config.num_folds, config.train.seed)?;
    Ok(PreparedRun { data, folds })
}

/// Trains a single fold and writes its checkpoint, log and metrics.
pub fn cmd_train(config: &ExperimentConfig, fold_id: usize) -> Result<PathBuf> {
    let prepared = load_or_prepare(config)?;
    let fold = prepared
        .folds
        .iter()
        .find(|f| f.fold_id == fold_id)
        .ok_or_else(|| CaretsError::Config(format!("fold {fold_id} does not exist")))?;
    let (result, model) = run_fold(
        config.variant,
        &config.encoder_config(),
        &config.head_config(),
        &prepared.data,
        fold,
        &config.train,
    )?;
    let dir = config.run_dir(config.train.mode).join(format!("train_fold_{fold_id}"));
    write(&dir.join("checkpoint.kv"), &model.to_checkpoint())?;
    write(&dir.join("epoch_log.csv"), &result.outcome.log_csv())?;
    write(&dir.join("metrics.kv"), &result.to_kv())?;
    write(&dir.join("timing.kv"), &format!("time_seconds = {}\n", result.wall_clock_seconds))?;
    println!(
        "{} {} fold {fold_id}: test RMSE {:.4}, trend accuracy {:.4}, best epoch {}",
        config.variant.label(),
        config.encoder,
        result.test.rmse_avg,
        result.test.trend_acc_avg,
        result.outcome.best_epoch
    );
    Ok(dir)
}

fn encoder_label(kind: EncoderKind) -> &'static str {
    match kind {
        EncoderKind::Cnn => "CNN",
        EncoderKind::Lstm => "LSTM",
        EncoderKind::Transformer => "Transformer",
    }
}

/// Summary row: approach, encoder, then mean ± std for train/val/test
/// RMSE and train/val/test trend accuracy.
pub fn table_row(summary: &CVSummary) -> String {
    let mut cells = vec![summary.variant.label().to_string(), encoder_label(summary.encoder.kind).to_string()];
    for split in Split::ALL {
        cells.push(summary.stats(split).rmse_avg.cell());
    }
    for split in Split::ALL {
        cells.push(summary.stats(split).trend_acc_avg.cell());
    }
    format!("| {} |", cells.join(" | "))
}

pub const TABLE_HEADER: &str = "| Approach | Encoder | RMSE train | RMSE val | RMSE test | Trend acc train | Trend acc val | Trend acc test |";

fn split_table(summary: &CVSummary, metric: impl Fn(&crate::train::SplitStats) -> Stat) -> String {
    let mut out = String::from("approach,encoder,split,mean,std\n");
    for split in Split::ALL {
        let s = metric(&summary.stats(split));
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            summary.variant.label(),
            encoder_label(summary.encoder.kind),
            split.name(),
            s.mean,
            s.std
        );
    }
    out
}

fn write_summary(dir: &Path, summary: &CVSummary, scaler: &ScalerParams, native: bool) -> Result<()> {
    for f in &summary.folds {
        write(&dir.join(format!("fold_{}.kv", f.fold_id)), &f.to_kv())?;
        write(&dir.join(format!("epoch_log_fold_{}.csv", f.fold_id)), &f.outcome.log_csv())?;
    }
    write(&dir.join("summary.kv"), &summary.to_kv())?;
    write(&dir.join("timing.kv"), &summary.timing_kv())?;
    write(&dir.join("rmse_table.csv"), &split_table(summary, |s| s.rmse_avg))?;
    write(&dir.join("trend_table.csv"), &split_table(summary, |s| s.trend_acc_avg))?;
    if native {
        let col = scaler.column("value")?;
        let range = col.max - col.min;
        let mut out = String::new();
        for split in Split::ALL {
            let s = summary.stats(split).rmse_avg;
            let _ = writeln!(out, "{}.rmse_avg.mean = {}", split.name(), s.mean * range);
            let _ = writeln!(out, "{}.rmse_avg.std = {}", split.name(), s.std * range);
        }
        write(&dir.join("summary_native.kv"), &out)?;
    }
    Ok(())
}

/// Output of [`cmd_cv`].
#[derive(Clone, Debug)]
pub struct CvRun {
    pub summary: CVSummary,
    pub run_dir: PathBuf,
    /// Multi-task counterpart when the single-task ablation was requested.
    pub multi_task: Option<(CVSummary, PathBuf)>,
}

/// Runs cross-validation, writes per-fold metrics, the summary and the table
/// files, and prints the table rows.
pub fn cmd_cv(config: &ExperimentConfig) -> Result<CvRun> {
    let prepared = load_or_prepare(config)?;
    let run = |mode: TrainMode| -> Result<(CVSummary, PathBuf)> {
        let train = TrainConfig { mode, ..config.train.clone() };
        let summary = cross_validate(
            config.variant,
            &config.encoder_config(),
            &config.head_config(),
            &prepared.data,
            &prepared.folds,
            &train,
            config.parallel,
        )?;
        let dir = config.run_dir(mode);
        write_summary(&dir, &summary, &prepared.data.scaler, config.native_units)?;
        Ok((summary, dir))
    };
    let (summary, run_dir) = run(config.train.mode)?;

    println!("{TABLE_HEADER}");
    println!("{}", table_row(&summary));
    if config.include_persistence {
        let test = evaluate_persistence(&prepared.data.test, Split::Test)?;
        write(&run_dir.join("persistence.kv"), &test.to_kv("test."))?;
        println!(
            "| Persistence | - | - | - | {:.4} ± 0.0000 | - | - | {:.4} ± 0.0000 |",
            test.rmse_avg, test.trend_acc_avg
        );
    }

    let multi_task = if config.train.mode == TrainMode::SingleTask {
        let (multi, multi_dir) = run(TrainMode::MultiTask)?;
        let table = mode_comparison(&multi, &summary);
        write(&run_dir.join("mode_comparison.csv"), &table)?;
        println!("{}", mode_comparison_markdown(&multi, &summary));
        Some((multi, multi_dir))
    } else {
        None
    };
    Ok(CvRun {
        summary,
        run_dir,
        multi_task,
    })
}

/// Multi-task vs single-task comparison on the test split. Time per fold is
/// left to each run's `timing.kv` and the printed table.
pub fn mode_comparison(multi: &CVSummary, single: &CVSummary) -> String {
    let mut out = String::from("setting,rmse_mean,rmse_std,trend_acc_mean,trend_acc_std\n");
    for (name, s) in [("multi_task", multi), ("single_task", single)] {
        let st = s.stats(Split::Test);
        let _ = writeln!(
            out,
            "{name},{},{},{},{}",
            st.rmse_avg.mean, st.rmse_avg.std, st.trend_acc_avg.mean, st.trend_acc_avg.std
        );
    }
    out
}

fn mode_comparison_markdown(multi: &CVSummary, single: &CVSummary) -> String {
    let mut out = String::from("| Setting | RMSE | Trend accuracy | Time per fold (s) |\n");
    for (name, s) in [("Multi-task", multi), ("Single-task", single)] {
        let st = s.stats(Split::Test);
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {:.1} |",
            st.rmse_avg.cell(),
            st.trend_acc_avg.cell(),
            s.mean_wall_clock()
        );
    }
    out.trim_end().to_string()
}

/// Builds comparison and per-step curve tables from completed run
/// directories; every number is copied from the runs' `summary.kv`.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(CaretsError::Config("report needs at least one run directory".into()));
    }
    let mut comparison =
        String::from("run,approach,encoder,mode,rmse_test_mean,rmse_test_std,trend_acc_test_mean,trend_acc_test_std\n");
    let mut written = Vec::new();
    for dir in run_dirs {
        let summary: BTreeMap<String, String> = kv::parse(&read(&dir.join("summary.kv"))?)?;
        let get = |key: &str| -> Result<&str> {
            summary
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| CaretsError::Parse {
                    row: 0,
                    message: format!("{} lacks `{key}`", dir.display()),
                })
        };
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let variant: Variant = get("variant")?.parse()?;
        let encoder: EncoderKind = get("encoder")?.parse()?;
        let _ = writeln!(
            comparison,
            "{name},{},{},{},{},{},{},{}",
            variant.label(),
            encoder_label(encoder),
            get("mode")?,
            get("test.rmse_avg.mean")?,
            get("test.rmse_avg.std")?,
            get("test.trend_acc_avg.mean")?,
            get("test.trend_acc_avg.std")?
        );
        for (metric, file) in [("rmse_step", "rmse_steps"), ("trend_acc_step", "trend_steps")] {
            let mut curve = String::from("step,mean,std\n");
            let mut k = 1;
            while let Some(mean) = summary.get(&format!("test.{metric}_{k}.mean")) {
                let std = get(&format!("test.{metric}_{k}.std"))?;
                let _ = writeln!(curve, "{k},{mean},{std}");
                k += 1;
            }
            let path = out_dir.join(format!("{name}_{file}.csv"));
            write(&path, &curve)?;
            written.push(path);
        }
    }
    let path = out_dir.join("comparison.csv");
    write(&path, &comparison)?;
    written.insert(0, path);
    Ok(written)
}

#[derive(Debug, Parser)]
#[command(name = "carets", version, about = "Dual-stream trend/deviation forecasting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scale, window and split a CSV series.
    Prepare(CommonArgs),
    /// Train one fold and save a checkpoint.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1)]
        fold: usize,
    },
    /// Cross-validate one approach and print its table row.
    Cv(CommonArgs),
    /// Build comparison and per-step tables from finished runs.
    Report {
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Key-value experiment configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub single_task: bool,
    #[arg(long)]
    pub include_persistence: bool,
    #[arg(long)]
    pub native_units: bool,
    /// Run folds one after another instead of in parallel.
    #[arg(long)]
    pub sequential: bool,
}

impl CommonArgs {
    /// Config file, then flags, then the output-directory environment override.
    pub fn resolve(&self, env_output: Option<PathBuf>) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_kv(&read(path).map_err(|e| CaretsError::Config(e.to_string()))?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.data {
            c.data_path = v.clone();
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.variant {
            c.variant = v.parse()?;
        }
        if let Some(v) = &self.encoder {
            c.encoder = v.parse()?;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.folds {
            c.num_folds = v;
        }
        if let Some(v) = self.max_epochs {
            c.train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            c.train.patience = v;
        }
        c.single_task |= self.single_task;
        c.include_persistence |= self.include_persistence;
        c.native_units |= self.native_units;
        c.parallel &= !self.sequential;
        if let Some(dir) = env_output {
            c.output_dir = dir;
        }
        c.sync_mode();
        c.validate()?;
        Ok(c)
    }
}

fn env_output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => {
            let config = args.resolve(env_output_dir())?;
            let p = cmd_prepare(&config)?;
            println!(
                "prepared {} pool and {} test windows in {}",
                p.data.pool.len(),
                p.data.test.len(),
                config.prepared_dir().display()
            );
        }
        Command::Train { common, fold } => {
            let config = common.resolve(env_output_dir())?;
            let dir = cmd_train(&config, fold)?;
            println!("wrote {}", dir.display());
        }
        Command::Cv(args) => {
            let config = args.resolve(env_output_dir())?;
            let run = cmd_cv(&config)?;
            println!("wrote {}", run.run_dir.display());
        }
        Command::Report { output_dir, runs } => {
            let root = env_output_dir().or(output_dir).unwrap_or_else(|| PathBuf::from("out"));
            for path in cmd_report(&runs, &root.join("report"))? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 data error, 3 training failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

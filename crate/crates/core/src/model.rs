//! Encoder plus heads for every approach, the training objectives and
//! checkpoint files.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{BaselineConfig, BaselineHead, BaselineKind};
use crate::data::WindowSample;
use crate::encoders::{Encoder, EncoderConfig, EncoderKind};
use crate::error::{CaretsError, Result};
use crate::heads::{CaretsHeads, CaretsVariant, DeviationVars, ForwardVars, HeadConfig, TrendMode, TrendVars};
use crate::kv;
use crate::loss::{graph as lg, Arch, UncertaintyState, LOG_VAR_BOUND};
use crate::tape::{Graph, Matrix, ParamId, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Carets1,
    Carets2,
    Carets3,
    Carets4,
    Baseline1,
    Baseline2,
    Baseline3,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Carets1,
        Variant::Carets2,
        Variant::Carets3,
        Variant::Carets4,
        Variant::Baseline1,
        Variant::Baseline2,
        Variant::Baseline3,
    ];
    pub const CARETS: [Variant; 4] = [Variant::Carets1, Variant::Carets2, Variant::Carets3, Variant::Carets4];

    pub fn carets(self) -> Option<CaretsVariant> {
        match self {
            Variant::Carets1 => Some(CaretsVariant::One),
            Variant::Carets2 => Some(CaretsVariant::Two),
            Variant::Carets3 => Some(CaretsVariant::Three),
            Variant::Carets4 => Some(CaretsVariant::Four),
            _ => None,
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Variant::Baseline1 => Some(BaselineKind::B1),
            Variant::Baseline2 => Some(BaselineKind::B2),
            Variant::Baseline3 => Some(BaselineKind::B3),
            _ => None,
        }
    }

    /// Loss architecture of CaReTS variants; baselines have none.
    pub fn arch(self) -> Option<Arch> {
        match self {
            Variant::Carets1 | Variant::Carets2 | Variant::Carets3 => Some(Arch::A),
            Variant::Carets4 => Some(Arch::B),
            _ => None,
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Carets1 => "CaReTS1",
            Variant::Carets2 => "CaReTS2",
            Variant::Carets3 => "CaReTS3",
            Variant::Carets4 => "CaReTS4",
            Variant::Baseline1 => "Baseline1",
            Variant::Baseline2 => "Baseline2",
            Variant::Baseline3 => "Baseline3",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label().to_ascii_lowercase())
    }
}

impl FromStr for Variant {
    type Err = CaretsError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == lower)
            .ok_or_else(|| CaretsError::Config(format!("unknown variant `{s}`")))
    }
}

/// Which losses are optimised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainMode {
    #[default]
    MultiTask,
    /// Forecast loss only, with continuous trend surrogates.
    SingleTask,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::MultiTask => "multi_task",
            TrainMode::SingleTask => "single_task",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Carets(CaretsHeads),
    Baseline(BaselineHead),
}

/// A mini-batch laid out as `(batch, width)` matrices.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Matrix,
    pub x_n: Matrix,
    pub targets: Matrix,
    pub labels: Matrix,
    pub dev_abs: Matrix,
    pub dev_up: Matrix,
    pub dev_down: Matrix,
}

impl Batch {
    pub fn new(samples: &[&WindowSample]) -> Result<Self> {
        let first = samples.first().ok_or(CaretsError::Empty("batch"))?;
        let (b, n, k) = (samples.len(), first.features.len(), first.horizon());
        if samples.iter().any(|s| s.features.len() != n || s.horizon() != k) {
            return Err(CaretsError::Dimension("samples in a batch differ in shape".into()));
        }
        let rows = |width: usize, f: &dyn Fn(&WindowSample, usize) -> f64| {
            Matrix::from_shape_fn((b, width), |(i, j)| f(samples[i], j))
        };
        Ok(Self {
            features: rows(n, &|s, j| s.features[j]),
            x_n: rows(k, &|s, _| s.x_n),
            targets: rows(k, &|s, j| s.targets[j]),
            labels: rows(k, &|s, j| f64::from(s.trend_labels[j])),
            dev_abs: rows(k, &|s, j| s.dev_abs[j]),
            dev_up: rows(k, &|s, j| s.dev_up[j]),
            dev_down: rows(k, &|s, j| s.dev_down[j]),
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss nodes of one objective evaluation.
#[derive(Clone, Debug)]
pub struct ObjectiveVars {
    pub total: Var,
    pub l_ca: Option<Var>,
    pub l_de: Option<Var>,
    pub l_op: Var,
    pub penalty: Option<Var>,
    pub forward: ForwardVars,
}

/// Forecasts and predicted directions (`+1` up, `-1` down) per sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub forecasts: Vec<Vec<f64>>,
    pub directions: Vec<Vec<i8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantModel {
    pub variant: Variant,
    pub encoder_config: EncoderConfig,
    pub head_config: HeadConfig,
    pub input_len: usize,
    pub trend_mode: TrendMode,
    pub encoder: Encoder,
    pub head: Head,
    pub params: ParamStore,
    /// `[ca, de, op]` log-variances, each a `1 x 1` parameter.
    pub log_vars: [ParamId; 3],
}

const PREDICT_CHUNK: usize = 512;

/// Assembles a freshly initialised model. Every variant works with every encoder.
pub fn build_variant(
    variant: Variant,
    encoder_config: &EncoderConfig,
    head_config: &HeadConfig,
    input_len: usize,
    seed: u64,
) -> Result<VariantModel> {
    head_config.validate()?;
    if input_len == 0 {
        return Err(CaretsError::Config("input window must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let encoder = Encoder::new(encoder_config, &mut params, &mut rng)?;
    let d = encoder.output_dim();
    let head = match (variant.carets(), variant.baseline()) {
        (Some(c), _) => Head::Carets(CaretsHeads::new(c, d, head_config, &mut params, &mut rng)?),
        (_, Some(b)) => {
            let cfg = BaselineConfig {
                kind: b,
                num_fc_layers: head_config.num_fc_layers,
                fc_hidden: head_config.fc_hidden,
                horizon: head_config.horizon,
            };
            Head::Baseline(BaselineHead::new(&cfg, d, &mut params, &mut rng)?)
        }
        _ => unreachable!("every variant is CaReTS or a baseline"),
    };
    let log_vars = [
        params.add("uncertainty.log_var_ca", Matrix::zeros((1, 1))),
        params.add("uncertainty.log_var_de", Matrix::zeros((1, 1))),
        params.add("uncertainty.log_var_op", Matrix::zeros((1, 1))),
    ];
    Ok(VariantModel {
        variant,
        encoder_config: encoder_config.clone(),
        head_config: head_config.clone(),
        input_len,
        trend_mode: TrendMode::Hard,
        encoder,
        head,
        params,
        log_vars,
    })
}

impl VariantModel {
    pub fn horizon(&self) -> usize {
        self.head_config.horizon
    }

    pub fn uncertainty(&self) -> UncertaintyState {
        let s = |i: usize| self.params.get(self.log_vars[i])[[0, 0]];
        UncertaintyState {
            log_var_ca: s(0),
            log_var_de: s(1),
            log_var_op: s(2),
        }
    }

    pub fn set_uncertainty(&mut self, state: UncertaintyState) {
        for (id, v) in self.log_vars.iter().zip(state.as_array()) {
            self.params.get_mut(*id)[[0, 0]] = v;
        }
    }

    /// Projects the log-variances into their allowed range.
    pub fn clamp_log_vars(&mut self) {
        for id in self.log_vars {
            self.params.get_mut(id).mapv_inplace(|v| v.clamp(-LOG_VAR_BOUND, LOG_VAR_BOUND));
        }
    }

    /// Encoder and head parameters, excluding the log-variances.
    pub fn head_params(&self) -> Vec<ParamId> {
        match &self.head {
            Head::Carets(h) => {
                let mut ids = h.trend.params();
                ids.extend(h.deviation.iter().flat_map(|m| m.params()));
                ids
            }
            Head::Baseline(h) => h.params(),
        }
    }

    fn check_input(&self, batch: &Batch) -> Result<()> {
        if batch.features.ncols() != self.input_len || batch.targets.ncols() != self.horizon() {
            return Err(CaretsError::Dimension(format!(
                "model expects {} inputs and {} targets, batch has {} and {}",
                self.input_len,
                self.horizon(),
                batch.features.ncols(),
                batch.targets.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &Batch, mode: TrendMode) -> ForwardVars {
        let x = g.input(batch.features.clone());
        let h = self.encoder.forward(g, store, x);
        match &self.head {
            Head::Carets(heads) => heads.forward(g, store, h, &batch.x_n, mode),
            Head::Baseline(head) => head.forward(g, store, h, &batch.x_n),
        }
    }

    /// Training objective: the uncertainty-weighted total in multi-task mode,
    /// the forecast loss alone otherwise (and always for baselines).
    pub fn objective(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        mode: TrainMode,
        reg_coeff: f64,
    ) -> Result<ObjectiveVars> {
        self.check_input(batch)?;
        let trend_mode = match mode {
            TrainMode::MultiTask => TrendMode::Hard,
            TrainMode::SingleTask => TrendMode::Continuous,
        };
        let forward = self.forward(g, store, batch, trend_mode);
        let l_op = lg::mse(g, forward.forecast, &batch.targets);
        let arch = match (mode, self.variant.arch()) {
            (TrainMode::MultiTask, Some(arch)) => arch,
            _ => {
                return Ok(ObjectiveVars {
                    total: l_op,
                    l_ca: None,
                    l_de: None,
                    l_op,
                    penalty: None,
                    forward,
                })
            }
        };
        let l_ca = match forward.trend.expect("CaReTS trend stream") {
            TrendVars::Scalar { probs, .. } => lg::bce(g, probs, &batch.labels),
            TrendVars::Pair { probs, .. } => lg::ce_pair(g, probs, &batch.labels),
        };
        let l_de = match forward.deviation.expect("CaReTS deviation stream") {
            DeviationVars::Abs(dev) => Some(lg::mse(g, dev, &batch.dev_abs)),
            DeviationVars::Directional { up, down } => Some(lg::directional(
                g,
                up,
                down,
                &batch.dev_up,
                &batch.dev_down,
                &batch.labels,
            )),
            DeviationVars::Signed(_) => None,
        };
        let s_ca = g.param(store, self.log_vars[0]);
        let s_op = g.param(store, self.log_vars[2]);
        let mut terms = vec![(l_ca, s_ca)];
        if arch == Arch::A {
            let s_de = g.param(store, self.log_vars[1]);
            terms.push((l_de.expect("architecture a has a deviation loss"), s_de));
        }
        terms.push((l_op, s_op));
        let (total, penalty) = lg::uncertainty_total(g, &terms, reg_coeff);
        Ok(ObjectiveVars {
            total,
            l_ca: Some(l_ca),
            l_de,
            l_op,
            penalty: Some(penalty),
            forward,
        })
    }

    /// Forecasts and directions. CaReTS directions come from the classifier;
    /// baseline directions are `sign(y_hat - x_n)` with ties counted as upward.
    pub fn predict(&self, samples: &[WindowSample]) -> Result<Predictions> {
        let mut out = Predictions::default();
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            let batch = Batch::new(&refs)?;
            self.check_input(&batch)?;
            let mut g = Graph::new();
            let fwd = self.forward(&mut g, &self.params, &batch, self.trend_mode);
            let y = g.value(fwd.forecast);
            let k = self.horizon();
            for (i, s) in chunk.iter().enumerate() {
                let row = y.row(i).to_vec();
                let dirs = match fwd.trend {
                    Some(TrendVars::Scalar { probs, .. }) => g
                        .value(probs)
                        .row(i)
                        .iter()
                        .map(|p| if *p >= 0.5 { 1 } else { -1 })
                        .collect(),
                    Some(TrendVars::Pair { probs, .. }) => {
                        let p = g.value(probs);
                        (0..k).map(|j| if p[[i, j]] >= p[[i, j + k]] { 1 } else { -1 }).collect()
                    }
                    None => row.iter().map(|v| if *v >= s.x_n { 1 } else { -1 }).collect(),
                };
                out.forecasts.push(row);
                out.directions.push(dirs);
            }
        }
        Ok(out)
    }

    /// Versioned key-value checkpoint; parameters are written in shortest
    /// round-trip form, so reloading is lossless.
    pub fn to_checkpoint(&self) -> String {
        let e = &self.encoder_config;
        let h = &self.head_config;
        let mut out = String::new();
        let _ = writeln!(out, "format = carets-checkpoint");
        let _ = writeln!(out, "version = 1");
        let _ = writeln!(out, "variant = {}", self.variant);
        let _ = writeln!(out, "encoder.kind = {}", e.kind);
        let _ = writeln!(out, "encoder.num_layers = {}", e.num_layers);
        let _ = writeln!(out, "encoder.hidden_dim = {}", e.hidden_dim);
        let _ = writeln!(out, "encoder.kernel_size = {}", e.kernel_size);
        let _ = writeln!(out, "encoder.padding = {}", e.padding);
        let _ = writeln!(out, "encoder.num_heads = {}", e.num_heads);
        let _ = writeln!(out, "encoder.positional_encoding = {}", e.positional_encoding);
        let _ = writeln!(out, "head.num_fc_layers = {}", h.num_fc_layers);
        let _ = writeln!(out, "head.fc_hidden = {}", h.fc_hidden);
        let _ = writeln!(out, "head.horizon = {}", h.horizon);
        let _ = writeln!(out, "input_len = {}", self.input_len);
        let mode = match self.trend_mode {
            TrendMode::Hard => "hard",
            TrendMode::Continuous => "continuous",
        };
        let _ = writeln!(out, "trend_mode = {mode}");
        for id in self.params.ids() {
            let m = self.params.get(id);
            let values: Vec<String> = m.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(
                out,
                "param.{} = {} {} {}",
                self.params.name(id),
                m.nrows(),
                m.ncols(),
                values.join(" ")
            );
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let map = kv::parse(text).map_err(|e| CaretsError::Checkpoint(e.to_string()))?;
        let get = |key: &str| {
            map.get(key)
                .map(String::as_str)
                .ok_or_else(|| CaretsError::Checkpoint(format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| CaretsError::Checkpoint(format!("`{key}` is not an integer")))
        };
        if get("format")? != "carets-checkpoint" {
            return Err(CaretsError::Checkpoint("not a checkpoint file".into()));
        }
        if get("version")? != "1" {
            return Err(CaretsError::Checkpoint(format!("unsupported version {}", get("version")?)));
        }
        let variant: Variant = get("variant")?.parse()?;
        let mut enc = EncoderConfig::new(get("encoder.kind")?.parse::<EncoderKind>()?);
        enc.num_layers = num("encoder.num_layers")?;
        enc.hidden_dim = num("encoder.hidden_dim")?;
        enc.kernel_size = num("encoder.kernel_size")?;
        enc.padding = num("encoder.padding")?;
        enc.num_heads = num("encoder.num_heads")?;
        enc.positional_encoding = get("encoder.positional_encoding")? == "true";
        let head = HeadConfig {
            num_fc_layers: num("head.num_fc_layers")?,
            fc_hidden: num("head.fc_hidden")?,
            horizon: num("head.horizon")?,
        };
        let mut model = build_variant(variant, &enc, &head, num("input_len")?, 0)?;
        model.trend_mode = match get("trend_mode")? {
            "hard" => TrendMode::Hard,
            "continuous" => TrendMode::Continuous,
            other => return Err(CaretsError::Checkpoint(format!("unknown trend_mode `{other}`"))),
        };
        let stored = map.keys().filter(|k| k.starts_with("param.")).count();
        if stored != model.params.len() {
            return Err(CaretsError::Checkpoint(format!(
                "{stored} parameters stored, model has {}",
                model.params.len()
            )));
        }
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let key = format!("param.{}", model.params.name(id));
            let mut fields = get(&key)?.split_whitespace();
            let mut dim = || -> Result<usize> {
                fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| CaretsError::Checkpoint(format!("`{key}` has a bad shape")))
            };
            let shape = (dim()?, dim()?);
            if shape != model.params.get(id).dim() {
                return Err(CaretsError::Checkpoint(format!(
                    "`{key}` has shape {shape:?}, expected {:?}",
                    model.params.get(id).dim()
                )));
            }
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CaretsError::Checkpoint(format!("`{key}` has a bad value")))?;
            *model.params.get_mut(id) = Matrix::from_shape_vec(shape, values)
                .map_err(|_| CaretsError::Checkpoint(format!("`{key}` has the wrong length")))?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_params, FdOptions};
    use rand::Rng;

    fn samples(n: usize, input_len: usize, k: usize, seed: u64) -> Vec<WindowSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let f: Vec<f64> = (0..input_len).map(|_| rng.gen_range(0.0..1.0)).collect();
                let y: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
                WindowSample::from_parts(f, y)
            })
            .collect()
    }

    fn small(kind: EncoderKind) -> EncoderConfig {
        let mut c = EncoderConfig::new(kind).with_hidden_dim(8);
        c.num_heads = 2;
        c
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("CaReTS2".parse::<Variant>().unwrap(), Variant::Carets2);
        assert!("carets5".parse::<Variant>().is_err());
    }

    #[test]
    fn every_variant_builds_with_every_encoder() {
        for v in Variant::ALL {
            for kind in EncoderKind::ALL {
                let m = build_variant(v, &EncoderConfig::new(kind), &HeadConfig::new(6), 15, 1).unwrap();
                let p = m.predict(&samples(3, 15, 6, 2)).unwrap();
                assert_eq!(p.forecasts.len(), 3);
                assert!(p.forecasts.iter().all(|f| f.len() == 6 && f.iter().all(|v| v.is_finite())));
            }
        }
    }

    #[test]
    fn table_structure_of_variants() {
        let enc = EncoderConfig::new(EncoderKind::Transformer);
        let m = build_variant(Variant::Carets2, &enc, &HeadConfig::new(6), 15, 0).unwrap();
        match &m.head {
            Head::Carets(h) => assert_eq!((h.trend.output_dim(), h.deviation.len()), (6, 2)),
            _ => panic!(),
        }
        let m = build_variant(Variant::Carets4, &EncoderConfig::new(EncoderKind::Cnn), &HeadConfig::new(6), 15, 0).unwrap();
        match &m.head {
            Head::Carets(h) => {
                assert_eq!(h.trend.output_dim(), 12);
                assert_eq!(h.deviation[0].input_dim(), 76);
            }
            _ => panic!(),
        }
        let m = build_variant(Variant::Carets1, &EncoderConfig::new(EncoderKind::Lstm), &HeadConfig::new(6), 15, 0).unwrap();
        match &m.head {
            Head::Carets(h) => assert_eq!(h.deviation.len(), 1),
            _ => panic!(),
        }
    }

    #[test]
    fn baseline_directions_use_tie_rule() {
        let mut m = build_variant(Variant::Baseline3, &small(EncoderKind::Cnn), &HeadConfig::new(2), 5, 0).unwrap();
        m.params.fill(0.0);
        let s = samples(4, 5, 2, 9);
        let p = m.predict(&s).unwrap();
        for (f, smp) in p.forecasts.iter().zip(&s) {
            assert!(f.iter().all(|v| *v == smp.x_n));
        }
        assert!(p.directions.iter().flatten().all(|d| *d == 1));
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        for v in [Variant::Carets4, Variant::Baseline2] {
            let mut m = build_variant(v, &small(EncoderKind::Transformer), &HeadConfig::new(3), 7, 42).unwrap();
            m.set_uncertainty(UncertaintyState {
                log_var_ca: -0.123456789012345,
                log_var_de: 1.0 / 3.0,
                log_var_op: 9.99,
            });
            m.trend_mode = TrendMode::Continuous;
            let text = m.to_checkpoint();
            let back = VariantModel::from_checkpoint(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_checkpoint(), text);
        }
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let m = build_variant(Variant::Carets1, &small(EncoderKind::Lstm), &HeadConfig::new(2), 5, 0).unwrap();
        let text = m.to_checkpoint();
        assert!(VariantModel::from_checkpoint(&text.replace("version = 1", "version = 9")).is_err());
        assert!(VariantModel::from_checkpoint(&text.replace("format = carets-checkpoint", "format = x")).is_err());
        let truncated: String = text.lines().filter(|l| !l.starts_with("param.trend.0.bias")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(VariantModel::from_checkpoint(&truncated), Err(CaretsError::Checkpoint(_))));
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let data = samples(4, 6, 3, 5);
        let refs: Vec<&WindowSample> = data.iter().collect();
        let batch = Batch::new(&refs).unwrap();
        for v in [Variant::Carets3, Variant::Carets4, Variant::Baseline2] {
            let mut m = build_variant(v, &small(EncoderKind::Lstm), &HeadConfig { num_fc_layers: 2, fc_hidden: 8, horizon: 3 }, 6, 3).unwrap();
            m.set_uncertainty(UncertaintyState { log_var_ca: 0.3, log_var_de: -0.2, log_var_op: 0.1 });
            let report = check_params(
                &m.params,
                |store, g| m.objective(g, store, &batch, TrainMode::MultiTask, 0.01).unwrap().total,
                &FdOptions::default(),
            );
            assert!(report.max_rel_error < 1e-4, "{v:?}: {report:?}");
        }
    }

    #[test]
    fn single_task_objective_is_forecast_loss() {
        let data = samples(5, 6, 3, 8);
        let refs: Vec<&WindowSample> = data.iter().collect();
        let batch = Batch::new(&refs).unwrap();
        let m = build_variant(Variant::Carets2, &small(EncoderKind::Cnn), &HeadConfig::new(3), 6, 3).unwrap();
        let mut g = Graph::new();
        let obj = m.objective(&mut g, &m.params, &batch, TrainMode::SingleTask, 0.01).unwrap();
        assert!(obj.l_ca.is_none() && obj.penalty.is_none());
        assert_eq!(g.scalar(obj.total), g.scalar(obj.l_op));
        let grads = g.backward(obj.total);
        let Head::Carets(h) = &m.head else { panic!() };
        let trend_grad = grads.param(h.trend.params()[0]).unwrap();
        assert!(trend_grad.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = build_variant(Variant::Carets1, &small(EncoderKind::Cnn), &HeadConfig::new(3), 6, 0).unwrap();
        assert!(matches!(m.predict(&samples(2, 5, 3, 0)), Err(CaretsError::Dimension(_))));
    }
}

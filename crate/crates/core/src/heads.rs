//! Trend-classification and deviation-regression streams of the four CaReTS
//! variants, and the rules fusing them into a forecast around `x_n`.
//!
//! | variant | arch | trend                    | deviation                  | forecast                                   |
//! |---------|------|--------------------------|----------------------------|--------------------------------------------|
//! | 1       | a    | sigmoid `p`, hard `d`    | `delta >= 0`               | `x_n + d * delta`                          |
//! | 2       | a    | sigmoid `p`, hard `d`    | `delta_up, delta_down >= 0`| `x_n + delta_up` or `x_n - delta_down`     |
//! | 3       | a    | softmax `(p_up, p_down)` | `delta_up, delta_down >= 0`| `x_n + p_up delta_up - p_down delta_down`  |
//! | 4       | b    | softmax `(p_up, p_down)` | signed `delta` from `[h, p]`| `x_n + delta`                             |
//!
//! Hard decisions are constants during backpropagation, so the trend stream
//! of variants 1 and 2 learns from its classification loss only. In
//! [`TrendMode::Continuous`] (single-task training) variant 1 uses `tanh(z)`
//! in place of the sign and variant 2 uses variant 3's soft fusion with the
//! sigmoid probability.

use rand_chacha::ChaCha8Rng;

use crate::error::{CaretsError, Result};
use crate::nn::Mlp;
use crate::tape::{self, Graph, Matrix, ParamStore, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub num_fc_layers: usize,
    pub fc_hidden: usize,
    pub horizon: usize,
}

impl HeadConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            num_fc_layers: 2,
            fc_hidden: 64,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_fc_layers == 0 || self.horizon == 0 || self.fc_hidden == 0 {
            return Err(CaretsError::Config(
                "heads need num_fc_layers, fc_hidden and horizon >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaretsVariant {
    One,
    Two,
    Three,
    Four,
}

/// How hard trend decisions enter the forecast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrendMode {
    #[default]
    Hard,
    Continuous,
}

pub fn trend_sigmoid(z: f64) -> f64 {
    tape::sigmoid(z)
}

/// `+1` when `p >= 0.5`, else `-1`.
pub fn trend_decide(p: f64) -> i8 {
    if p >= 0.5 {
        1
    } else {
        -1
    }
}

pub fn trend_softmax(z_up: f64, z_down: f64) -> (f64, f64) {
    tape::softmax_pair(z_up, z_down)
}

fn check_lengths(n: usize, others: &[usize]) -> Result<()> {
    if others.iter().any(|m| *m != n) {
        return Err(CaretsError::Dimension(format!(
            "fusion inputs have lengths {n} and {others:?}"
        )));
    }
    Ok(())
}

fn check_non_negative(name: &str, v: &[f64]) -> Result<()> {
    if let Some(bad) = v.iter().find(|d| **d < 0.0) {
        return Err(CaretsError::Dimension(format!("{name} has negative entry {bad}")));
    }
    Ok(())
}

/// `y = x_n + d * delta`.
pub fn fuse_carets1(x_n: f64, decisions: &[i8], deviation: &[f64]) -> Result<Vec<f64>> {
    check_lengths(decisions.len(), &[deviation.len()])?;
    check_non_negative("deviation", deviation)?;
    Ok(decisions
        .iter()
        .zip(deviation)
        .map(|(d, delta)| x_n + f64::from(*d) * delta)
        .collect())
}

/// Picks the deviation matching the predicted direction.
pub fn fuse_carets2(x_n: f64, decisions: &[i8], up: &[f64], down: &[f64]) -> Result<Vec<f64>> {
    check_lengths(decisions.len(), &[up.len(), down.len()])?;
    check_non_negative("up deviation", up)?;
    check_non_negative("down deviation", down)?;
    Ok((0..decisions.len())
        .map(|k| if decisions[k] == 1 { x_n + up[k] } else { x_n - down[k] })
        .collect())
}

/// Probability-weighted blend of both deviations.
pub fn fuse_carets3(x_n: f64, p_up: &[f64], up: &[f64], down: &[f64]) -> Result<Vec<f64>> {
    check_lengths(p_up.len(), &[up.len(), down.len()])?;
    check_non_negative("up deviation", up)?;
    check_non_negative("down deviation", down)?;
    Ok((0..p_up.len())
        .map(|k| x_n + p_up[k] * up[k] - (1.0 - p_up[k]) * down[k])
        .collect())
}

/// `y = x_n + delta` with a signed deviation.
pub fn fuse_carets4(x_n: f64, deviation: &[f64]) -> Vec<f64> {
    deviation.iter().map(|d| x_n + d).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrendProbs {
    Scalar(Vec<f64>),
    Pair(Vec<(f64, f64)>),
}

impl TrendProbs {
    /// Upward decision per step: `p >= 0.5` or `p_up >= p_down`.
    pub fn decisions(&self) -> Vec<i8> {
        match self {
            TrendProbs::Scalar(p) => p.iter().map(|p| trend_decide(*p)).collect(),
            TrendProbs::Pair(p) => p.iter().map(|(u, d)| if u >= d { 1 } else { -1 }).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendOutput {
    pub logits: Vec<f64>,
    pub probs: TrendProbs,
    pub decisions: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DeviationOutput {
    Abs(Vec<f64>),
    Directional { up: Vec<f64>, down: Vec<f64> },
    Signed(Vec<f64>),
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub forecast: Var,
    pub trend: Option<TrendVars>,
    pub deviation: Option<DeviationVars>,
    /// Output of a baseline's fusion layer before `x_n` is added.
    pub residual: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub enum TrendVars {
    /// `(batch, K)` logits and sigmoid probabilities.
    Scalar { logits: Var, probs: Var },
    /// `(batch, 2K)` logits and probabilities laid out `[up | down]`.
    Pair { logits: Var, probs: Var },
}

impl TrendVars {
    pub fn probs(&self) -> Var {
        match self {
            TrendVars::Scalar { probs, .. } | TrendVars::Pair { probs, .. } => *probs,
        }
    }

    pub fn logits(&self) -> Var {
        match self {
            TrendVars::Scalar { logits, .. } | TrendVars::Pair { logits, .. } => *logits,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum DeviationVars {
    Abs(Var),
    Directional { up: Var, down: Var },
    Signed(Var),
}

/// Classification and regression streams of one CaReTS variant.
#[derive(Clone, Debug, PartialEq)]
pub struct CaretsHeads {
    pub variant: CaretsVariant,
    pub config: HeadConfig,
    pub feature_dim: usize,
    pub trend: Mlp,
    /// One head (variants 1 and 4) or `[up, down]` (variants 2 and 3).
    pub deviation: Vec<Mlp>,
}

impl CaretsHeads {
    pub fn new(
        variant: CaretsVariant,
        feature_dim: usize,
        config: &HeadConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (k, hid, n) = (config.horizon, config.fc_hidden, config.num_fc_layers);
        let trend_width = match variant {
            CaretsVariant::One | CaretsVariant::Two => k,
            CaretsVariant::Three | CaretsVariant::Four => 2 * k,
        };
        let trend = Mlp::new(store, rng, "trend", feature_dim, hid, trend_width, n);
        let deviation = match variant {
            CaretsVariant::One => vec![Mlp::new(store, rng, "deviation", feature_dim, hid, k, n)],
            CaretsVariant::Two | CaretsVariant::Three => vec![
                Mlp::new(store, rng, "deviation_up", feature_dim, hid, k, n),
                Mlp::new(store, rng, "deviation_down", feature_dim, hid, k, n),
            ],
            CaretsVariant::Four => vec![Mlp::new(
                store,
                rng,
                "deviation",
                feature_dim + 2 * k,
                hid,
                k,
                n,
            )],
        };
        Ok(Self {
            variant,
            config: config.clone(),
            feature_dim,
            trend,
            deviation,
        })
    }

    /// `h: (batch, d)`, `x_n: (batch, K)` (latest observation repeated per step).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        x_n: &Matrix,
        mode: TrendMode,
    ) -> ForwardVars {
        let k = self.config.horizon;
        let logits = self.trend.forward(g, store, h);
        let xn = g.input(x_n.clone());
        match self.variant {
            CaretsVariant::One => {
                let probs = g.sigmoid(logits);
                let raw = self.deviation[0].forward(g, store, h);
                let dev = g.relu(raw);
                let sign = match mode {
                    TrendMode::Hard => {
                        let s = g.value(probs).mapv(|p| f64::from(trend_decide(p)));
                        g.input(s)
                    }
                    TrendMode::Continuous => g.tanh(logits),
                };
                let step = g.mul(sign, dev);
                ForwardVars {
                    forecast: g.add(xn, step),
                    trend: Some(TrendVars::Scalar { logits, probs }),
                    deviation: Some(DeviationVars::Abs(dev)),
                    residual: None,
                }
            }
            CaretsVariant::Two | CaretsVariant::Three => {
                let (probs, p_up, trend) = if self.variant == CaretsVariant::Two {
                    let probs = g.sigmoid(logits);
                    let p_up = match mode {
                        TrendMode::Hard => {
                            let m = g.value(probs).mapv(|p| if trend_decide(p) == 1 { 1.0 } else { 0.0 });
                            g.input(m)
                        }
                        TrendMode::Continuous => probs,
                    };
                    (probs, p_up, TrendVars::Scalar { logits, probs })
                } else {
                    let probs = g.softmax_pair(logits);
                    let p_up = g.cols(probs, 0, k);
                    (probs, p_up, TrendVars::Pair { logits, probs })
                };
                let _ = probs;
                let raw_up = self.deviation[0].forward(g, store, h);
                let up = g.relu(raw_up);
                let raw_down = self.deviation[1].forward(g, store, h);
                let down = g.relu(raw_down);
                let p_down = g.affine(p_up, -1.0, 1.0);
                let gain = g.mul(p_up, up);
                let loss = g.mul(p_down, down);
                let y = g.add(xn, gain);
                ForwardVars {
                    forecast: g.sub(y, loss),
                    trend: Some(trend),
                    deviation: Some(DeviationVars::Directional { up, down }),
                    residual: None,
                }
            }
            CaretsVariant::Four => {
                let probs = g.softmax_pair(logits);
                let fused = g.concat(&[h, probs]);
                let dev = self.deviation[0].forward(g, store, fused);
                ForwardVars {
                    forecast: g.add(xn, dev),
                    trend: Some(TrendVars::Pair { logits, probs }),
                    deviation: Some(DeviationVars::Signed(dev)),
                    residual: None,
                }
            }
        }
    }

    /// Runs the heads on one feature vector and returns plain values.
    pub fn predict(
        &self,
        store: &ParamStore,
        h: &[f64],
        x_n: f64,
        mode: TrendMode,
    ) -> Result<(TrendOutput, DeviationOutput, Vec<f64>)> {
        let expected = self.trend.input_dim();
        if h.len() != expected {
            return Err(CaretsError::Dimension(format!(
                "feature vector has {} entries, heads expect {expected}",
                h.len()
            )));
        }
        if self.variant == CaretsVariant::Four {
            let reg_in = self.deviation[0].input_dim();
            let fused = h.len() + 2 * self.config.horizon;
            if fused != reg_in {
                return Err(CaretsError::Dimension(format!(
                    "[h, p] has {fused} entries, regression stream expects {reg_in}"
                )));
            }
        }
        let k = self.config.horizon;
        let mut g = Graph::new();
        let hv = g.input(Matrix::from_shape_vec((1, h.len()), h.to_vec()).unwrap());
        let out = self.forward(&mut g, store, hv, &Matrix::from_elem((1, k), x_n), mode);
        let row = |v: Var| g.value(v).row(0).to_vec();
        let trend = out.trend.expect("CaReTS variants have a trend stream");
        let logits = row(trend.logits());
        let p = row(trend.probs());
        let probs = match trend {
            TrendVars::Scalar { .. } => TrendProbs::Scalar(p),
            TrendVars::Pair { .. } => TrendProbs::Pair((0..k).map(|i| (p[i], p[i + k])).collect()),
        };
        let deviation = match out.deviation.expect("CaReTS variants have a deviation stream") {
            DeviationVars::Abs(v) => DeviationOutput::Abs(row(v)),
            DeviationVars::Directional { up, down } => DeviationOutput::Directional {
                up: row(up),
                down: row(down),
            },
            DeviationVars::Signed(v) => DeviationOutput::Signed(row(v)),
        };
        let decisions = probs.decisions();
        Ok((
            TrendOutput {
                logits,
                probs,
                decisions,
            },
            deviation,
            row(out.forecast),
        ))
    }
}

//! Interchangeable temporal encoders mapping an input window to a
//! `hidden_dim`-wide feature vector.
//!
//! The `n` input features are read as a length-`n`, single-channel sequence.
//! Internally a batch of sequences is a `(batch * n, channels)` matrix.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::error::{CaretsError, Result};
use crate::nn::{init_uniform, Linear};
use crate::tape::{Graph, Matrix, ParamId, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Cnn,
    Lstm,
    Transformer,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [EncoderKind::Cnn, EncoderKind::Lstm, EncoderKind::Transformer];
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Transformer => "transformer",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = CaretsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(EncoderKind::Cnn),
            "lstm" => Ok(EncoderKind::Lstm),
            "transformer" => Ok(EncoderKind::Transformer),
            _ => Err(CaretsError::Config(format!("unknown encoder `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// CNN only.
    pub kernel_size: usize,
    /// CNN only.
    pub padding: usize,
    /// Transformer only.
    pub num_heads: usize,
    /// Transformer only; disabling it is useful for symmetry tests.
    pub positional_encoding: bool,
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind) -> Self {
        Self {
            kind,
            num_layers: 2,
            hidden_dim: 64,
            kernel_size: 3,
            padding: 1,
            num_heads: 4,
            positional_encoding: true,
        }
    }

    pub fn with_hidden_dim(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_num_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(CaretsError::Config(
                "encoder needs num_layers >= 1 and hidden_dim >= 1".into(),
            ));
        }
        match self.kind {
            EncoderKind::Cnn => {
                if self.kernel_size == 0 || 2 * self.padding + 1 != self.kernel_size {
                    return Err(CaretsError::Config(format!(
                        "kernel_size {} with padding {} does not preserve sequence length",
                        self.kernel_size, self.padding
                    )));
                }
            }
            EncoderKind::Transformer => {
                if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
                    return Err(CaretsError::Config(format!(
                        "hidden_dim {} is not divisible by num_heads {}",
                        self.hidden_dim, self.num_heads
                    )));
                }
            }
            EncoderKind::Lstm => {}
        }
        Ok(())
    }

    fn expect_kind(&self, kind: EncoderKind) -> Result<()> {
        if self.kind != kind {
            return Err(CaretsError::Config(format!(
                "{kind} encoder built from a {} config",
                self.kind
            )));
        }
        self.validate()
    }
}

/// Encoder output `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Stacked length-preserving 1-D convolutions (ReLU between layers) followed
/// by global average pooling. Layer 0 maps 1 -> d channels, later layers d -> d.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnEncoder {
    pub config: EncoderConfig,
    /// Each conv is stored unrolled as a `(kernel * c_in, c_out)` linear map.
    pub convs: Vec<Linear>,
}

impl CnnEncoder {
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.expect_kind(EncoderKind::Cnn)?;
        let d = config.hidden_dim;
        let convs = (0..config.num_layers)
            .map(|i| {
                let c_in = if i == 0 { 1 } else { d };
                Linear::new(store, rng, &format!("encoder.conv{i}"), config.kernel_size * c_in, d)
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            convs,
        })
    }

    /// Output sequence (before pooling) as `(batch * len, d)`.
    pub fn conv_stack(&self, g: &mut Graph, store: &ParamStore, seq: Var, len: usize) -> Var {
        let mut h = seq;
        for (i, conv) in self.convs.iter().enumerate() {
            if i > 0 {
                h = g.relu(h);
            }
            let taps: Vec<Var> = (0..self.config.kernel_size)
                .map(|j| g.seq_shift(h, len, j as isize - self.config.padding as isize))
                .collect();
            let cols = g.concat(&taps);
            h = conv.forward(g, store, cols);
        }
        h
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var, len: usize) -> Var {
        let h = self.conv_stack(g, store, seq, len);
        g.seq_mean(h, len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// `(input, 4d)`, gate order input, forget, cell, output.
    pub w_ih: ParamId,
    /// `(d, 4d)`.
    pub w_hh: ParamId,
    /// `(1, 4d)`.
    pub bias: ParamId,
}

/// Stacked LSTM; the readout is the top layer's final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmEncoder {
    pub config: EncoderConfig,
    pub layers: Vec<LstmLayer>,
}

impl LstmEncoder {
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.expect_kind(EncoderKind::Lstm)?;
        let d = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|i| {
                let input = if i == 0 { 1 } else { d };
                LstmLayer {
                    w_ih: store.add(format!("encoder.lstm{i}.w_ih"), init_uniform(rng, d, (input, 4 * d))),
                    w_hh: store.add(format!("encoder.lstm{i}.w_hh"), init_uniform(rng, d, (d, 4 * d))),
                    bias: store.add(format!("encoder.lstm{i}.bias"), init_uniform(rng, d, (1, 4 * d))),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var, len: usize) -> Var {
        let d = self.config.hidden_dim;
        let batch = g.shape(seq).0 / len;
        let mut input = seq;
        let mut last = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let w_ih = g.param(store, layer.w_ih);
            let w_hh = g.param(store, layer.w_hh);
            let bias = g.param(store, layer.bias);
            // input projections for every step at once
            let projected = g.matmul(input, w_ih);
            let projected = g.add_row(projected, bias);
            let mut h = g.input(Matrix::zeros((batch, d)));
            let mut c = g.input(Matrix::zeros((batch, d)));
            let mut outputs = Vec::with_capacity(len);
            for t in 0..len {
                let xt = g.seq_step(projected, len, t);
                let rec = g.matmul(h, w_hh);
                let gates = g.add(xt, rec);
                let i_pre = g.cols(gates, 0, d);
                let f_pre = g.cols(gates, d, d);
                let c_pre = g.cols(gates, 2 * d, d);
                let o_pre = g.cols(gates, 3 * d, d);
                let i_gate = g.sigmoid(i_pre);
                let f_gate = g.sigmoid(f_pre);
                let cand = g.tanh(c_pre);
                let o_gate = g.sigmoid(o_pre);
                let keep = g.mul(f_gate, c);
                let write = g.mul(i_gate, cand);
                c = g.add(keep, write);
                let ct = g.tanh(c);
                h = g.mul(o_gate, ct);
                outputs.push(h);
            }
            last = Some(h);
            if li + 1 < self.layers.len() {
                input = g.stack_steps(&outputs);
            }
        }
        last.expect("at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerLayer {
    /// Fused query/key/value projection `d -> 3d`.
    pub qkv: Linear,
    pub attn_out: Linear,
    pub norm1_gain: ParamId,
    pub norm1_bias: ParamId,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2_gain: ParamId,
    pub norm2_bias: ParamId,
}

/// Input projection, sinusoidal positions, post-norm encoder layers
/// (self-attention and a ReLU feed-forward block of width `d`), mean pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerEncoder {
    pub config: EncoderConfig,
    pub input_proj: Linear,
    pub layers: Vec<TransformerLayer>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl TransformerEncoder {
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.expect_kind(EncoderKind::Transformer)?;
        let d = config.hidden_dim;
        let input_proj = Linear::new(store, rng, "encoder.input_proj", 1, d);
        let layers = (0..config.num_layers)
            .map(|i| {
                let p = format!("encoder.layer{i}");
                TransformerLayer {
                    qkv: Linear::new(store, rng, &format!("{p}.qkv"), d, 3 * d),
                    attn_out: Linear::new(store, rng, &format!("{p}.attn_out"), d, d),
                    norm1_gain: store.add(format!("{p}.norm1.gain"), Matrix::ones((1, d))),
                    norm1_bias: store.add(format!("{p}.norm1.bias"), Matrix::zeros((1, d))),
                    ff_in: Linear::new(store, rng, &format!("{p}.ff_in"), d, d),
                    ff_out: Linear::new(store, rng, &format!("{p}.ff_out"), d, d),
                    norm2_gain: store.add(format!("{p}.norm2.gain"), Matrix::ones((1, d))),
                    norm2_bias: store.add(format!("{p}.norm2.bias"), Matrix::zeros((1, d))),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            input_proj,
            layers,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var, len: usize) -> Var {
        let d = self.config.hidden_dim;
        let batch = g.shape(seq).0 / len;
        let mut x = self.input_proj.forward(g, store, seq);
        if self.config.positional_encoding {
            let pe = positional_encoding(len, d);
            let mut tiled = Matrix::zeros((batch * len, d));
            for b in 0..batch {
                tiled
                    .slice_mut(ndarray::s![b * len..(b + 1) * len, ..])
                    .assign(&pe);
            }
            let pe = g.input(tiled);
            x = g.add(x, pe);
        }
        for layer in &self.layers {
            let qkv = layer.qkv.forward(g, store, x);
            let q = g.cols(qkv, 0, d);
            let k = g.cols(qkv, d, d);
            let v = g.cols(qkv, 2 * d, d);
            let att = g.attention(q, k, v, len, self.config.num_heads);
            let att = layer.attn_out.forward(g, store, att);
            let res = g.add(x, att);
            let gain = g.param(store, layer.norm1_gain);
            let bias = g.param(store, layer.norm1_bias);
            let x1 = g.layer_norm(res, gain, bias, LAYER_NORM_EPS);
            let ff = layer.ff_in.forward(g, store, x1);
            let ff = g.relu(ff);
            let ff = layer.ff_out.forward(g, store, ff);
            let res = g.add(x1, ff);
            let gain = g.param(store, layer.norm2_gain);
            let bias = g.param(store, layer.norm2_bias);
            x = g.layer_norm(res, gain, bias, LAYER_NORM_EPS);
        }
        g.seq_mean(x, len)
    }
}

/// Fixed sinusoidal encodings: `sin(t / 10000^(2i/d))` on even columns,
/// `cos` of the same angle on odd columns.
pub fn positional_encoding(len: usize, d: usize) -> Matrix {
    Matrix::from_shape_fn((len, d), |(t, c)| {
        let i = (c / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * i / d as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Cnn(CnnEncoder),
    Lstm(LstmEncoder),
    Transformer(TransformerEncoder),
}

impl Encoder {
    pub fn new(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(match config.kind {
            EncoderKind::Cnn => Encoder::Cnn(CnnEncoder::new(config, store, rng)?),
            EncoderKind::Lstm => Encoder::Lstm(LstmEncoder::new(config, store, rng)?),
            EncoderKind::Transformer => Encoder::Transformer(TransformerEncoder::new(config, store, rng)?),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        match self {
            Encoder::Cnn(e) => &e.config,
            Encoder::Lstm(e) => &e.config,
            Encoder::Transformer(e) => &e.config,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.config().hidden_dim
    }

    /// `x: (batch, n)` -> `(batch, hidden_dim)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let (batch, len) = g.shape(x);
        let seq = g.reshape(x, batch * len, 1);
        match self {
            Encoder::Cnn(e) => e.forward(g, store, seq, len),
            Encoder::Lstm(e) => e.forward(g, store, seq, len),
            Encoder::Transformer(e) => e.forward(g, store, seq, len),
        }
    }

    /// Encodes a single window.
    pub fn encode(&self, store: &ParamStore, x: &[f64]) -> FeatureVector {
        let mut g = Graph::new();
        let input = g.input(Matrix::from_shape_vec((1, x.len()), x.to_vec()).unwrap());
        let h = self.forward(&mut g, store, input);
        FeatureVector(g.value(h).row(0).to_vec())
    }
}

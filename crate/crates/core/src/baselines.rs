//! Regression-only control models and the persistence reference.
//!
//! * Baseline1: one MLP from the feature vector straight to the `K` forecasts.
//! * Baseline2: two CaReTS-shaped streams (`K` outputs each) concatenated and
//!   mapped to the forecast by a single linear layer.
//! * Baseline3: as Baseline2, but the linear layer emits a change `delta` and
//!   the forecast is `x_n + delta`.

use rand_chacha::ChaCha8Rng;

use crate::error::{CaretsError, Result};
use crate::heads::ForwardVars;
use crate::nn::{Linear, Mlp};
use crate::tape::{Graph, Matrix, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    B1,
    B2,
    B3,
    Persistence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub num_fc_layers: usize,
    pub fc_hidden: usize,
    pub horizon: usize,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, horizon: usize) -> Self {
        Self {
            kind,
            num_fc_layers: 2,
            fc_hidden: 64,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_fc_layers == 0 || self.horizon == 0 || self.fc_hidden == 0 {
            return Err(CaretsError::Config(
                "baselines need num_fc_layers, fc_hidden and horizon >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Repeats the latest observation over the horizon.
pub fn persistence_forecast(x_n: f64, horizon: usize) -> Vec<f64> {
    vec![x_n; horizon]
}

/// Trainable head of Baseline1, 2 or 3.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineHead {
    pub kind: BaselineKind,
    pub horizon: usize,
    pub streams: Vec<Mlp>,
    pub fusion: Option<Linear>,
}

impl BaselineHead {
    pub fn new(
        config: &BaselineConfig,
        feature_dim: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (k, hid, n) = (config.horizon, config.fc_hidden, config.num_fc_layers);
        let (streams, fusion) = match config.kind {
            BaselineKind::B1 => (vec![Mlp::new(store, rng, "output", feature_dim, hid, k, n)], None),
            BaselineKind::B2 | BaselineKind::B3 => (
                vec![
                    Mlp::new(store, rng, "stream_a", feature_dim, hid, k, n),
                    Mlp::new(store, rng, "stream_b", feature_dim, hid, k, n),
                ],
                Some(Linear::new(store, rng, "fusion", 2 * k, k)),
            ),
            BaselineKind::Persistence => {
                return Err(CaretsError::Config("persistence has no trainable head".into()))
            }
        };
        Ok(Self {
            kind: config.kind,
            horizon: k,
            streams,
            fusion,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var, x_n: &Matrix) -> ForwardVars {
        let out = match self.kind {
            BaselineKind::B1 => self.streams[0].forward(g, store, h),
            _ => {
                let a = self.streams[0].forward(g, store, h);
                let b = self.streams[1].forward(g, store, h);
                let joined = g.concat(&[a, b]);
                self.fusion.as_ref().expect("dual-stream fusion layer").forward(g, store, joined)
            }
        };
        if self.kind == BaselineKind::B3 {
            let xn = g.input(x_n.clone());
            ForwardVars {
                forecast: g.add(xn, out),
                trend: None,
                deviation: None,
                residual: Some(out),
            }
        } else {
            ForwardVars {
                forecast: out,
                trend: None,
                deviation: None,
                residual: None,
            }
        }
    }

    pub fn predict(&self, store: &ParamStore, h: &[f64], x_n: f64) -> Vec<f64> {
        let mut g = Graph::new();
        let hv = g.input(Matrix::from_shape_vec((1, h.len()), h.to_vec()).unwrap());
        let out = self.forward(&mut g, store, hv, &Matrix::from_elem((1, self.horizon), x_n));
        g.value(out.forecast).row(0).to_vec()
    }

    pub fn params(&self) -> Vec<crate::tape::ParamId> {
        let mut ids: Vec<_> = self.streams.iter().flat_map(|s| s.params()).collect();
        if let Some(f) = &self.fusion {
            ids.extend(f.params());
        }
        ids
    }
}

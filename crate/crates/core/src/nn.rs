//! Dense layers, parameter initialisation and the Adam optimiser.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Graph, Matrix, ParamId, ParamStore, Var};

/// Uniform fan-in initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: (usize, usize)) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Affine map `x W + b` with `W: (input, output)` and `b: (1, output)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        output: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init_uniform(rng, input, (input, output)),
        );
        let bias = store.add(format!("{name}.bias"), init_uniform(rng, input, (1, output)));
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Stack of linear layers with ReLU between consecutive layers and no
/// activation on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `num_layers` linear maps: `input -> hidden -> ... -> hidden -> output`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        num_layers: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(num_layers);
        let mut width = input;
        for i in 0..num_layers {
            let out = if i + 1 == num_layers { output } else { hidden };
            layers.push(Linear::new(store, rng, &format!("{name}.{i}"), width, out));
            width = out;
        }
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = g.relu(h);
            }
            h = layer.forward(g, store, h);
        }
        h
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (first, second): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|s| (Matrix::zeros(s), Matrix::zeros(s)))
            .unzip();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first,
            second,
        }
    }

    pub fn for_store(learning_rate: f64, store: &ParamStore) -> Self {
        Self::new(learning_rate, store.values().iter().map(|v| v.dim()))
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update; `params` and `grads` are aligned with the shapes given at construction.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

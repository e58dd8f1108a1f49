//! Fully-connected network with rectifier hidden layers, a linear output
//! layer, and hand-written reverse-mode gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    /// weights[l] has shape (sizes[l+1], sizes[l]).
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// Post-activation input to each layer; inputs[0] is the network input.
    inputs: Vec<DVector<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<DVector<f64>>,
    pub output: DVector<f64>,
}

/// Batched counterpart of [`Tape`]; one sample per column throughout.
#[derive(Debug, Clone)]
pub struct BatchTape {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    pub output: DMatrix<f64>,
}

/// Parameter gradients shaped like the network, plus the input gradient.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub input: DVector<f64>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            input: DVector::zeros(net.input_dim()),
        }
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: f64, other: &MlpGrads) {
        for (s, o) in self.weights.iter_mut().zip(&other.weights) {
            *s += o * a;
        }
        for (s, o) in self.biases.iter_mut().zip(&other.biases) {
            s.axpy(a, o, 1.0);
        }
        self.input.axpy(a, &other.input, 1.0);
    }

    pub fn scale(&mut self, a: f64) {
        for w in &mut self.weights {
            *w *= a;
        }
        for b in &mut self.biases {
            *b *= a;
        }
        self.input *= a;
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Builds a network with the given layer sizes. Weights are uniform
    /// with fan-in scaling (limit 1/sqrt(fan_in)), biases zero.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let limit = 1.0 / (n_in as f64).sqrt();
            weights.push(DMatrix::from_fn(n_out, n_in, |_, _| {
                rng.random_range(-limit..limit)
            }));
            biases.push(DVector::zeros(n_out));
        }
        Mlp { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.weights.iter().map(|w| w.nrows()));
        s
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.len()));
        }
        let mut h = DVector::from_column_slice(x);
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            h = &self.weights[l] * h + &self.biases[l];
            if l < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Forward pass that records the values backward needs.
    pub fn forward_tape(&self, x: &[f64]) -> Result<Tape> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.len()));
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = DVector::from_column_slice(x);
        for l in 0..self.weights.len() {
            inputs.push(h.clone());
            let z = &self.weights[l] * &h + &self.biases[l];
            pre.push(z.clone());
            h = if l < last { z.map(|v| v.max(0.0)) } else { z };
        }
        Ok(Tape {
            inputs,
            pre,
            output: h,
        })
    }

    /// Batched forward pass, one sample per column. Matrix products give
    /// the minibatch path its throughput; results equal the per-sample
    /// path up to floating-point reassociation.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_tape_batch(x)?.output)
    }

    pub fn forward_tape_batch(&self, x: &DMatrix<f64>) -> Result<BatchTape> {
        if x.nrows() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.nrows()));
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        for l in 0..self.weights.len() {
            let mut z = &self.weights[l] * &h;
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            inputs.push(h);
            h = if l < last {
                z.map(|v| v.max(0.0))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok(BatchTape {
            inputs,
            pre,
            output: h,
        })
    }

    /// Reverse-mode gradients of `sum_k upstream_col_k . output_col_k`,
    /// i.e. parameter gradients summed over the batch. Per-sample weights
    /// belong in `upstream`. Input gradients are not produced.
    pub fn backward_batch(&self, tape: &BatchTape, upstream: &DMatrix<f64>) -> Result<MlpGrads> {
        if upstream.nrows() != self.output_dim() || upstream.ncols() != tape.output.ncols() {
            return Err(Error::dim(
                "upstream gradient",
                self.output_dim() * tape.output.ncols(),
                upstream.nrows() * upstream.ncols(),
            ));
        }
        let nl = self.weights.len();
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = upstream.clone();
        for l in (0..nl).rev() {
            grads.weights[l] = &delta * tape.inputs[l].transpose();
            grads.biases[l] = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            if l > 0 {
                let back = self.weights[l].tr_mul(&delta);
                delta = back.zip_map(&tape.pre[l - 1], |g, z| if z > 0.0 { g } else { 0.0 });
            }
        }
        Ok(grads)
    }

    /// Exact reverse-mode gradients of `upstream . output` with respect
    /// to every parameter and the input.
    pub fn backward(&self, tape: &Tape, upstream: &DVector<f64>) -> Result<MlpGrads> {
        if upstream.len() != self.output_dim() {
            return Err(Error::dim("upstream gradient", self.output_dim(), upstream.len()));
        }
        let nl = self.weights.len();
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = upstream.clone();
        for l in (0..nl).rev() {
            grads.weights[l] = &delta * tape.inputs[l].transpose();
            grads.biases[l] = delta.clone();
            let back = self.weights[l].tr_mul(&delta);
            if l > 0 {
                // Rectifier subgradient, taken as 0 at exactly 0.
                delta = back.zip_map(&tape.pre[l - 1], |g, z| if z > 0.0 { g } else { 0.0 });
            } else {
                grads.input = back;
            }
        }
        Ok(grads)
    }

    /// In-place momentum-SGD application; see [`super::MomentumSgd`].
    pub(crate) fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64, usize)) {
        let mut idx = 0;
        for w in &mut self.weights {
            for v in w.iter_mut() {
                f(v, idx);
                idx += 1;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                f(v, idx);
                idx += 1;
            }
        }
    }

    pub(crate) fn for_each_grad(grads: &MlpGrads, mut f: impl FnMut(f64, usize)) {
        let mut idx = 0;
        for w in &grads.weights {
            for v in w.iter() {
                f(*v, idx);
                idx += 1;
            }
        }
        for b in &grads.biases {
            for v in b.iter() {
                f(*v, idx);
                idx += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Overwrites all parameters; test and tooling hook.
    pub fn fill(&mut self, weight: f64, bias: f64) {
        for w in &mut self.weights {
            w.fill(weight);
        }
        for b in &mut self.biases {
            b.fill(bias);
        }
    }
}

//! Small fully connected scalar networks with exact reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            // ln(1 + e^x) without overflow
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Affine map `y = W x + b` with `W` stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

/// Multi-layer perceptron `R^k -> R`; hidden layers use the activation,
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarNet {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetTrace {
    /// `values[0]` is the input; `values[l + 1]` the output of layer `l`
    /// after its activation (none on the last layer).
    values: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl NetTrace {
    pub fn output(&self) -> f64 {
        self.values.last().map_or(0.0, |v| v[0])
    }
}

impl ScalarNet {
    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, the output
    /// layer further scaled by `output_scale`; zero biases.
    pub fn random(input: usize, hidden: &[usize], activation: Activation, output_scale: f64, rng: &mut RngState) -> Self {
        let mut net = Self::zeros(input, hidden, activation);
        let last = net.layers.len() - 1;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let std = (1.0 / layer.inputs.max(1) as f64).sqrt() * if l == last { output_scale } else { 1.0 };
            for w in &mut layer.weights {
                *w = std * rng.normal();
            }
        }
        net
    }

    pub fn zeros(input: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { activation, layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    /// A zero network of identical shape, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_param_mut(|p| *p = 0.0);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(&mut f);
            layer.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    /// `self += factor * other` over all parameters.
    pub fn axpy(&mut self, factor: f64, other: &ScalarNet) {
        let mut source = other.params();
        self.for_each_param_mut(|p| *p += factor * source.next().expect("same shape"));
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch { expected: self.input_width(), found: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.forward_trace(x).map(|t| t.output())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<NetTrace> {
        self.check_input(x)?;
        let mut values = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&values[l], &mut z);
            let y = if l == last { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
            pre.push(z);
            values.push(y);
        }
        Ok(NetTrace { values, pre })
    }

    /// Accumulates `d_output * d(output)/d(params)` into `grad`.
    pub fn backward(&self, trace: &NetTrace, d_output: f64, grad: &mut ScalarNet) {
        if d_output == 0.0 {
            return;
        }
        let last = self.layers.len() - 1;
        let mut delta = vec![d_output];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                for (k, d) in delta.iter_mut().enumerate() {
                    *d *= self.activation.derivative(trace.pre[l][k], trace.values[l + 1][k]);
                }
            }
            let input = &trace.values[l];
            let g = &mut grad.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
    }
}

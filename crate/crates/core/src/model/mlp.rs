//! Fully connected feed-forward network with a softmax output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer sizes from input to output, plus one activation per hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl ModelConfig {
    pub fn new(inputs: usize, hidden: &[usize], activation: Activation, classes: usize) -> Self {
        let mut layers = vec![inputs];
        layers.extend_from_slice(hidden);
        layers.push(classes);
        Self {
            layers,
            activations: vec![activation; hidden.len()],
        }
    }

    /// Two hidden ReLU layers of 16 units.
    pub fn nn1(inputs: usize, classes: usize) -> Self {
        Self::new(inputs, &[16, 16], Activation::Relu, classes)
    }

    /// One hidden tanh layer of 32 units.
    pub fn nn2(inputs: usize, classes: usize) -> Self {
        Self::new(inputs, &[32], Activation::Tanh, classes)
    }

    pub fn inputs(&self) -> usize {
        self.layers[0]
    }

    pub fn classes(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive with at least input and output, got {:?}",
                self.layers
            )));
        }
        if self.activations.len() != self.layers.len() - 2 {
            return Err(Error::Config(format!(
                "{} hidden layers need {} activations, got {}",
                self.layers.len() - 2,
                self.layers.len() - 2,
                self.activations.len()
            )));
        }
        if self.classes() < 2 {
            return Err(Error::Config("a classifier needs at least two outputs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: ModelConfig,
    pub layers: Vec<Dense>,
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layers
            .windows(2)
            .map(|pair| {
                let (inputs, outputs) = (pair[0], pair[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| rng.uniform(-limit, limit)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + w]);
            at += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + b]);
            at += b;
        }
    }

    /// Activations of every layer; the last entry holds class probabilities.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.forward(trace.last().unwrap(), &mut z);
            if i < last {
                let act = self.config.activations[i];
                z.iter_mut().for_each(|v| *v = act.apply(*v));
            } else {
                softmax_in_place(&mut z);
            }
            trace.push(z);
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i < last {
                let act = self.config.activations[i];
                next.iter_mut().for_each(|v| *v = act.apply(*v));
            } else {
                softmax_in_place(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Mean cross-entropy over the batch and its gradient, flattened in
    /// [`Mlp::params`] order.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut loss = 0.0;
        let scale = 1.0 / inputs.len() as f64;
        for (x, &y) in inputs.iter().zip(labels) {
            let trace = self.forward_trace(x);
            let probs = trace.last().unwrap();
            loss -= probs[y].max(1e-300).ln();
            // dL/dz at the softmax input
            let mut delta: Vec<f64> = probs.clone();
            delta[y] -= 1.0;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &trace[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..layer.outputs {
                    let d = delta[o] * scale;
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if li == 0 {
                    break;
                }
                let act = self.config.activations[li - 1];
                let mut prev = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += delta[o] * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= act.derivative(*a);
                }
                delta = prev;
            }
        }
        let flat = grads
            .into_iter()
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .collect();
        (loss * scale, flat)
    }
}

//! Dense feed-forward network with tanh hidden layers and hand-written
//! backpropagation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
    /// Identity on the logits; the softmax is applied by the loss and the
    /// decision rule.
    Softmax,
}

/// Parameters stored flat, layer by layer: the `out × in` row-major weight
/// matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

/// Per-layer activations kept from a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// Xavier-uniform weights and zero biases.
    pub fn new(sizes: &[usize], output: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::domain(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-limit..=limit));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            output,
            params,
        })
    }

    pub fn from_params(sizes: &[usize], output: Activation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::domain(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != param_count(sizes) {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                param_count(sizes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("network parameters must be finite"));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            output,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn new_trace(&self) -> Trace {
        Trace {
            acts: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: Vec::with_capacity(*self.sizes.iter().max().unwrap()),
            back: Vec::with_capacity(*self.sizes.iter().max().unwrap()),
        }
    }

    /// Runs the network on `input`, leaving every layer's output in `trace`.
    pub fn forward(&self, input: &[f64], trace: &mut Trace) {
        debug_assert_eq!(input.len(), self.sizes[0]);
        trace.acts[0].copy_from_slice(input);
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (prev, next) = trace.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let out = &mut next[0];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                *o = if l + 1 < layers { z.tanh() } else { z };
            }
            off += n_in * n_out + n_out;
        }
    }

    /// Convenience forward returning the output layer.
    pub fn eval(&self, input: &[f64]) -> Vec<f64> {
        let mut t = self.new_trace();
        self.forward(input, &mut t);
        t.output().to_vec()
    }

    /// Accumulates `∂L/∂θ` into `grad` given `d_out = ∂L/∂output` (for
    /// softmax heads, the gradient with respect to the logits). Writes
    /// `∂L/∂input` into `d_in` when supplied.
    pub fn backward(&self, trace: &mut Trace, d_out: &[f64], grad: &mut [f64], d_in: Option<&mut [f64]>) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let Trace { acts, delta, back } = trace;
        delta.clear();
        delta.extend_from_slice(d_out);
        let mut d_in = d_in;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let w = &self.params[off..off + n_in * n_out];
            let x = &acts[l];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    for (g, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                        *g += dj * xi;
                    }
                }
            }
            if l == 0 && d_in.is_none() {
                break;
            }
            back.clear();
            back.resize(n_in, 0.0);
            for j in 0..n_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                for (bi, wji) in back.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                    *bi += dj * wji;
                }
            }
            if l == 0 {
                if let Some(d) = d_in.take() {
                    d.copy_from_slice(back);
                }
                break;
            }
            delta.clear();
            delta.extend(back.iter().zip(x).map(|(b, a)| b * (1.0 - a * a)));
        }
    }

    pub fn to_layers(&self) -> Vec<Layer> {
        let layers = self.sizes.len() - 1;
        let mut out = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = (0..n_out)
                .map(|j| self.params[off + j * n_in..off + (j + 1) * n_in].to_vec())
                .collect();
            let bias = self.params[off + n_in * n_out..off + n_in * n_out + n_out].to_vec();
            out.push(Layer {
                weights,
                bias,
                activation: if l + 1 < layers { Activation::Tanh } else { self.output },
            });
            off += n_in * n_out + n_out;
        }
        out
    }

    pub fn from_layers(layers: &[Layer]) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::domain("network has no layers"))?;
        let mut sizes = vec![first.weights.first().map_or(0, Vec::len)];
        let mut params = Vec::new();
        for (l, layer) in layers.iter().enumerate() {
            let n_in = *sizes.last().unwrap();
            if layer.weights.len() != layer.bias.len() || layer.weights.iter().any(|r| r.len() != n_in) {
                return Err(Error::domain(format!("layer {l} has inconsistent dimensions")));
            }
            let hidden = l + 1 < layers.len();
            if hidden && layer.activation != Activation::Tanh {
                return Err(Error::domain(format!("hidden layer {l} must use tanh")));
            }
            params.extend(layer.weights.iter().flatten());
            params.extend(&layer.bias);
            sizes.push(layer.bias.len());
        }
        Self::from_params(&sizes, layers.last().unwrap().activation, params)
    }
}

/// Serialized layer: weights as `out` rows of `in` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn init_respects_xavier_bounds() {
        let mut rng = substream(1, 0);
        let net = Mlp::new(&[4, 8, 3], Activation::Identity, &mut rng).unwrap();
        assert_eq!(net.params().len(), param_count(&[4, 8, 3]));
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(net.params()[..32].iter().all(|w| w.abs() <= limit));
        assert!(net.params()[32..40].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = substream(2, 0);
        let mut net = Mlp::new(&[3, 5, 4, 2], Activation::Identity, &mut rng).unwrap();
        for p in net.params_mut() {
            *p += 0.1 * rng.random_range(-1.0..1.0);
        }
        let x = [0.3, -0.7, 1.1];
        let c = [0.4, -1.3];
        let loss = |n: &Mlp, x: &[f64]| n.eval(x).iter().zip(&c).map(|(o, c)| o * c).sum::<f64>();
        let mut trace = net.new_trace();
        net.forward(&x, &mut trace);
        let mut grad = vec![0.0; net.params().len()];
        let mut dx = vec![0.0; 3];
        net.backward(&mut trace, &c, &mut grad, Some(&mut dx));
        let h = 1e-6;
        for i in 0..grad.len() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut q = net.clone();
            q.params_mut()[i] -= h;
            let fd = (loss(&p, &x) - loss(&q, &x)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn layers_round_trip() {
        let mut rng = substream(3, 0);
        let net = Mlp::new(&[2, 4, 6], Activation::Softmax, &mut rng).unwrap();
        let back = Mlp::from_layers(&net.to_layers()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn softmax_and_argmax() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}

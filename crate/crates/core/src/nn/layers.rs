use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, uniform_vec, NnError, ParamSet, TensorRef};

/// Dot product with independent partial sums, which lets the compiler
/// vectorize it.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Affine map `W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Dense { in_dim, out_dim, weight: uniform_vec(in_dim * out_dim, bound, rng), bias: vec![0.0; out_dim] }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        self.add_block(0, x, &mut z);
        z
    }

    /// `z += W[:, offset..offset + x.len()] · x`
    pub fn add_block(&self, offset: usize, x: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            *zo += dot(&self.row(o)[offset..offset + x.len()], x);
        }
    }

    /// `z += W[:, col] * v`
    pub fn add_column(&self, col: usize, v: f64, z: &mut [f64]) {
        if v == 0.0 {
            return;
        }
        for (o, zo) in z.iter_mut().enumerate() {
            *zo += self.weight[o * self.in_dim + col] * v;
        }
    }

    /// Accumulates `grad_z ⊗ x` into the weight block of `grads` starting at
    /// column `offset`, and `W[:, block]ᵀ grad_z` into `grad_x`.
    pub fn backward_block(&self, offset: usize, x: &[f64], grad_z: &[f64], grads: &mut Dense, grad_x: Option<&mut [f64]>) {
        let n = x.len();
        for (o, &g) in grad_z.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let start = o * self.in_dim + offset;
            for (gw, v) in grads.weight[start..start + n].iter_mut().zip(x) {
                *gw += g * v;
            }
        }
        if let Some(grad_x) = grad_x {
            for (o, &g) in grad_z.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.row(o)[offset..offset + n];
                for (gx, w) in grad_x.iter_mut().zip(row) {
                    *gx += g * w;
                }
            }
        }
    }

    /// Gradient for a single scalar input column; returns `W[:, col]ᵀ grad_z`.
    pub fn backward_column(&self, col: usize, v: f64, grad_z: &[f64], grads: &mut Dense) -> f64 {
        let mut gx = 0.0;
        for (o, &g) in grad_z.iter().enumerate() {
            let idx = o * self.in_dim + col;
            grads.weight[idx] += g * v;
            gx += g * self.weight[idx];
        }
        gx
    }

    pub fn backward_bias(grad_z: &[f64], grads: &mut Dense) {
        for (b, g) in grads.bias.iter_mut().zip(grad_z) {
            *b += g;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub epsilon: f64,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gain: vec![1.0; dim], shift: vec![0.0; dim], epsilon: LAYER_NORM_EPS }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm { gain: vec![0.0; dim], shift: vec![0.0; dim], epsilon: LAYER_NORM_EPS }
    }

    /// Returns `(normalized, inverse std)`, before gain and shift.
    pub fn normalize(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + self.epsilon).sqrt();
        (z.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(format!("unknown activation `{s}`")),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One layer: affine, then optional layer norm, then activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out: usize,
    pub layer_norm: bool,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    /// `hidden` layers with layer norm and `activation`, then a head of
    /// width `out` with optional layer norm and activation `head`.
    pub fn stack(input: usize, hidden: &[usize], activation: Activation, out: usize, head_norm: bool, head: Activation) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&h| LayerSpec { out: h, layer_norm: true, activation })
            .collect();
        layers.push(LayerSpec { out, layer_norm: head_norm, activation: head });
        MlpSpec { input, layers }
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub dense: Vec<Dense>,
    pub norms: Vec<Option<LayerNorm>>,
}

#[derive(Debug, Clone, Default)]
struct LayerCache {
    xhat: Vec<f64>,
    inv_std: f64,
    pre_act: Vec<f64>,
    out: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    input: Vec<f64>,
    layers: Vec<LayerCache>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("nonempty network").out
    }

    /// Output of the first layer (after its norm and activation).
    pub fn first_hidden(&self) -> &[f64] {
        &self.layers[0].out
    }
}

impl Mlp {
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        Self::build(spec, |i, o| Dense::glorot(i, o, rng), LayerNorm::new)
    }

    /// All-zero parameters, used as a gradient accumulator.
    pub fn zeros(spec: MlpSpec) -> Self {
        Self::build(spec, Dense::zeros, LayerNorm::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.spec.clone())
    }

    fn build(spec: MlpSpec, mut dense: impl FnMut(usize, usize) -> Dense, norm: impl Fn(usize) -> LayerNorm) -> Self {
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut norms = Vec::with_capacity(spec.layers.len());
        let mut in_dim = spec.input;
        for l in &spec.layers {
            layers.push(dense(in_dim, l.out));
            norms.push(l.layer_norm.then(|| norm(l.out)));
            in_dim = l.out;
        }
        Mlp { spec, dense: layers, norms }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        check_len(self.spec.input, x.len())?;
        let z0 = self.dense[0].forward(x);
        let mut cache = self.forward_tail(z0);
        cache.input = x.to_vec();
        Ok((cache.output().to_vec(), cache))
    }

    /// Runs the network from the first layer's affine output `z0`. Used
    /// when the caller evaluates the first affine map in pieces.
    pub fn forward_tail(&self, z0: Vec<f64>) -> MlpCache {
        let mut layers = Vec::with_capacity(self.dense.len());
        let mut z = z0;
        for (i, spec) in self.spec.layers.iter().enumerate() {
            if i > 0 {
                z = self.dense[i].forward(layers.last().map(|c: &LayerCache| c.out.as_slice()).unwrap());
            }
            let (xhat, inv_std, pre_act) = match &self.norms[i] {
                Some(ln) => {
                    let (xhat, inv_std) = ln.normalize(&z);
                    let y = xhat.iter().enumerate().map(|(j, v)| v * ln.gain[j] + ln.shift[j]).collect();
                    (xhat, inv_std, y)
                }
                None => (Vec::new(), 0.0, z),
            };
            let out = pre_act.iter().map(|&v| spec.activation.apply(v)).collect();
            layers.push(LayerCache { xhat, inv_std, pre_act, out });
            z = Vec::new();
        }
        MlpCache { input: Vec::new(), layers }
    }

    /// Backpropagates `grad_out`, accumulating into `grads`. Returns the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let grad_z0 = self.backward_tail(cache, grad_out, grads);
        let mut grad_x = vec![0.0; self.spec.input];
        self.dense[0].backward_block(0, &cache.input, &grad_z0, &mut grads.dense[0], Some(&mut grad_x));
        Dense::backward_bias(&grad_z0, &mut grads.dense[0]);
        grad_x
    }

    /// Backpropagates down to the first layer's affine output and returns
    /// that gradient; the first affine map's own gradients are left to the
    /// caller.
    pub fn backward_tail(&self, cache: &MlpCache, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut grad = grad_out.to_vec();
        for i in (0..self.dense.len()).rev() {
            let lc = &cache.layers[i];
            let act = self.spec.layers[i].activation;
            for (j, g) in grad.iter_mut().enumerate() {
                *g *= act.derivative(lc.pre_act[j], lc.out[j]);
            }
            if let Some(ln) = &self.norms[i] {
                let gln = grads.norms[i].as_mut().expect("gradient layout matches");
                let n = grad.len() as f64;
                let mut dxhat = vec![0.0; grad.len()];
                for j in 0..grad.len() {
                    gln.gain[j] += grad[j] * lc.xhat[j];
                    gln.shift[j] += grad[j];
                    dxhat[j] = grad[j] * ln.gain[j];
                }
                let sum_d: f64 = dxhat.iter().sum();
                let sum_dx: f64 = dxhat.iter().zip(&lc.xhat).map(|(d, x)| d * x).sum();
                for j in 0..grad.len() {
                    grad[j] = lc.inv_std / n * (n * dxhat[j] - sum_d - lc.xhat[j] * sum_dx);
                }
            }
            if i == 0 {
                break;
            }
            let prev = &cache.layers[i - 1].out;
            let mut grad_prev = vec![0.0; prev.len()];
            self.dense[i].backward_block(0, prev, &grad, &mut grads.dense[i], Some(&mut grad_prev));
            Dense::backward_bias(&grad, &mut grads.dense[i]);
            grad = grad_prev;
        }
        grad
    }
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (i, (d, n)) in self.dense.iter().zip(&self.norms).enumerate() {
            out.push(TensorRef { name: format!("layer{i}.weight"), shape: vec![d.out_dim, d.in_dim], data: &d.weight });
            out.push(TensorRef { name: format!("layer{i}.bias"), shape: vec![d.out_dim], data: &d.bias });
            if let Some(n) = n {
                out.push(TensorRef { name: format!("layer{i}.gain"), shape: vec![n.gain.len()], data: &n.gain });
                out.push(TensorRef { name: format!("layer{i}.shift"), shape: vec![n.shift.len()], data: &n.shift });
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (d, n) in self.dense.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
            if let Some(n) = n {
                out.push(&mut n.gain);
                out.push(&mut n.shift);
            }
        }
        out
    }
}

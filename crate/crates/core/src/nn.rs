//! Minimal differentiable kernel for the fully connected networks used by the
//! trainers: affine layers, a smooth rectifier (SiLU) between hidden layers,
//! sinusoidal time embeddings, and plain gradient steps. Forward passes run
//! batched through `ndarray` matmul; backward passes return input gradients
//! so objectives can be chained through multi-step computations.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth rectifier `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Derivative of `silu`.
pub fn silu_prime(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal embedding of a (diffusion) step index: interleaved
/// `sin(t * w_i)`, `cos(t * w_i)` over geometrically spaced frequencies.
pub fn time_embedding(t: f64, dim: usize) -> Array1<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even and >= 2");
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let exponent = if half > 1 { i as f64 / (half - 1) as f64 } else { 0.0 };
        let freq = (10_000f64).powf(-exponent);
        out[2 * i] = (t * freq).sin();
        out[2 * i + 1] = (t * freq).cos();
    }
    out
}

/// One affine layer, stored as `w: [in, out]` so a batch `x: [b, in]` maps to
/// `x.dot(w) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Xavier-uniform initialization.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_fn((in_dim, out_dim), |_| rng.gen_range(-limit..limit));
        Self { w, b: Array1::zeros(out_dim) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// Gradient accumulator shaped like one layer.
#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully connected network: SiLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations recorded by `forward_cached`, consumed by `backward`.
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    preacts: Vec<Array2<f64>>,
}

/// Per-layer gradients for a whole network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LinearGrad>,
}

impl MlpGrads {
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().map(|v| v * v).sum::<f64>() + l.b.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.w.mapv_inplace(|v| v * factor);
            layer.b.mapv_inplace(|v| v * factor);
        }
    }

    /// Rescales so the global norm does not exceed `max_norm`; returns the
    /// factor applied. Rewards span several orders of magnitude once
    /// constraint penalties enter, and an unclipped step at that scale blows
    /// up the parameters.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.squared_norm().sqrt();
        if norm > max_norm && norm > 0.0 {
            let factor = max_norm / norm;
            self.scale(factor);
            factor
        } else {
            1.0
        }
    }
}

impl Mlp {
    /// `dims` lists layer widths from input to output, e.g. `[8, 256, 256, 4]`.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let layers = dims
            .windows(2)
            .map(|pair| Linear::new(pair[0], pair[1], rng))
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h.mapv_inplace(silu);
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = layer.forward(&h);
            preacts.push(z.clone());
            h = if i < last { z.mapv(silu) } else { z };
        }
        (h, MlpCache { inputs, preacts })
    }

    /// Backpropagates `dy` (gradient w.r.t. the network output), accumulating
    /// parameter gradients into `grads` and returning the gradient w.r.t. the
    /// network input.
    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, grads: &mut MlpGrads) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut delta = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // dy arrived through the SiLU that followed layer i.
                delta = &delta * &cache.preacts[i].mapv(silu_prime);
            }
            grads.layers[i].w += &cache.inputs[i].t().dot(&delta);
            grads.layers[i].b += &delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].w.t());
            } else {
                return delta.dot(&self.layers[i].w.t());
            }
        }
        unreachable!("loop always returns at layer 0");
    }

    pub fn grads_zero(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LinearGrad { w: Array2::zeros(l.w.dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
        }
    }

    /// Plain gradient step `params += scale * grads`; ascent for positive
    /// `scale`, descent for negative.
    pub fn step(&mut self, grads: &MlpGrads, scale: f64) -> Result<()> {
        for (layer, grad) in self.layers.iter_mut().zip(&grads.layers) {
            layer.w.scaled_add(scale, &grad.w);
            layer.b.scaled_add(scale, &grad.b);
            if layer.w.iter().any(|v| !v.is_finite()) || layer.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("parameter update produced non-finite values".into()));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access (layer-major, weights row-major, then biases)
    /// for finite-difference checks.
    pub fn get_param(&self, idx: usize) -> f64 {
        let (layer, offset) = self.locate(idx);
        let l = &self.layers[layer];
        if offset < l.w.len() {
            *l.w.as_slice().expect("standard layout").get(offset).expect("in range")
        } else {
            l.b[offset - l.w.len()]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (layer, offset) = self.locate(idx);
        let l = &mut self.layers[layer];
        let w_len = l.w.len();
        if offset < w_len {
            l.w.as_slice_mut().expect("standard layout")[offset] = value;
        } else {
            l.b[offset - w_len] = value;
        }
    }

    pub fn grad_param(&self, grads: &MlpGrads, idx: usize) -> f64 {
        let (layer, offset) = self.locate(idx);
        let g = &grads.layers[layer];
        if offset < g.w.len() {
            g.w.as_slice().expect("standard layout")[offset]
        } else {
            g.b[offset - g.w.len()]
        }
    }

    fn locate(&self, idx: usize) -> (usize, usize) {
        let mut offset = idx;
        for (i, l) in self.layers.iter().enumerate() {
            let len = l.w.len() + l.b.len();
            if offset < len {
                return (i, offset);
            }
            offset -= len;
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn to_spec(&self) -> MlpSpec {
        MlpSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    in_dim: l.w.nrows(),
                    out_dim: l.w.ncols(),
                    w: l.w.iter().copied().collect(),
                    b: l.b.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &MlpSpec) -> Result<Self> {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let w = Array2::from_shape_vec((l.in_dim, l.out_dim), l.w.clone())
                    .map_err(|e| Error::Shape(format!("layer weights: {e}")))?;
                if l.b.len() != l.out_dim {
                    return Err(Error::Shape(format!(
                        "layer bias has {} entries for out_dim {}",
                        l.b.len(),
                        l.out_dim
                    )));
                }
                Ok(Linear { w, b: Array1::from_vec(l.b.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        Ok(Self { layers })
    }
}

/// Serializable network weights: shapes plus row-major parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Central finite difference of `f` w.r.t. flat parameter `idx`.
pub fn finite_diff_param<F>(mlp: &Mlp, idx: usize, eps: f64, mut f: F) -> f64
where
    F: FnMut(&Mlp) -> f64,
{
    let mut plus = mlp.clone();
    plus.set_param(idx, mlp.get_param(idx) + eps);
    let mut minus = mlp.clone();
    minus.set_param(idx, mlp.get_param(idx) - eps);
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

/// Relative error with an absolute floor, for gradient comparisons.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-10)
}

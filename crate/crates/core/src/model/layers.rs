//! Dense building blocks with explicit backward passes.
//!
//! Activations are row-major `(rows, features)` matrices for one sample.
//! Each `backward` accumulates parameter gradients into a same-shaped
//! gradient struct and returns the gradient w.r.t. its input.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::params::impl_parameters;

/// `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl_parameters!(Linear { weight, bias });

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self {
            weight: Array2::from_shape_simple_fn((input, output), || dist.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates `dW`, `db` only.
    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
    }

    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl_parameters!(LayerNorm { gamma, beta });

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = &x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: ArrayView2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let d = dy.ncols() as f64;
        let dxhat = &dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
        let inner = dxhat * d - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat;
        inner * &(cache.inv_std.mapv(|s| s / d)).insert_axis(Axis(1))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Row-wise numerically stable softmax, in place.
pub fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Multi-head scaled dot-product attention from `xq` onto `xkv`.
/// Self-attention is the special case `xq == xkv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl_parameters!(Attention { q, k, v, o });

pub struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One `(n_query, n_key)` probability map per head.
    pub probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl AttentionCache {
    /// Attention output before the output projection, `(n_query, dim)`.
    pub fn context(&self) -> &Array2<f64> {
        &self.ctx
    }
}

impl Attention {
    /// `query_in`/`kv_in` are the input widths; `dim` the attention width.
    pub fn xavier<R: Rng + ?Sized>(query_in: usize, kv_in: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            q: Linear::xavier(query_in, dim, rng),
            k: Linear::xavier(kv_in, dim, rng),
            v: Linear::xavier(kv_in, dim, rng),
            o: Linear::xavier(dim, dim, rng),
        }
    }

    pub fn forward(&self, xq: ArrayView2<f64>, xkv: ArrayView2<f64>, heads: usize) -> (Array2<f64>, AttentionCache) {
        let q = self.q.forward(xq);
        let k = self.k.forward(xkv);
        let v = self.v.forward(xkv);
        let dim = q.ncols();
        let hd = dim / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut ctx = Array2::zeros((q.nrows(), dim));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * hd..(h + 1) * hd];
            let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut a);
            ctx.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            probs.push(a);
        }
        let out = self.o.forward(ctx.view());
        (out, AttentionCache { q, k, v, probs, ctx })
    }

    /// Returns `(d xq, d xkv)`.
    pub fn backward(
        &self,
        xq: ArrayView2<f64>,
        xkv: ArrayView2<f64>,
        cache: &AttentionCache,
        dout: ArrayView2<f64>,
        grad: &mut Attention,
    ) -> (Array2<f64>, Array2<f64>) {
        let heads = cache.probs.len();
        let dctx = self.o.backward(cache.ctx.view(), dout, &mut grad.o);
        let dim = cache.q.ncols();
        let hd = dim / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, a) in cache.probs.iter().enumerate() {
            let cols = s![.., h * hd..(h + 1) * hd];
            let dch = dctx.slice(cols);
            let da = dch.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dch));
            let row_dot = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (da - &row_dot) * a * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let dxq = self.q.backward(xq, dq.view(), &mut grad.q);
        let dxkv = self.k.backward(xkv, dk.view(), &mut grad.k) + self.v.backward(xkv, dv.view(), &mut grad.v);
        (dxq, dxkv)
    }
}

/// Truncated normal: resample anything beyond two standard deviations.
pub(crate) fn trunc_normal<R: Rng + ?Sized>(shape: (usize, usize), std: f64, rng: &mut R) -> Array2<f64> {
    let n = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn(shape, || loop {
        let v: f64 = n.sample(rng);
        if v.abs() <= 2.0 * std {
            break v;
        }
    })
}

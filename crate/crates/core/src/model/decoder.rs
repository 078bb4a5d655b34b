//! ML-Decoder classification head.
//!
//! A fixed set of group queries cross-attends to the encoder tokens (there
//! is no self-attention among the queries), each query embedding passes
//! through a residual feed-forward block, and group fully connected pooling
//! maps query `g` to its own `ceil(K / G)` logits. The concatenated logits
//! are truncated to `K`.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::DecoderConfig;
use super::layers::{gelu, gelu_grad, Attention, AttentionCache, LayerNorm, LayerNormCache, Linear};
use super::params::impl_parameters;

/// Non-learnable query embeddings, `(num_groups, query_dim)`.
///
/// Deliberately not a [`Parameters`] implementor: optimizers only ever see
/// trainable parameter trees, so these cannot be updated.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupQueries(Array2<f64>);

impl GroupQueries {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub(crate) fn from_array(a: Array2<f64>) -> Self {
        Self(a.as_standard_layout().into_owned())
    }
}

/// Standard-normal draw seeded by `cfg.query_seed`.
pub fn init_group_queries(cfg: &DecoderConfig) -> GroupQueries {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.query_seed);
    GroupQueries(Array2::from_shape_simple_fn((cfg.num_groups, cfg.query_dim), || {
        StandardNormal.sample(&mut rng)
    }))
}

/// Per-group linear maps from a query embedding to that group's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFc {
    /// `(num_groups, query_dim, group_factor)`
    pub weight: Array3<f64>,
    /// One bias per class, applied after truncation.
    pub bias: Array1<f64>,
}

impl_parameters!(GroupFc { weight, bias });

impl GroupFc {
    pub fn forward(&self, emb: ArrayView2<f64>, num_classes: usize) -> Array1<f64> {
        let (groups, _, factor) = self.weight.dim();
        let mut logits = self.bias.clone();
        for g in 0..groups {
            let per = emb.row(g).dot(&self.weight.index_axis(Axis(0), g));
            for j in 0..factor {
                let k = g * factor + j;
                if k < num_classes {
                    logits[k] += per[j];
                }
            }
        }
        logits
    }

    pub fn backward(&self, emb: ArrayView2<f64>, dlogits: ArrayView1<f64>, grad: &mut GroupFc) -> Array2<f64> {
        let (groups, dim, factor) = self.weight.dim();
        let k_total = dlogits.len();
        grad.bias += &dlogits;
        let mut demb = Array2::zeros((groups, dim));
        for g in 0..groups {
            for j in 0..factor {
                let k = g * factor + j;
                if k >= k_total {
                    continue;
                }
                let d = dlogits[k];
                let w = self.weight.slice(ndarray::s![g, .., j]);
                demb.row_mut(g).scaled_add(d, &w);
                grad.weight.slice_mut(ndarray::s![g, .., j]).scaled_add(d, &emb.row(g));
            }
        }
        demb
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlDecoder {
    pub cross_attn: Attention,
    pub norm1: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub norm2: LayerNorm,
    pub group_fc: GroupFc,
}

impl_parameters!(MlDecoder {
    cross_attn,
    norm1,
    fc1,
    fc2,
    norm2,
    group_fc
});

pub struct DecoderCache {
    memory: Array2<f64>,
    pub attn: AttentionCache,
    norm1: LayerNormCache,
    t: Array2<f64>,
    fc1_out: Array2<f64>,
    act: Array2<f64>,
    norm2: LayerNormCache,
    u: Array2<f64>,
}

impl MlDecoder {
    /// `token_dim` is the encoder width the decoder attends to.
    pub fn init<R: Rng + ?Sized>(cfg: &DecoderConfig, token_dim: usize, rng: &mut R) -> Self {
        let q = cfg.query_dim;
        let factor = cfg.group_factor();
        let limit = (6.0 / (q + factor) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Self {
            cross_attn: Attention::xavier(q, token_dim, q, rng),
            norm1: LayerNorm::new(q),
            fc1: Linear::xavier(q, cfg.ffn_hidden, rng),
            fc2: Linear::xavier(cfg.ffn_hidden, q, rng),
            norm2: LayerNorm::new(q),
            group_fc: GroupFc {
                weight: Array3::from_shape_simple_fn((cfg.num_groups, q, factor), || dist.sample(rng)),
                bias: Array1::zeros(cfg.num_classes),
            },
        }
    }

    pub fn forward(
        &self,
        queries: &GroupQueries,
        memory: ArrayView2<f64>,
        heads: usize,
    ) -> (Array1<f64>, DecoderCache) {
        let q = queries.as_array();
        let (attn_out, attn) = self.cross_attn.forward(q.view(), memory, heads);
        let (t, norm1) = self.norm1.forward((q + &attn_out).view());
        let fc1_out = self.fc1.forward(t.view());
        let act = fc1_out.mapv(gelu);
        let (u, norm2) = self.norm2.forward((&t + &self.fc2.forward(act.view())).view());
        let logits = self.group_fc.forward(u.view(), self.group_fc.bias.len());
        let cache = DecoderCache {
            memory: memory.to_owned(),
            attn,
            norm1,
            t,
            fc1_out,
            act,
            norm2,
            u,
        };
        (logits, cache)
    }

    /// Returns the gradient w.r.t. the memory tokens.
    pub fn backward(
        &self,
        queries: &GroupQueries,
        cache: &DecoderCache,
        dlogits: ArrayView1<f64>,
        grad: &mut MlDecoder,
    ) -> Array2<f64> {
        let du = self.group_fc.backward(cache.u.view(), dlogits, &mut grad.group_fc);
        let du_pre = self.norm2.backward(&cache.norm2, du.view(), &mut grad.norm2);
        let dact = self.fc2.backward(cache.act.view(), du_pre.view(), &mut grad.fc2);
        let dfc1 = dact * &cache.fc1_out.mapv(gelu_grad);
        let dt = &du_pre + &self.fc1.backward(cache.t.view(), dfc1.view(), &mut grad.fc1);
        let dt_pre = self.norm1.backward(&cache.norm1, dt.view(), &mut grad.norm1);
        let (_, dmemory) = self.cross_attn.backward(
            queries.as_array().view(),
            cache.memory.view(),
            &cache.attn,
            dt_pre.view(),
            &mut grad.cross_attn,
        );
        dmemory
    }
}

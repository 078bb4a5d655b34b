use ndarray::{s, Array2, ArrayView2, ArrayView3};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use super::config::ModelConfig;
use super::layers::{gelu, gelu_grad, trunc_normal, Attention, AttentionCache, LayerNorm, LayerNormCache, Linear};
use super::params::impl_parameters;
use crate::preprocess::linear_taps;

/// Pre-norm transformer encoder layer:
/// `h = x + attn(ln1(x))`, `out = h + fc2(gelu(fc1(ln2(h))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl_parameters!(EncoderLayer {
    ln1,
    attn,
    ln2,
    fc1,
    fc2
});

pub struct EncoderLayerCache {
    ln1_out: Array2<f64>,
    ln1: LayerNormCache,
    pub attn: AttentionCache,
    ln2_out: Array2<f64>,
    ln2: LayerNormCache,
    fc1_out: Array2<f64>,
    act: Array2<f64>,
}

impl EncoderLayer {
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            ln1: LayerNorm::new(dim),
            attn: Attention::xavier(dim, dim, dim, rng),
            ln2: LayerNorm::new(dim),
            fc1: Linear::xavier(dim, hidden, rng),
            fc2: Linear::xavier(hidden, dim, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>, heads: usize) -> (Array2<f64>, EncoderLayerCache) {
        let (a, ln1) = self.ln1.forward(x);
        let (attn_out, attn) = self.attn.forward(a.view(), a.view(), heads);
        let h = &x + &attn_out;
        let (b, ln2) = self.ln2.forward(h.view());
        let m1 = self.fc1.forward(b.view());
        let act = m1.mapv(gelu);
        let out = &h + &self.fc2.forward(act.view());
        let cache = EncoderLayerCache {
            ln1_out: a,
            ln1,
            attn,
            ln2_out: b,
            ln2,
            fc1_out: m1,
            act,
        };
        (out, cache)
    }

    pub fn backward(&self, cache: &EncoderLayerCache, dout: ArrayView2<f64>, grad: &mut EncoderLayer) -> Array2<f64> {
        let dact = self.fc2.backward(cache.act.view(), dout, &mut grad.fc2);
        let dm1 = dact * &cache.fc1_out.mapv(gelu_grad);
        let db = self.fc1.backward(cache.ln2_out.view(), dm1.view(), &mut grad.fc1);
        let dh = &dout + &self.ln2.backward(&cache.ln2, db.view(), &mut grad.ln2);
        let a = cache.ln1_out.view();
        let (dxq, dxkv) = self.attn.backward(a, a, &cache.attn, dh.view(), &mut grad.attn);
        let da = dxq + dxkv;
        dh + self.ln1.backward(&cache.ln1, da.view(), &mut grad.ln1)
    }
}

/// Patch projection, positional embedding, transformer layers and the final
/// norm that feeds the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub patch_embed: Linear,
    pub pos_embed: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
    pub norm: LayerNorm,
}

impl_parameters!(Encoder {
    patch_embed,
    pos_embed,
    layers,
    norm
});

impl Encoder {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let e = &cfg.encoder;
        let patch_embed = Linear::xavier(cfg.patch_dim(), e.embed_dim, rng);
        let pos_embed = trunc_normal((cfg.num_tokens(), e.embed_dim), 0.02, rng);
        let layers = (0..e.num_layers)
            .map(|_| EncoderLayer::init(e.embed_dim, e.mlp_hidden(), rng))
            .collect();
        Self {
            patch_embed,
            pos_embed,
            layers,
            norm: LayerNorm::new(e.embed_dim),
        }
    }
}

/// Flattens a `(3, H, W)` image into `(num_patches, 3*p*p)` rows. Patches are
/// ordered row-major over the grid, and each row is laid out `(c, dy, dx)`.
pub fn patchify(img: ArrayView3<f64>, patch: usize) -> Array2<f64> {
    let (c, h, w) = img.dim();
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Array2::zeros((gh * gw, c * patch * patch));
    for gy in 0..gh {
        for gx in 0..gw {
            let mut row = out.row_mut(gy * gw + gx);
            let block = img.slice(s![.., gy * patch..(gy + 1) * patch, gx * patch..(gx + 1) * patch]);
            for (dst, src) in row.iter_mut().zip(block.iter()) {
                *dst = *src;
            }
        }
    }
    out
}

/// Bilinear resampling of a positional table between token grids.
pub(crate) struct PosResampler {
    from: (usize, usize),
    ys: Vec<(usize, usize, f64)>,
    xs: Vec<(usize, usize, f64)>,
}

impl PosResampler {
    pub fn new(from: (usize, usize), to: (usize, usize)) -> Self {
        Self {
            from,
            ys: linear_taps(to.0, from.0),
            xs: linear_taps(to.1, from.1),
        }
    }

    fn taps(&self, oy: usize, ox: usize) -> [(usize, f64); 4] {
        let (y0, y1, fy) = self.ys[oy];
        let (x0, x1, fx) = self.xs[ox];
        let w = self.from.1;
        [
            (y0 * w + x0, (1.0 - fy) * (1.0 - fx)),
            (y0 * w + x1, (1.0 - fy) * fx),
            (y1 * w + x0, fy * (1.0 - fx)),
            (y1 * w + x1, fy * fx),
        ]
    }

    pub fn forward(&self, pos: ArrayView2<f64>) -> Array2<f64> {
        let (th, tw) = (self.ys.len(), self.xs.len());
        let mut out = Array2::zeros((th * tw, pos.ncols()));
        for oy in 0..th {
            for ox in 0..tw {
                let mut row = out.row_mut(oy * tw + ox);
                for (src, wt) in self.taps(oy, ox) {
                    row.scaled_add(wt, &pos.row(src));
                }
            }
        }
        out
    }

    /// Transpose of [`forward`](Self::forward).
    pub fn backward(&self, dout: ArrayView2<f64>, grad: &mut Array2<f64>) {
        let tw = self.xs.len();
        for oy in 0..self.ys.len() {
            for ox in 0..tw {
                let d = dout.row(oy * tw + ox);
                for (src, wt) in self.taps(oy, ox) {
                    grad.row_mut(src).scaled_add(wt, &d);
                }
            }
        }
    }
}

/// Inverted dropout mask (already scaled by `1/(1-p)`).
pub(crate) fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<f64> {
    let keep = Bernoulli::new(1.0 - p).expect("p in [0, 1)");
    let scale = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if keep.sample(rng) { scale } else { 0.0 })
}

use serde::{Deserialize, Serialize};

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
    /// Dropout after the patch embedding, active in training mode only.
    pub dropout_p: f64,
}

impl EncoderConfig {
    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub num_groups: usize,
    pub num_classes: usize,
    pub query_dim: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub query_seed: u64,
}

impl DecoderConfig {
    /// Logits produced per group: `ceil(num_classes / num_groups)`.
    pub fn group_factor(&self) -> usize {
        self.num_classes.div_ceil(self.num_groups)
    }
}

/// Input geometry plus encoder and decoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub encoder: usize,
    pub decoder: usize,
    /// Group queries; fixed, never trained.
    pub fixed_queries: usize,
}

impl ParamCount {
    pub fn trainable(&self) -> usize {
        self.encoder + self.decoder
    }
}

impl ModelConfig {
    /// Full-scale geometry: 1024x768 inputs and a 1.5k-wide, 40-layer ViT
    /// backbone with an ML-Decoder head of one query per class.
    pub fn full() -> Self {
        Self {
            image_height: 1024,
            image_width: 768,
            encoder: EncoderConfig {
                patch_size: 16,
                embed_dim: 1536,
                num_layers: 40,
                num_heads: 24,
                mlp_ratio: 4.0,
                dropout_p: 0.0,
            },
            decoder: DecoderConfig {
                num_groups: NUM_CLASSES,
                num_classes: NUM_CLASSES,
                query_dim: 1536,
                num_heads: 8,
                ffn_hidden: 2048,
                query_seed: 42,
            },
        }
    }

    /// Desk-scale model on 32x24 inputs (12 tokens of width 16, 2 layers).
    pub fn toy() -> Self {
        Self {
            image_height: 32,
            image_width: 24,
            encoder: EncoderConfig {
                patch_size: 8,
                embed_dim: 16,
                num_layers: 2,
                num_heads: 2,
                mlp_ratio: 2.0,
                dropout_p: 0.0,
            },
            decoder: DecoderConfig {
                num_groups: NUM_CLASSES,
                num_classes: NUM_CLASSES,
                query_dim: 16,
                num_heads: 2,
                ffn_hidden: 32,
                query_seed: 42,
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "full" => Ok(Self::full()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset {other:?} (expected toy or full)"),
            )),
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        let p = self.encoder.patch_size;
        (self.image_height / p, self.image_width / p)
    }

    pub fn num_tokens(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.encoder.patch_size * self.encoder.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let d = &self.decoder;
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if e.patch_size == 0
            || !self.image_height.is_multiple_of(e.patch_size)
            || !self.image_width.is_multiple_of(e.patch_size)
        {
            return bad(
                "model.encoder.patch_size",
                format!(
                    "{}x{} is not divisible by patch size {}",
                    self.image_height, self.image_width, e.patch_size
                ),
            );
        }
        if e.embed_dim == 0 || e.num_heads == 0 || !e.embed_dim.is_multiple_of(e.num_heads) {
            return bad(
                "model.encoder.num_heads",
                format!("embed_dim {} not divisible by {} heads", e.embed_dim, e.num_heads),
            );
        }
        if !(0.0..1.0).contains(&e.dropout_p) {
            return bad("model.encoder.dropout_p", format!("{} not in [0, 1)", e.dropout_p));
        }
        if e.mlp_hidden() == 0 {
            return bad("model.encoder.mlp_ratio", "hidden width rounds to zero".into());
        }
        if d.num_classes == 0 || d.num_groups == 0 || d.num_groups > d.num_classes {
            return bad(
                "model.decoder.num_groups",
                format!(
                    "need 1 <= num_groups ({}) <= num_classes ({})",
                    d.num_groups, d.num_classes
                ),
            );
        }
        if d.query_dim == 0 || d.num_heads == 0 || !d.query_dim.is_multiple_of(d.num_heads) {
            return bad(
                "model.decoder.num_heads",
                format!("query_dim {} not divisible by {} heads", d.query_dim, d.num_heads),
            );
        }
        if d.ffn_hidden == 0 {
            return bad("model.decoder.ffn_hidden", "must be positive".into());
        }
        Ok(())
    }

    /// Parameter counts derived from the configuration alone.
    pub fn param_count(&self) -> ParamCount {
        let e = &self.encoder;
        let d = &self.decoder;
        let lin = |i: usize, o: usize| i * o + o;
        let dim = e.embed_dim;
        let hidden = e.mlp_hidden();
        let layer = 2 * (2 * dim) + 4 * lin(dim, dim) + lin(dim, hidden) + lin(hidden, dim);
        let encoder = lin(self.patch_dim(), dim) + self.num_tokens() * dim + e.num_layers * layer + 2 * dim;

        let q = d.query_dim;
        let decoder = lin(q, q)
            + 2 * lin(dim, q)
            + lin(q, q)
            + 2 * (2 * q)
            + lin(q, d.ffn_hidden)
            + lin(d.ffn_hidden, q)
            + d.num_groups * q * d.group_factor()
            + d.num_classes;
        ParamCount {
            encoder,
            decoder,
            fixed_queries: d.num_groups * q,
        }
    }

    /// Human-readable architecture summary.
    pub fn describe(&self) -> String {
        let e = &self.encoder;
        let d = &self.decoder;
        let c = self.param_count();
        let (gh, gw) = self.grid();
        format!(
            "input            3 x {h} x {w}\n\
             patch embedding  {p}x{p} patches -> {gh}x{gw} = {n} tokens of width {dim}\n\
             dropout          p = {drop}\n\
             encoder          {layers} pre-norm transformer layers, {eh} heads, MLP width {mlp}\n\
             decoder          cross-attention from {g} fixed group queries (width {qd}, {dh} heads), no self-attention\n\
             decoder FFN      {qd} -> {ffn} -> {qd}\n\
             group FC pooling {g} groups x {gf} logits -> {k} classes\n\
             parameters       encoder {pe}, decoder {pd}, trainable {pt}, fixed queries {pq}\n",
            h = self.image_height,
            w = self.image_width,
            p = e.patch_size,
            n = self.num_tokens(),
            dim = e.embed_dim,
            drop = e.dropout_p,
            layers = e.num_layers,
            eh = e.num_heads,
            mlp = e.mlp_hidden(),
            g = d.num_groups,
            qd = d.query_dim,
            dh = d.num_heads,
            ffn = d.ffn_hidden,
            gf = d.group_factor(),
            k = d.num_classes,
            pe = c.encoder,
            pd = c.decoder,
            pt = c.trainable(),
            pq = c.fixed_queries,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::toy().validate().unwrap();
        ModelConfig::full().validate().unwrap();
        assert_eq!(ModelConfig::full().num_tokens(), 64 * 48);
        assert!(ModelConfig::preset("huge").is_err());
    }

    #[test]
    fn full_preset_is_about_a_billion_parameters() {
        let c = ModelConfig::full().param_count();
        assert!(c.encoder > 1_000_000_000 && c.encoder < 1_200_000_000, "{c:?}");
    }

    #[test]
    fn group_factor_rounds_up() {
        let mut d = ModelConfig::toy().decoder;
        d.num_groups = 3;
        assert_eq!(d.group_factor(), 3);
        d.num_groups = 7;
        assert_eq!(d.group_factor(), 1);
        d.num_groups = 1;
        assert_eq!(d.group_factor(), 7);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::toy();
        c.image_width = 25;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.decoder.num_groups = 8;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.encoder.num_heads = 3;
        assert!(c.validate().is_err());
    }
}

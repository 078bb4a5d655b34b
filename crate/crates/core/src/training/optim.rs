//! AdamW with decoupled weight decay and separate encoder/decoder learning
//! rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Parameters, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// One AdamW update of a flat slice. `step` counts from 1.
///
/// ```text
/// m = b1 m + (1 - b1) g
/// v = b2 v + (1 - b2) g^2
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// ```
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    let n = theta.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::ShapeMismatch(vec![format!(
            "theta {n}, grad {}, m {}, v {}",
            grad.len(),
            m.len(),
            v.len()
        )]));
    }
    if step == 0 {
        return Err(Error::InvalidArgument("AdamW step counts from 1".into()));
    }
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..n {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * theta[i]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    Decoder,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if name.starts_with("encoder.") {
            ParamGroup::Encoder
        } else {
            ParamGroup::Decoder
        }
    }
}

/// Learning rates of the two parameter groups at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLrs {
    pub encoder: f64,
    pub decoder: f64,
}

impl GroupLrs {
    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Decoder => self.decoder,
        }
    }
}

/// Names of the parameters kept fixed when the patch embedding and the first
/// `depth` encoder layers are frozen. Depth 0 freezes nothing.
pub fn is_frozen(name: &str, depth: usize) -> bool {
    if depth == 0 {
        return false;
    }
    if name.starts_with("encoder.patch_embed.") || name == "encoder.pos_embed" {
        return true;
    }
    name.strip_prefix("encoder.layers.")
        .and_then(|rest| rest.split('.').next())
        .and_then(|i| i.parse::<usize>().ok())
        .is_some_and(|i| i < depth)
}

/// Optimizer state: first and second moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub m: Params,
    pub v: Params,
    pub step: u64,
    /// Rates used by the most recent step.
    pub lrs: GroupLrs,
}

impl AdamW {
    pub fn new(params: &Params, config: AdamWConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lrs: GroupLrs {
                encoder: 0.0,
                decoder: 0.0,
            },
        }
    }

    /// Applies one update to every non-frozen parameter.
    pub fn step(&mut self, params: &mut Params, grads: &Params, lrs: GroupLrs, frozen_depth: usize) -> Result<()> {
        let mut pv = params.views_mut();
        let gv = grads.views();
        let mut mv = self.m.views_mut();
        let mut vv = self.v.views_mut();
        if gv.len() != pv.len() {
            return Err(Error::ShapeMismatch(vec![format!(
                "{} parameter tensors but {} gradients",
                pv.len(),
                gv.len()
            )]));
        }
        let mismatched: Vec<String> = pv
            .iter()
            .zip(&gv)
            .filter(|(p, g)| p.name != g.name || p.shape != g.shape)
            .map(|(p, g)| format!("{} {:?} vs gradient {} {:?}", p.name, p.shape, g.name, g.shape))
            .collect();
        if !mismatched.is_empty() {
            return Err(Error::ShapeMismatch(mismatched));
        }
        self.step += 1;
        self.lrs = lrs;
        for (((p, g), m), v) in pv.iter_mut().zip(&gv).zip(mv.iter_mut()).zip(vv.iter_mut()) {
            if is_frozen(&p.name, frozen_depth) {
                continue;
            }
            let lr = lrs.get(ParamGroup::of(&p.name));
            adamw_update(p.data, g.data, m.data, v.data, self.step, lr, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelState};

    fn one_step(theta: f64, g: f64, lr: f64, weight_decay: f64) -> f64 {
        let cfg = AdamWConfig {
            weight_decay,
            ..Default::default()
        };
        let (mut t, mut m, mut v) = ([theta], [0.0], [0.0]);
        adamw_update(&mut t, &[g], &mut m, &mut v, 1, lr, &cfg).unwrap();
        t[0]
    }

    #[test]
    fn first_step_examples() {
        assert!((one_step(1.0, 0.0, 0.1, 0.01) - 0.999).abs() < 1e-10);
        assert_eq!(one_step(1.0, 0.0, 0.1, 0.0), 1.0);
        assert!((one_step(1.0, 1.0, 0.1, 0.0) - 0.9).abs() < 1e-3);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let cfg = AdamWConfig::default();
        let err = adamw_update(&mut [0.0; 2], &[0.0], &mut [0.0; 2], &mut [0.0; 2], 1, 1e-3, &cfg);
        assert!(matches!(err, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn groups_and_freezing() {
        assert_eq!(ParamGroup::of("encoder.layers.0.fc1.weight"), ParamGroup::Encoder);
        assert_eq!(ParamGroup::of("decoder.group_fc.bias"), ParamGroup::Decoder);
        assert!(is_frozen("encoder.layers.1.fc1.weight", 2));
        assert!(!is_frozen("encoder.layers.2.fc1.weight", 2));
        assert!(is_frozen("encoder.patch_embed.weight", 1));
        assert!(!is_frozen("encoder.norm.gamma", 40));
        assert!(!is_frozen("encoder.patch_embed.weight", 0));
    }

    #[test]
    fn group_learning_rates_apply_per_prefix() {
        let mut state = ModelState::init(&ModelConfig::toy(), 1).unwrap();
        let before = state.params.clone();
        let mut grads = state.params.zeros_like();
        grads.fill(1.0);
        let mut opt = AdamW::new(
            &state.params,
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
        );
        let lrs = GroupLrs {
            encoder: 1e-4,
            decoder: 1e-2,
        };
        opt.step(&mut state.params, &grads, lrs, 0).unwrap();
        for (a, b) in state.params.views().iter().zip(before.views()) {
            let expected = lrs.get(ParamGroup::of(&a.name)) / (1.0 + 1e-8);
            for (x, y) in a.data.iter().zip(b.data) {
                assert!(((y - x) - expected).abs() < 1e-12, "{}", a.name);
            }
        }
    }

    #[test]
    fn frozen_layers_do_not_move() {
        let mut state = ModelState::init(&ModelConfig::toy(), 1).unwrap();
        let before = state.params.clone();
        let mut grads = state.params.zeros_like();
        grads.fill(0.5);
        let mut opt = AdamW::new(&state.params, AdamWConfig::default());
        opt.step(
            &mut state.params,
            &grads,
            GroupLrs {
                encoder: 1e-3,
                decoder: 1e-3,
            },
            1,
        )
        .unwrap();
        assert_eq!(state.params.encoder.layers[0], before.encoder.layers[0]);
        assert_eq!(state.params.encoder.patch_embed, before.encoder.patch_embed);
        assert_ne!(state.params.encoder.layers[1], before.encoder.layers[1]);
    }
}

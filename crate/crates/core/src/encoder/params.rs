use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    /// Model width; equals the shot feature width.
    pub dim: usize,
    pub ffn_width: usize,
    pub rope_base: f64,
    pub rms_eps: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    /// Desk-scale model.
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            dim: 32,
            ffn_width: 64,
            rope_base: 10_000.0,
            rms_eps: 1e-6,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Four layers, four heads, width 1024, feed-forward 2048.
    pub fn full_scale() -> Self {
        Self {
            layers: 4,
            heads: 4,
            dim: 1024,
            ffn_width: 2048,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.dim == 0 || self.ffn_width == 0 {
            return Err(invalid("encoder dimensions must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(invalid(format!(
                "width {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.head_dim() % 2 != 0 {
            return Err(invalid(format!(
                "head width {} must be even for rotary embeddings",
                self.head_dim()
            )));
        }
        if !(self.rope_base > 0.0 && self.rms_eps >= 0.0 && self.init_scale >= 0.0) {
            return Err(invalid("rope_base must be > 0, rms_eps and init_scale >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub attn_norm: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ffn_norm: Matrix,
    pub w_up: Matrix,
    pub w_gate: Matrix,
    pub w_down: Matrix,
}

impl LayerParams {
    const NAMES: [&'static str; 9] = [
        "attn_norm", "w_q", "w_k", "w_v", "w_o", "ffn_norm", "w_up", "w_gate", "w_down",
    ];

    fn tensors(&self) -> [&Matrix; 9] {
        [
            &self.attn_norm,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.ffn_norm,
            &self.w_up,
            &self.w_gate,
            &self.w_down,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 9] {
        [
            &mut self.attn_norm,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.ffn_norm,
            &mut self.w_up,
            &mut self.w_gate,
            &mut self.w_down,
        ]
    }
}

/// All trainable state: per-layer weights plus the mask placeholder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub layers: Vec<LayerParams>,
    /// `1 × D` learnable row substituted for masked trailer tokens.
    pub mask_placeholder: Matrix,
}

impl ModelParams {
    /// Expected `(name, rows, cols)` of every tensor in declaration order.
    pub fn layout(config: &EncoderConfig) -> Vec<(String, usize, usize)> {
        let (d, f) = (config.dim, config.ffn_width);
        let shapes = [(1, d), (d, d), (d, d), (d, d), (d, d), (1, d), (d, f), (d, f), (f, d)];
        let mut out = Vec::new();
        for l in 0..config.layers {
            for (name, (r, c)) in LayerParams::NAMES.iter().zip(shapes) {
                out.push((format!("layers.{l}.{name}"), r, c));
            }
        }
        out.push(("mask_placeholder".to_string(), 1, d));
        out
    }

    /// Tensors in declaration order (matches [`ModelParams::layout`]).
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        out.push(&self.mask_placeholder);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        out.push(&mut self.mask_placeholder);
        out
    }

    pub fn names(&self) -> Vec<String> {
        Self::layout(&self.config).into_iter().map(|(n, _, _)| n).collect()
    }

    /// Rebuilds parameters from tensors in declaration order.
    pub fn from_tensors(config: EncoderConfig, tensors: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let layout = Self::layout(&config);
        if tensors.len() != layout.len() {
            return Err(invalid(format!(
                "expected {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, r, c), t) in layout.iter().zip(&tensors) {
            if t.shape() != (*r, *c) {
                return Err(invalid(format!(
                    "tensor {name} has shape {:?}, expected ({r}, {c})",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut next = || it.next().expect("count checked");
            layers.push(LayerParams {
                attn_norm: next(),
                w_q: next(),
                w_k: next(),
                w_v: next(),
                w_o: next(),
                ffn_norm: next(),
                w_up: next(),
                w_gate: next(),
                w_down: next(),
            });
        }
        let mask_placeholder = it.next().expect("count checked");
        Ok(Self {
            config,
            layers,
            mask_placeholder,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// RMSNorm gains are excluded from weight decay.
    pub fn decays(&self) -> Vec<bool> {
        Self::layout(&self.config)
            .iter()
            .map(|(name, _, _)| !name.ends_with("_norm"))
            .collect()
    }
}

/// Scaled-normal initialisation: weight entries are `N(0, (init_scale /
/// sqrt(fan_in))^2)`, the mask placeholder is drawn like a row of a `D`-input
/// weight, and RMSNorm gains start at exactly one.
pub fn init_params(config: &EncoderConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let tensors = ModelParams::layout(config)
        .into_iter()
        .map(|(name, r, c)| {
            if name.ends_with("_norm") {
                return Ok(Matrix::filled(r, c, 1.0));
            }
            let fan_in = if name == "mask_placeholder" { c } else { r };
            let std = config.init_scale / (fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| invalid(e.to_string()))?;
            Ok(Matrix::from_fn(r, c, |_, _| normal.sample(&mut rng)))
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::from_tensors(config.clone(), tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let cfg = EncoderConfig::default();
        assert_eq!(init_params(&cfg).unwrap(), init_params(&cfg).unwrap());
        let other = EncoderConfig { seed: 1, ..cfg.clone() };
        assert_ne!(init_params(&cfg).unwrap(), init_params(&other).unwrap());
    }

    #[test]
    fn gains_start_at_one() {
        let p = init_params(&EncoderConfig::default()).unwrap();
        for l in &p.layers {
            assert!(l.attn_norm.as_slice().iter().all(|&g| g == 1.0));
            assert!(l.ffn_norm.as_slice().iter().all(|&g| g == 1.0));
        }
    }

    #[test]
    fn weight_std_matches_scale() {
        let cfg = EncoderConfig {
            layers: 1,
            heads: 4,
            dim: 256,
            ffn_width: 64,
            init_scale: 0.8,
            ..EncoderConfig::default()
        };
        let p = init_params(&cfg).unwrap();
        let w = p.layers[0].w_q.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let target = 0.8 / 16.0;
        assert!((std - target).abs() / target < 0.1, "std {std} vs {target}");
    }

    #[test]
    fn rejects_bad_head_split() {
        let cfg = EncoderConfig { dim: 30, heads: 4, ..EncoderConfig::default() };
        assert!(init_params(&cfg).is_err());
        let odd = EncoderConfig { dim: 6, heads: 2, ..EncoderConfig::default() };
        assert!(init_params(&odd).is_err());
    }

    #[test]
    fn layout_matches_tensors() {
        let p = init_params(&EncoderConfig::default()).unwrap();
        let layout = ModelParams::layout(&p.config);
        assert_eq!(layout.len(), p.tensors().len());
        for ((_, r, c), t) in layout.iter().zip(p.tensors()) {
            assert_eq!((*r, *c), t.shape());
        }
        assert_eq!(p.mask_placeholder.shape(), (1, 32));
    }
}

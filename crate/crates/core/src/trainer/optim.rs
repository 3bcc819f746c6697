use serde::{Deserialize, Serialize};

use crate::encoder::ModelParams;
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

/// Adam with decoupled weight decay and bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(invalid("AdamW betas must lie in [0, 1)"));
        }
        if !(config.eps > 0.0) || !(config.weight_decay >= 0.0) {
            return Err(invalid("AdamW needs eps > 0 and weight_decay >= 0"));
        }
        let first: Vec<Matrix> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        let second = first.clone();
        Ok(Self {
            config,
            step: 0,
            first,
            second,
        })
    }

    pub fn for_params(config: AdamWConfig, params: &ModelParams) -> Result<Self> {
        Self::new(config, params.tensors().iter().map(|t| t.shape()))
    }

    /// Updates taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are checked for finiteness before any
    /// parameter is touched.
    pub fn step(
        &mut self,
        params: &mut [&mut Matrix],
        grads: &[Matrix],
        names: &[String],
        decay: &[bool],
        lr: f64,
    ) -> Result<()> {
        let n = self.first.len();
        if params.len() != n || grads.len() != n || names.len() != n || decay.len() != n {
            return Err(shape_mismatch("optimizer tensor count", n, params.len()));
        }
        for k in 0..n {
            if params[k].shape() != self.first[k].shape() || grads[k].shape() != self.first[k].shape() {
                return Err(shape_mismatch(
                    "optimizer tensor shape",
                    format!("{:?}", self.first[k].shape()),
                    format!("{:?}/{:?}", params[k].shape(), grads[k].shape()),
                ));
            }
            if !grads[k].is_finite() {
                return Err(Error::NonFiniteGradient { name: names[k].clone() });
            }
        }
        if !lr.is_finite() || lr < 0.0 {
            return Err(invalid(format!("learning rate {lr} must be finite and >= 0")));
        }

        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for k in 0..n {
            let shrink = if decay[k] { 1.0 - lr * weight_decay } else { 1.0 };
            let p = params[k].as_mut_slice();
            let g = grads[k].as_slice();
            let m = self.first[k].as_mut_slice();
            let v = self.second[k].as_mut_slice();
            for x in 0..p.len() {
                m[x] = beta1 * m[x] + (1.0 - beta1) * g[x];
                v[x] = beta2 * v[x] + (1.0 - beta2) * g[x] * g[x];
                let m_hat = m[x] / c1;
                let v_hat = v[x] / c2;
                p[x] = p[x] * shrink - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One AdamW update of all model tensors; norm gains are not decayed.
pub fn optimizer_step(params: &mut ModelParams, grads: &[Matrix], opt: &mut AdamW, lr: f64) -> Result<()> {
    let names = params.names();
    let decay = params.decays();
    let mut tensors = params.tensors_mut();
    opt.step(&mut tensors, grads, &names, &decay, lr)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrShape {
    #[default]
    Cosine,
    Linear,
    Constant,
}

/// Linear warmup to `peak`, then decay to zero over the remaining steps.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub shape: LrShape,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_ratio: f64, total_steps: usize, shape: LrShape) -> Result<Self> {
        if !(0.0..=1.0).contains(&warmup_ratio) {
            return Err(invalid(format!("warmup ratio {warmup_ratio} outside [0, 1]")));
        }
        if !(peak >= 0.0 && peak.is_finite()) {
            return Err(invalid(format!("learning rate {peak} must be finite and >= 0")));
        }
        Ok(Self {
            peak,
            warmup_steps: (warmup_ratio * total_steps as f64).ceil() as usize,
            total_steps,
            shape,
        })
    }

    /// Rate for the 0-based update `step`.
    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        match self.shape {
            LrShape::Cosine => self.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()),
            LrShape::Linear => self.peak * (1.0 - progress),
            LrShape::Constant => self.peak,
        }
    }
}

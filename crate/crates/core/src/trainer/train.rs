use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::curves::{CurveRow, TrainingCurves};
use super::loss::{compute_loss, pair_accuracy, predict_graph, LossMode};
use super::masking::mask_sequence;
use super::optim::{optimizer_step, AdamW, AdamWConfig, LrSchedule, LrShape};
use crate::autograd::Graph;
use crate::corpus::MovieTrailerPair;
use crate::encoder::{init_params, BoundParams, EncoderConfig, ModelParams};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::schedule::{init_scheduler, ScheduleTrace, SchedulerHyper, SchedulerMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup_ratio: f64,
    pub lr_schedule: LrShape,
    pub loss: LossMode,
    pub scheduler: SchedulerMode,
    pub scheduler_hyper: SchedulerHyper,
    /// Overrides `epochs` when set: train for exactly this many updates,
    /// cycling through epochs as needed.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 5,
            learning_rate: 3e-3,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            warmup_ratio: 0.1,
            lr_schedule: LrShape::Cosine,
            loss: LossMode::Ce,
            scheduler: SchedulerMode::SelfPaced,
            scheduler_hyper: SchedulerHyper::default(),
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings: 500 epochs at learning rate 1e-4.
    pub fn full_scale() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        if self.max_steps.is_none() && self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.max_steps == Some(0) {
            return Err(invalid("max_steps must be >= 1"));
        }
        self.scheduler_hyper.validate()
    }

    pub fn total_steps(&self, corpus_len: usize) -> usize {
        self.max_steps
            .unwrap_or_else(|| self.epochs * corpus_len.div_ceil(self.batch_size))
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curves: TrainingCurves,
    /// Scheduler state after each step, starting with the initial state.
    pub schedule: ScheduleTrace,
}

/// Trains a freshly initialised encoder.
pub fn train(corpus: &[MovieTrailerPair], encoder: &EncoderConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(init_params(encoder)?, corpus, config, |_| {})
}

/// Trains `params` in place, calling `observe` after every update.
pub fn train_from(
    mut params: ModelParams,
    corpus: &[MovieTrailerPair],
    config: &TrainConfig,
    mut observe: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let dim = params.config.dim;
    if let Some(p) = corpus.iter().find(|p| p.movie.cols() != dim) {
        return Err(shape_mismatch("feature width vs model", dim, p.movie.cols()));
    }
    let data: Vec<(Matrix, Matrix)> = corpus
        .iter()
        .map(|p| (p.movie.to_matrix(), p.trailer.to_matrix()))
        .collect();

    let total = config.total_steps(corpus.len());
    let lr = LrSchedule::new(config.learning_rate, config.warmup_ratio, total, config.lr_schedule)?;
    let mut opt = AdamW::for_params(config.adamw(), &params)?;
    let mut scheduler = init_scheduler(
        config.scheduler,
        config.scheduler_hyper.clone(),
        total,
        derive_seed(config.seed, 3),
    )?;
    let mut shuffle_rng = seeded(derive_seed(config.seed, 1));
    let mut mask_rng = seeded(derive_seed(config.seed, 2));

    let mut curves = TrainingCurves::default();
    let mut schedule = ScheduleTrace::default();
    schedule.record(&scheduler);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut step = 0;
    'epochs: loop {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            if step == total {
                break 'epochs;
            }
            let t = scheduler.t;
            let rate = lr.at(step);
            let mut grads: Option<Vec<Matrix>> = None;
            let (mut loss_sum, mut acc_sum) = (0.0, 0.0);
            for &k in batch {
                let (movie, trailer) = &data[k];
                let masked = mask_sequence(trailer, &params.mask_placeholder, t, &mut mask_rng)?;
                let mut g = Graph::new();
                let bound = BoundParams::bind(&mut g, &params, true);
                let diverged = |e: Error| match e {
                    Error::NonFinite { .. } => Error::Divergence { step: step + 1 },
                    other => other,
                };
                let pred = predict_graph(&mut g, &params.config, &bound, movie, &masked).map_err(diverged)?;
                let loss = compute_loss(&mut g, &pred, movie, &corpus[k].truth, &masked, config.loss)
                    .map_err(diverged)?;
                let value = g.value(loss).get(0, 0);
                if !value.is_finite() {
                    return Err(Error::Divergence { step: step + 1 });
                }
                g.backward(loss).map_err(diverged)?;
                loss_sum += value;
                acc_sum += pair_accuracy(g.value(pred.probs), &corpus[k].truth, &masked)?;
                let pair_grads = bound.grads(&g);
                match grads.as_mut() {
                    None => grads = Some(pair_grads),
                    Some(acc) => acc.iter_mut().zip(&pair_grads).for_each(|(a, b)| a.add_scaled(b, 1.0)),
                }
            }
            let n = batch.len() as f64;
            let mut grads = grads.expect("batches are non-empty");
            for g in &mut grads {
                *g = g.map(|x| x / n);
            }
            optimizer_step(&mut params, &grads, &mut opt, rate)?;
            let accuracy = acc_sum / n;
            scheduler.step(accuracy)?;
            step += 1;
            schedule.record(&scheduler);
            let row = CurveRow {
                step,
                loss: loss_sum / n,
                accuracy,
                mask_ratio: t,
                lr: rate,
            };
            observe(&row);
            curves.rows.push(row);
        }
    }
    Ok(TrainOutcome {
        params,
        curves,
        schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_pair, SynthConfig};
    use crate::encoder::write_checkpoint;
    use crate::trainer::{batch_accuracy, predict_probs, MaskedSequence};

    fn tiny_corpus(n: usize) -> (Vec<MovieTrailerPair>, EncoderConfig) {
        let sc = SynthConfig {
            movie_shots: 10,
            trailer_shots: 4,
            dim: 8,
            clusters: 3,
            ..SynthConfig::default()
        };
        let corpus = (0..n as u64).map(|s| synth_pair(&sc, s).unwrap().pair).collect();
        let enc = EncoderConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ffn_width: 16,
            ..EncoderConfig::default()
        };
        (corpus, enc)
    }

    #[test]
    fn one_pair_one_step() {
        let (corpus, enc) = tiny_corpus(1);
        let cfg = TrainConfig {
            max_steps: Some(1),
            ..TrainConfig::default()
        };
        let out = train(&corpus, &enc, &cfg).unwrap();
        assert_eq!(out.curves.len(), 1);
        assert_eq!(out.schedule.rows.len(), 2);
        assert_eq!(out.curves.rows[0].mask_ratio, 0.1);
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let (corpus, enc) = tiny_corpus(6);
        let cfg = TrainConfig {
            max_steps: Some(5),
            batch_size: 2,
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train(&corpus, &enc, &cfg).unwrap();
        let b = train(&corpus, &enc, &cfg).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_checkpoint(&mut ba, &a.params).unwrap();
        write_checkpoint(&mut bb, &b.params).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.curves, b.curves);
        let c = train(&corpus, &enc, &TrainConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a.curves, c.curves);
    }

    #[test]
    fn epochs_determine_step_count() {
        let (corpus, enc) = tiny_corpus(7);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.total_steps(7), 6);
        let out = train(&corpus, &enc, &cfg).unwrap();
        assert_eq!(out.curves.len(), 6);
        assert_eq!(out.curves.rows.last().unwrap().step, 6);
    }

    #[test]
    fn loss_decreases_on_a_small_problem() {
        let (corpus, enc) = tiny_corpus(4);
        let cfg = TrainConfig {
            max_steps: Some(150),
            batch_size: 4,
            learning_rate: 3e-3,
            scheduler: SchedulerMode::LinearInc,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &enc, &cfg).unwrap();
        let first: f64 = out.curves.rows[..10].iter().map(|r| r.loss / r.mask_ratio).sum();
        let last: f64 = out.curves.rows[140..].iter().map(|r| r.loss / r.mask_ratio).sum();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn zero_learning_rate_leaves_accuracy_unchanged() {
        let (corpus, enc) = tiny_corpus(3);
        let params = init_params(&enc).unwrap();
        let batch: Vec<(Matrix, MaskedSequence)> = corpus
            .iter()
            .map(|p| {
                let t = p.trailer.to_matrix();
                let mask = (0..t.rows()).map(|j| j % 2 == 0).collect();
                let m = MaskedSequence::from_mask(&t, &params.mask_placeholder, mask, 0.5).unwrap();
                (p.movie.to_matrix(), m)
            })
            .collect();
        let accuracy = |params: &ModelParams| {
            let probs: Vec<Matrix> = batch
                .iter()
                .map(|(m, s)| predict_probs(params, m, s).unwrap().1)
                .collect();
            let items: Vec<_> = probs
                .iter()
                .zip(&batch)
                .zip(&corpus)
                .map(|((p, (_, s)), pair)| (p, &pair.truth, s))
                .collect();
            batch_accuracy(&items).unwrap()
        };
        let before = accuracy(&params);
        let cfg = TrainConfig {
            max_steps: Some(1),
            batch_size: 3,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train_from(params.clone(), &corpus, &cfg, |_| {}).unwrap();
        assert_eq!(out.params, params);
        assert_eq!(accuracy(&out.params), before);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (corpus, enc) = tiny_corpus(2);
        assert!(train(&[], &enc, &TrainConfig::default()).is_err());
        let wide = EncoderConfig { dim: 16, ..enc.clone() };
        assert!(train(&corpus, &wide, &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(&corpus, &enc, &bad).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "lr": 1}"#).is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "scheduler": "random"}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.scheduler, SchedulerMode::Random);
    }
}

//! Mask-ratio schedulers.
//!
//! The self-paced scheduler keeps a momentum `b` of batch accuracy and moves
//! the ratio towards `t_min + (t_max - t_min) * sigmoid(beta * (b - 0.5))`,
//! never letting it fall when `monotone` is set. The random and linear
//! schedules are ablation baselines and ignore accuracy entirely.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    SelfPaced,
    Random,
    LinearInc,
    LinearDec,
}

impl SchedulerMode {
    pub const ALL: [SchedulerMode; 4] = [
        SchedulerMode::SelfPaced,
        SchedulerMode::Random,
        SchedulerMode::LinearInc,
        SchedulerMode::LinearDec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerMode::SelfPaced => "self_paced",
            SchedulerMode::Random => "random",
            SchedulerMode::LinearInc => "linear_inc",
            SchedulerMode::LinearDec => "linear_dec",
        }
    }
}

impl fmt::Display for SchedulerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown scheduler `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerHyper {
    /// Weight of the current accuracy in the momentum update.
    pub mu_a: f64,
    /// Weight of the previous ratio in the ratio update.
    pub mu_t: f64,
    /// Sigmoid sharpness.
    pub beta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub monotone: bool,
}

impl Default for SchedulerHyper {
    fn default() -> Self {
        Self {
            mu_a: 0.98,
            mu_t: 0.1,
            beta: 10.0,
            t_min: 0.1,
            t_max: 1.0,
            monotone: true,
        }
    }
}

impl SchedulerHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_min && self.t_min < self.t_max && self.t_max <= 1.0) {
            return Err(invalid(format!(
                "need 0 < t_min < t_max <= 1, got t_min={} t_max={}",
                self.t_min, self.t_max
            )));
        }
        for (name, v) in [("mu_a", self.mu_a), ("mu_t", self.mu_t)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !self.beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        Ok(())
    }

    /// `t_min + (t_max - t_min) * sigmoid(beta * (b - 0.5))`
    pub fn target(&self, b: f64) -> f64 {
        let s = 1.0 / (1.0 + (-self.beta * (b - 0.5)).exp());
        self.t_min + (self.t_max - self.t_min) * s
    }
}

/// One self-paced update from `(b_n, t_n)` given accuracy `a_n`; returns
/// `(b_{n+1}, t_tilde_{n+1}, t_{n+1})`.
pub fn self_paced_update(hyper: &SchedulerHyper, b: f64, t: f64, a: f64) -> (f64, f64, f64) {
    let b_next = hyper.mu_a * a + (1.0 - hyper.mu_a) * b;
    let t_tilde = hyper.mu_t * t + (1.0 - hyper.mu_t) * hyper.target(b_next);
    let t_next = if hyper.monotone { t.max(t_tilde) } else { t_tilde };
    // rounding can push a convex combination a hair outside the bounds
    (b_next, t_tilde, t_next.clamp(hyper.t_min, hyper.t_max))
}

#[derive(Clone, Debug)]
pub struct SchedulerState {
    /// Accuracy momentum.
    pub b: f64,
    /// Ratio to use for the next optimisation step.
    pub t: f64,
    /// Number of accuracies consumed so far.
    pub step: usize,
    pub hyper: SchedulerHyper,
    pub mode: SchedulerMode,
    /// Planned optimisation steps; anchors the linear schedules.
    pub total_steps: usize,
    rng: SeededRng,
}

pub fn init_scheduler(
    mode: SchedulerMode,
    hyper: SchedulerHyper,
    total_steps: usize,
    seed: u64,
) -> Result<SchedulerState> {
    hyper.validate()?;
    if matches!(mode, SchedulerMode::LinearInc | SchedulerMode::LinearDec) && total_steps == 0 {
        return Err(invalid("linear schedules need total_steps >= 1"));
    }
    let mut state = SchedulerState {
        b: 0.0,
        t: hyper.t_min,
        step: 0,
        hyper,
        mode,
        total_steps,
        rng: seeded(seed),
    };
    state.t = state.ratio_for_step(0);
    Ok(state)
}

impl SchedulerState {
    fn ratio_for_step(&mut self, n: usize) -> f64 {
        let h = &self.hyper;
        let frac = || (n as f64 / self.total_steps as f64).min(1.0);
        match self.mode {
            SchedulerMode::SelfPaced => self.t,
            SchedulerMode::Random => self.rng.random_range(h.t_min..=h.t_max),
            SchedulerMode::LinearInc => h.t_min + (h.t_max - h.t_min) * frac(),
            SchedulerMode::LinearDec => h.t_max - (h.t_max - h.t_min) * frac(),
        }
    }

    /// Consumes the accuracy of the step just taken and returns the ratio
    /// for the next one.
    pub fn step(&mut self, accuracy: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(invalid(format!("accuracy {accuracy} outside [0, 1]")));
        }
        self.step += 1;
        self.t = match self.mode {
            SchedulerMode::SelfPaced => {
                let (b, _, t) = self_paced_update(&self.hyper, self.b, self.t, accuracy);
                self.b = b;
                t
            }
            _ => self.ratio_for_step(self.step),
        };
        Ok(self.t)
    }
}

/// Free-function form of [`SchedulerState::step`].
pub fn scheduler_step(state: &mut SchedulerState, accuracy: f64) -> Result<f64> {
    state.step(accuracy)
}

/// `(step, b, t)` rows, exportable as CSV with header `step,b,t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleTrace {
    pub rows: Vec<(usize, f64, f64)>,
}

impl ScheduleTrace {
    pub fn record(&mut self, state: &SchedulerState) {
        self.rows.push((state.step, state.b, state.t));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,b,t\n");
        for (s, b, t) in &self.rows {
            out.push_str(&format!("{s},{b},{t}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("step,b,t") {
            return Err(Error::Format("schedule trace must start with `step,b,t`".into()));
        }
        let rows = lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || Error::Format(format!("bad schedule row `{line}`"));
                if f.len() != 3 {
                    return Err(bad());
                }
                Ok((
                    f[0].parse().map_err(|_| bad())?,
                    f[1].parse().map_err(|_| bad())?,
                    f[2].parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

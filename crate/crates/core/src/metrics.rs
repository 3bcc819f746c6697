//! Shot-selection and shot-ordering metrics over 1-based index sequences.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision, recall and F1 with a positional tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when either sequence was empty and the scores were zeroed.
    pub degenerate: bool,
}

/// Set-based precision/recall where a predicted shot counts if it lies
/// within `radius` of any ground-truth shot. Duplicates are ignored.
pub fn prf(pred: &[usize], truth: &[usize], radius: usize) -> Prf {
    let pred: BTreeSet<usize> = pred.iter().copied().collect();
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    if pred.is_empty() || truth.is_empty() {
        return Prf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        };
    }
    let near = |x: usize, set: &BTreeSet<usize>| set.range(x.saturating_sub(radius)..=x + radius).next().is_some();
    let hits = pred.iter().filter(|&&p| near(p, &truth)).count();
    let found = truth.iter().filter(|&&g| near(g, &pred)).count();
    let precision = hits as f64 / pred.len() as f64;
    let recall = found as f64 / truth.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        degenerate: false,
    }
}

/// Unit-cost insert/delete/substitute edit distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Fraction of pairs of shared shots whose relative order agrees between
/// the two sequences, using first occurrences. Zero when fewer than two
/// shots are shared.
pub fn pairwise_agreement(pred: &[usize], truth: &[usize]) -> f64 {
    let first = |s: &[usize]| {
        let mut pos = HashMap::new();
        for (k, &x) in s.iter().enumerate() {
            pos.entry(x).or_insert(k);
        }
        pos
    };
    let (pp, tp) = (first(pred), first(truth));
    let mut common: Vec<usize> = pp.keys().filter(|x| tp.contains_key(x)).copied().collect();
    if common.len() < 2 {
        return 0.0;
    }
    common.sort_unstable();
    let (mut agree, mut total) = (0usize, 0usize);
    for a in 0..common.len() {
        for b in a + 1..common.len() {
            let (x, y) = (common[a], common[b]);
            total += 1;
            if (pp[&x] < pp[&y]) == (tp[&x] < tp[&y]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// All metrics for one generated trailer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub id: String,
    #[serde(rename = "R")]
    pub radius: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub levenshtein: usize,
    pub agreement: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl MetricReport {
    pub fn compute(id: impl Into<String>, pred: &[usize], truth: &[usize], radius: usize) -> Self {
        let p = prf(pred, truth, radius);
        Self {
            id: id.into(),
            radius,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            levenshtein: levenshtein(pred, truth),
            agreement: pairwise_agreement(pred, truth),
            degenerate: p.degenerate,
        }
    }
}

/// Per-pair reports plus their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub pairs: Vec<MetricReport>,
}

const CSV_HEADER: &str = "id,precision,recall,f1,ld,aa";

impl EvaluationReport {
    /// Means over pairs; `levenshtein` is rounded to the nearest integer.
    pub fn mean(&self) -> Result<MetricReport> {
        if self.pairs.is_empty() {
            return Err(Error::Empty("evaluation report"));
        }
        let n = self.pairs.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| self.pairs.iter().map(f).sum::<f64>() / n;
        Ok(MetricReport {
            id: "mean".into(),
            radius: self.pairs[0].radius,
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            levenshtein: avg(|r| r.levenshtein as f64).round() as usize,
            agreement: avg(|r| r.agreement),
            degenerate: false,
        })
    }

    pub fn mean_levenshtein(&self) -> f64 {
        self.pairs.iter().map(|r| r.levenshtein as f64).sum::<f64>() / self.pairs.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per pair followed by a `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("{CSV_HEADER}\n");
        let mut row = |id: &str, r: &MetricReport, ld: f64| {
            out.push_str(&format!("{id},{},{},{},{ld},{}\n", r.precision, r.recall, r.f1, r.agreement));
        };
        for r in &self.pairs {
            if r.id.contains(',') || r.id.contains('\n') {
                return Err(Error::Format(format!("pair id `{}` cannot be written to CSV", r.id)));
            }
            row(&r.id, r, r.levenshtein as f64);
        }
        let mean = self.mean()?;
        row("mean", &mean, self.mean_levenshtein());
        Ok(out)
    }
}

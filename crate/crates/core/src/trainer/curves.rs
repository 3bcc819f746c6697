use crate::error::{Error, Result};

const HEADER: &str = "step,loss,accuracy,mask_ratio,lr";

/// One optimisation step: mean batch loss, batch accuracy, the mask ratio
/// used and the learning rate applied. Steps count from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub mask_ratio: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCurves {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurves {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&CurveRow> {
        self.rows.last()
    }

    /// First step at which the trailing `window`-step mean accuracy reaches
    /// `threshold`.
    pub fn steps_to_accuracy(&self, threshold: f64, window: usize) -> Option<usize> {
        let window = window.max(1);
        let mut sum = 0.0;
        for (k, row) in self.rows.iter().enumerate() {
            sum += row.accuracy;
            if k >= window {
                sum -= self.rows[k - window].accuracy;
            }
            if k + 1 >= window && sum / window as f64 >= threshold {
                return Some(row.step);
            }
        }
        None
    }

    /// Mean accuracy over the last `n` steps.
    pub fn tail_accuracy(&self, n: usize) -> f64 {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|r| r.accuracy).sum::<f64>() / tail.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.step, r.loss, r.accuracy, r.mask_ratio, r.lr));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Format(format!("training curves must start with `{HEADER}`")));
        }
        let rows = lines
            .map(|line| {
                let bad = || Error::Format(format!("bad curve row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(CurveRow {
                    step: f[0].parse().map_err(|_| bad())?,
                    loss: num(f[1])?,
                    accuracy: num(f[2])?,
                    mask_ratio: num(f[3])?,
                    lr: num(f[4])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curves(acc: &[f64]) -> TrainingCurves {
        TrainingCurves {
            rows: acc
                .iter()
                .enumerate()
                .map(|(k, &a)| CurveRow {
                    step: k + 1,
                    loss: 1.0 / (k + 1) as f64,
                    accuracy: a,
                    mask_ratio: 0.1,
                    lr: 1e-3,
                })
                .collect(),
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = curves(&[0.1, 0.25, 1.0 / 3.0]);
        let text = c.to_csv();
        assert!(text.starts_with("step,loss,accuracy,mask_ratio,lr\n"));
        let back = TrainingCurves::from_csv(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_csv(), text);
        assert!(TrainingCurves::from_csv("step,loss\n").is_err());
        assert!(TrainingCurves::from_csv("step,loss,accuracy,mask_ratio,lr\n1,2\n").is_err());
    }

    #[test]
    fn smoothed_threshold_crossing() {
        let c = curves(&[0.5, 1.0, 0.9, 1.0, 1.0]);
        assert_eq!(c.steps_to_accuracy(0.95, 1), Some(2));
        assert_eq!(c.steps_to_accuracy(0.95, 2), Some(3));
        assert_eq!(c.steps_to_accuracy(0.96, 2), Some(5));
        assert_eq!(c.steps_to_accuracy(0.99, 3), None);
        assert!((c.tail_accuracy(2) - 1.0).abs() < 1e-15);
    }
}

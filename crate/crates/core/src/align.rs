//! Monotone narration-to-shot alignment under duration limits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;

/// Similarities `C` (`N × J`, row-major) with narration and shot durations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentProblem {
    #[serde(rename = "C")]
    pub similarity: Vec<Vec<f64>>,
    #[serde(rename = "L_nar")]
    pub narration_durations: Vec<f64>,
    #[serde(rename = "L_shot")]
    pub shot_durations: Vec<f64>,
}

impl AlignmentProblem {
    pub fn validate(&self) -> Result<()> {
        let (n, j) = (self.narration_durations.len(), self.shot_durations.len());
        if n == 0 || j == 0 {
            return Err(invalid("alignment needs at least one narration and one shot"));
        }
        if self.similarity.len() != n {
            return Err(shape_mismatch("similarity rows vs narrations", n, self.similarity.len()));
        }
        if let Some(row) = self.similarity.iter().find(|r| r.len() != j) {
            return Err(shape_mismatch("similarity columns vs shots", j, row.len()));
        }
        if self.similarity.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("similarities must be finite"));
        }
        let positive = |d: &f64| d.is_finite() && *d > 0.0;
        if !self.narration_durations.iter().all(positive) || !self.shot_durations.iter().all(positive) {
            return Err(invalid("durations must be finite and positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// 1-based narration placed on a 1-based shot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub narration: usize,
    pub shot: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alignment {
    pub assignments: Vec<Assignment>,
    pub score: f64,
}

impl Alignment {
    /// Narrations (1-based) that were not placed.
    pub fn unassigned(&self, narrations: usize) -> Vec<usize> {
        (1..=narrations)
            .filter(|n| !self.assignments.iter().any(|a| a.narration == *n))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Places narrations `1..=N'` on strictly increasing shots, maximising the
/// summed similarity. A narration may only use a shot at least as long as
/// itself. `N'` is `N` when some full placement fits, otherwise the longest
/// feasible prefix. Among optimal placements the one whose last shot is
/// smallest wins, then the second to last, and so on.
pub fn align_narrations(problem: &AlignmentProblem) -> Result<Alignment> {
    problem.validate()?;
    let n = problem.narration_durations.len();
    let j = problem.shot_durations.len();
    // d[r][c]: best score placing narrations 1..=r on shots 1..=c
    let mut d = Matrix::filled(n + 1, j + 1, f64::NEG_INFINITY);
    d.row_mut(0).fill(0.0);
    for r in 1..=n {
        for c in 1..=j {
            let skip = d.get(r, c - 1);
            let fits = problem.shot_durations[c - 1] >= problem.narration_durations[r - 1];
            let take = if fits {
                d.get(r - 1, c - 1) + problem.similarity[r - 1][c - 1]
            } else {
                f64::NEG_INFINITY
            };
            d.set(r, c, skip.max(take));
        }
    }
    let Some(rows) = (1..=n).rev().find(|&r| d.get(r, j) > f64::NEG_INFINITY) else {
        return Ok(Alignment {
            assignments: Vec::new(),
            score: 0.0,
        });
    };
    let score = d.get(rows, j);
    // smallest column already reaching the optimum
    let mut c = (1..=j).find(|&c| d.get(rows, c) == score).expect("optimum is attained");
    let mut assignments = Vec::with_capacity(rows);
    let mut r = rows;
    while r > 0 {
        // prefer skipping whenever it keeps the same value
        if c > 1 && d.get(r, c - 1) == d.get(r, c) {
            c -= 1;
            continue;
        }
        assignments.push(Assignment { narration: r, shot: c });
        r -= 1;
        c -= 1;
    }
    assignments.reverse();
    let total = assignments
        .iter()
        .map(|a| problem.similarity[a.narration - 1][a.shot - 1])
        .sum::<f64>();
    if total != score {
        return Err(Error::Internal(format!("traceback score {total} differs from table {score}")));
    }
    Ok(Alignment { assignments, score })
}

/// Number of segments cut by strictly increasing interior boundaries.
pub fn trailer_length_from_segments(boundaries: &[f64]) -> Result<usize> {
    if boundaries.iter().any(|b| !b.is_finite()) {
        return Err(invalid("segment boundaries must be finite"));
    }
    if let Some(w) = boundaries.windows(2).find(|w| w[1] <= w[0]) {
        return Err(invalid(format!(
            "segment boundaries must be strictly increasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(boundaries.len() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(c: Vec<Vec<f64>>, nar: Vec<f64>, shot: Vec<f64>) -> AlignmentProblem {
        AlignmentProblem {
            similarity: c,
            narration_durations: nar,
            shot_durations: shot,
        }
    }

    #[test]
    fn single_cell() {
        let a = align_narrations(&problem(vec![vec![0.7]], vec![1.0], vec![2.0])).unwrap();
        assert_eq!(a.assignments, vec![Assignment { narration: 1, shot: 1 }]);
        assert_eq!(a.score, 0.7);
    }

    #[test]
    fn nothing_fits() {
        let a = align_narrations(&problem(vec![vec![1.0, 2.0]], vec![9.0], vec![1.0, 2.0])).unwrap();
        assert!(a.assignments.is_empty());
        assert_eq!(a.unassigned(1), vec![1]);
    }

    #[test]
    fn picks_best_increasing_pair() {
        let c = vec![vec![0.1, 0.9, 0.3], vec![0.2, 0.8, 0.7]];
        let a = align_narrations(&problem(c, vec![1.0, 1.0], vec![2.0; 3])).unwrap();
        assert_eq!(
            a.assignments,
            vec![Assignment { narration: 1, shot: 2 }, Assignment { narration: 2, shot: 3 }]
        );
        assert!((a.score - 1.6).abs() < 1e-15);
    }

    #[test]
    fn duration_forces_skip() {
        let c = vec![vec![5.0, 1.0, 1.0]];
        let a = align_narrations(&problem(c, vec![3.0], vec![1.0, 4.0, 4.0])).unwrap();
        assert_eq!(a.assignments, vec![Assignment { narration: 1, shot: 2 }]);
    }

    #[test]
    fn partial_prefix_when_full_is_infeasible() {
        let c = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let a = align_narrations(&problem(c, vec![1.0; 3], vec![1.0; 2])).unwrap();
        assert_eq!(a.assignments.len(), 2);
        assert_eq!(a.unassigned(3), vec![3]);
    }

    #[test]
    fn ties_prefer_smaller_shots() {
        let c = vec![vec![1.0, 1.0, 1.0]];
        let a = align_narrations(&problem(c, vec![1.0], vec![1.0; 3])).unwrap();
        assert_eq!(a.assignments[0].shot, 1);
    }

    #[test]
    fn negative_scores_still_place() {
        let c = vec![vec![-2.0, -1.0]];
        let a = align_narrations(&problem(c, vec![1.0], vec![1.0; 2])).unwrap();
        assert_eq!(a.assignments[0].shot, 2);
        assert_eq!(a.score, -1.0);
    }

    #[test]
    fn constant_shift() {
        let c = vec![vec![0.3, 0.1, 0.8, 0.2], vec![0.5, 0.9, 0.4, 0.6]];
        let p = problem(c.clone(), vec![1.0; 2], vec![1.0; 4]);
        let shifted = problem(c.iter().map(|r| r.iter().map(|x| x + 2.0).collect()).collect(), vec![1.0; 2], vec![1.0; 4]);
        let (a, b) = (align_narrations(&p).unwrap(), align_narrations(&shifted).unwrap());
        assert_eq!(a.assignments, b.assignments);
        assert!((b.score - a.score - 4.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(align_narrations(&problem(vec![], vec![], vec![1.0])).is_err());
        assert!(align_narrations(&problem(vec![vec![1.0]], vec![0.0], vec![1.0])).is_err());
        assert!(align_narrations(&problem(vec![vec![1.0, 2.0]], vec![1.0], vec![1.0])).is_err());
        assert!(AlignmentProblem::from_json(r#"{"C": [[1]], "L_nar": [1], "L_shot": [1], "x": 1}"#).is_err());
    }

    #[test]
    fn json_shapes() {
        let p = AlignmentProblem::from_json(r#"{"C": [[0.5, 0.25]], "L_nar": [1.0], "L_shot": [2.0, 2.0]}"#).unwrap();
        let a = align_narrations(&p).unwrap();
        let text = a.to_json().unwrap();
        assert!(text.contains("\"assignments\""));
        assert_eq!(Alignment::from_json(&text).unwrap(), a);
        assert_eq!(AlignmentProblem::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn segment_counting() {
        assert_eq!(trailer_length_from_segments(&[]).unwrap(), 1);
        assert_eq!(trailer_length_from_segments(&[1.0, 2.0, 3.5, 9.0]).unwrap(), 5);
        assert!(trailer_length_from_segments(&[10.0, 10.0]).is_err());
        assert!(trailer_length_from_segments(&[3.0, 1.0]).is_err());
    }
}

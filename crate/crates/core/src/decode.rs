//! Trailer generation by iterative fill and re-mask.
//!
//! Every sweep scores all trailer positions against the unused movie shots,
//! accumulates a per-position confidence `q`, and keeps or re-masks each
//! position by a Bernoulli draw on `q`. Shot and position indices exposed
//! here are 1-based; `0` in `z` marks an unfilled position.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::ModelParams;
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::trainer::trailer_outputs;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    SelfCorrective,
    Greedy,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::SelfCorrective => "self_corrective",
            DecodeMode::Greedy => "greedy",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_corrective" => Ok(DecodeMode::SelfCorrective),
            "greedy" => Ok(DecodeMode::Greedy),
            other => Err(invalid(format!(
                "unknown decode mode `{other}` (expected self_corrective or greedy)"
            ))),
        }
    }
}

/// Scores trailer positions against candidate movie shots.
pub trait Predictor {
    fn movie_shots(&self) -> usize;

    /// `J × candidates.len()` row-stochastic matrix for the trailer state
    /// `z`; `candidates` are ascending 1-based shot indices.
    fn probs(&self, z: &[usize], candidates: &[usize]) -> Result<Matrix>;
}

/// Runs the encoder on `[M; V_k]` where unfilled rows hold the mask
/// placeholder.
pub struct ModelPredictor<'a> {
    params: &'a ModelParams,
    movie: Matrix,
    norms: Vec<f64>,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(params: &'a ModelParams, movie: Matrix) -> Result<Self> {
        if movie.cols() != params.config.dim {
            return Err(shape_mismatch("movie width vs model", params.config.dim, movie.cols()));
        }
        let norms = movie.row_iter().map(norm).collect();
        Ok(Self { params, movie, norms })
    }

    /// `V_k`: committed movie rows, placeholder elsewhere.
    pub fn tokens(&self, z: &[usize]) -> Matrix {
        let mut t = Matrix::zeros(z.len(), self.movie.cols());
        for (j, &shot) in z.iter().enumerate() {
            let src = if shot == 0 {
                self.params.mask_placeholder.row(0)
            } else {
                self.movie.row(shot - 1)
            };
            t.row_mut(j).copy_from_slice(src);
        }
        t
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

impl Predictor for ModelPredictor<'_> {
    fn movie_shots(&self) -> usize {
        self.movie.rows()
    }

    fn probs(&self, z: &[usize], candidates: &[usize]) -> Result<Matrix> {
        let v_hat = trailer_outputs(self.params, &self.movie, &self.tokens(z))?;
        let mut p = Matrix::zeros(z.len(), candidates.len());
        for j in 0..z.len() {
            let vj = v_hat.row(j);
            let nj = norm(vj);
            if nj == 0.0 {
                return Err(Error::ZeroNormRow {
                    context: "predicted trailer row",
                    row: j,
                });
            }
            let row = p.row_mut(j);
            for (c, &i) in candidates.iter().enumerate() {
                let dot: f64 = vj.iter().zip(self.movie.row(i - 1)).map(|(a, b)| a * b).sum();
                row[c] = (dot / (nj * self.norms[i - 1])).clamp(-1.0, 1.0);
            }
            softmax_in_place(row);
        }
        Ok(p)
    }
}

/// Puts almost all mass on a known label per position: softmax of
/// `sharpness` at the label and 0 elsewhere, uniform when the label is no
/// longer a candidate. Useful as an upper-bound reference.
pub struct OraclePredictor {
    labels: Vec<usize>,
    movie_shots: usize,
    sharpness: f64,
}

impl OraclePredictor {
    pub fn new(labels: Vec<usize>, movie_shots: usize, sharpness: f64) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > movie_shots) {
            return Err(invalid(format!("oracle label {bad} outside 1..={movie_shots}")));
        }
        Ok(Self {
            labels,
            movie_shots,
            sharpness,
        })
    }
}

impl Predictor for OraclePredictor {
    fn movie_shots(&self) -> usize {
        self.movie_shots
    }

    fn probs(&self, z: &[usize], candidates: &[usize]) -> Result<Matrix> {
        if z.len() != self.labels.len() {
            return Err(shape_mismatch("oracle positions", self.labels.len(), z.len()));
        }
        let mut p = Matrix::zeros(z.len(), candidates.len());
        for (j, &label) in self.labels.iter().enumerate() {
            let row = p.row_mut(j);
            for (c, &i) in candidates.iter().enumerate() {
                row[c] = if i == label { self.sharpness } else { 0.0 };
            }
            if !row.is_empty() {
                softmax_in_place(row);
            }
        }
        Ok(p)
    }
}

/// Decoder state between sweeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeState {
    /// Accumulated confidence per position.
    pub q: Vec<f64>,
    /// Assigned shot per position, 0 when unfilled.
    pub z: Vec<usize>,
    /// Unused shots, ascending.
    pub candidates: Vec<usize>,
    /// Unfilled positions, ascending.
    pub masked: Vec<usize>,
    /// Iterations completed.
    pub k: usize,
}

impl DecodeState {
    pub fn new(movie_shots: usize, trailer_len: usize) -> Self {
        Self {
            q: vec![0.0; trailer_len],
            z: vec![0; trailer_len],
            candidates: (1..=movie_shots).collect(),
            masked: (1..=trailer_len).collect(),
            k: 0,
        }
    }

    pub fn filled(&self) -> usize {
        self.z.iter().filter(|&&s| s != 0).count()
    }

    pub fn is_complete(&self) -> bool {
        self.masked.is_empty()
    }

    /// Checks the bookkeeping: filled positions are exactly those not in
    /// `masked`, assigned shots are distinct, and every shot is either
    /// assigned or a candidate (never both).
    pub fn check(&self, movie_shots: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Internal(format!("decode state at k={}: {msg}", self.k)));
        if self.q.len() != self.z.len() {
            return fail("q and z lengths differ".into());
        }
        if let Some(q) = self.q.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return fail(format!("confidence {q} outside [0, 1]"));
        }
        if !self.masked.windows(2).all(|w| w[0] < w[1]) || !self.candidates.windows(2).all(|w| w[0] < w[1]) {
            return fail("index sets must be strictly ascending".into());
        }
        let mut in_masked = vec![false; self.z.len() + 1];
        for &j in &self.masked {
            if j == 0 || j > self.z.len() {
                return fail(format!("masked position {j} out of range"));
            }
            in_masked[j] = true;
        }
        let mut owner = vec![0usize; movie_shots + 1];
        for (j, &shot) in self.z.iter().enumerate() {
            if (shot == 0) != in_masked[j + 1] {
                return fail(format!("position {} filled={} but masked={}", j + 1, shot != 0, in_masked[j + 1]));
            }
            if shot > movie_shots {
                return fail(format!("shot {shot} out of range"));
            }
            if shot != 0 {
                if owner[shot] != 0 {
                    return fail(format!("shot {shot} assigned twice"));
                }
                owner[shot] = j + 1;
            }
        }
        for &i in &self.candidates {
            if i == 0 || i > movie_shots {
                return fail(format!("candidate {i} out of range"));
            }
            if owner[i] != 0 {
                return fail(format!("shot {i} both assigned and a candidate"));
            }
            owner[i] = usize::MAX;
        }
        if let Some(i) = (1..=movie_shots).find(|&i| owner[i] == 0) {
            return fail(format!("shot {i} lost from both pools"));
        }
        Ok(())
    }
}

/// What one iteration did, with the state it left behind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub greedy: bool,
    /// Shot each position pointed at this iteration (0 if none was available).
    pub best: Vec<usize>,
    pub newly_filled: usize,
    pub remasked: usize,
    pub state: DecodeState,
}

/// Applies one sweep given `probs` over `state.candidates`.
///
/// Positions are visited in descending `q` (ties by position). Each picks
/// its most probable shot among candidates not already claimed earlier in
/// the sweep, adds that probability to `q_j` (capped at 1) and draws
/// `tau ~ Bernoulli(q_j)`: an unfilled position commits on `tau = 1`, a
/// filled one is re-masked on `tau = 0` and its shot returns to the pool.
/// A filled position with nothing left to point at keeps its `q`.
pub fn iteration_step<R: Rng + ?Sized>(
    state: &mut DecodeState,
    probs: &Matrix,
    movie_shots: usize,
    rng: &mut R,
) -> Result<IterationRecord> {
    state.check(movie_shots)?;
    let big_j = state.z.len();
    if probs.shape() != (big_j, state.candidates.len()) {
        return Err(Error::Internal(format!(
            "probabilities are {}x{}, expected {}x{}",
            probs.rows(),
            probs.cols(),
            big_j,
            state.candidates.len()
        )));
    }
    let mut order: Vec<usize> = (0..big_j).collect();
    order.sort_by(|&a, &b| state.q[b].total_cmp(&state.q[a]).then(a.cmp(&b)));

    let mut claimed = vec![false; state.candidates.len()];
    let mut best = vec![0; big_j];
    let mut committed = Vec::new();
    let mut returned = Vec::new();
    let mut newly_masked = Vec::new();
    for &j in &order {
        let row = probs.row(j);
        let mut pick: Option<usize> = None;
        for c in 0..row.len() {
            if !claimed[c] && pick.is_none_or(|b| row[c] > row[b]) {
                pick = Some(c);
            }
        }
        if let Some(c) = pick {
            best[j] = state.candidates[c];
            state.q[j] = (state.q[j] + row[c]).min(1.0);
        }
        let tau = rng.random::<f64>() < state.q[j];
        match (state.z[j] == 0, tau) {
            (true, true) => {
                let c = pick.ok_or_else(|| Error::Internal(format!("no candidate left for position {}", j + 1)))?;
                claimed[c] = true;
                state.z[j] = state.candidates[c];
                committed.push(j + 1);
            }
            (false, false) => {
                returned.push(state.z[j]);
                newly_masked.push(j + 1);
                state.z[j] = 0;
            }
            _ => {}
        }
    }

    let mut candidates: Vec<usize> = state
        .candidates
        .iter()
        .zip(&claimed)
        .filter(|(_, &taken)| !taken)
        .map(|(&i, _)| i)
        .collect();
    candidates.extend(&returned);
    candidates.sort_unstable();
    state.candidates = candidates;
    let mut masked: Vec<usize> = state.masked.iter().copied().filter(|j| !committed.contains(j)).collect();
    masked.extend(&newly_masked);
    masked.sort_unstable();
    state.masked = masked;
    state.k += 1;
    state.check(movie_shots)?;
    Ok(IterationRecord {
        k: state.k,
        greedy: false,
        best,
        newly_filled: committed.len(),
        remasked: newly_masked.len(),
        state: state.clone(),
    })
}

/// Commits the single most probable `(position, shot)` pair among unfilled
/// positions; ties go to the lowest position, then the lowest shot.
pub fn greedy_step(state: &mut DecodeState, probs: &Matrix, movie_shots: usize) -> Result<IterationRecord> {
    state.check(movie_shots)?;
    if state.masked.is_empty() {
        return Err(Error::Internal("greedy step on a complete trailer".into()));
    }
    if probs.shape() != (state.z.len(), state.candidates.len()) || probs.cols() == 0 {
        return Err(Error::Internal("greedy step got probabilities of the wrong shape".into()));
    }
    let mut top: Option<(usize, usize, f64)> = None;
    for &j in &state.masked {
        for (c, &p) in probs.row(j - 1).iter().enumerate() {
            if top.is_none_or(|(_, _, b)| p > b) {
                top = Some((j - 1, c, p));
            }
        }
    }
    let (j, c, p) = top.expect("masked and candidates are non-empty");
    let shot = state.candidates.remove(c);
    state.z[j] = shot;
    state.q[j] = (state.q[j] + p).min(1.0);
    state.masked.retain(|&m| m != j + 1);
    state.k += 1;
    state.check(movie_shots)?;
    let mut best = vec![0; state.z.len()];
    best[j] = shot;
    Ok(IterationRecord {
        k: state.k,
        greedy: true,
        best,
        newly_filled: 1,
        remasked: 0,
        state: state.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub seed: u64,
    /// Sweep budget before the remaining positions are filled greedily.
    pub k_max: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            mode: DecodeMode::SelfCorrective,
            seed: 0,
            k_max: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// 1-based movie-shot index per trailer position.
    pub indices: Vec<usize>,
    pub history: Vec<IterationRecord>,
    /// Whether sweeps ran out before every position was committed.
    pub forced: bool,
}

impl DecodeResult {
    /// Filled positions after each iteration.
    pub fn fill_counts(&self) -> Vec<usize> {
        self.history.iter().map(|r| r.state.filled()).collect()
    }
}

/// Decodes `trailer_len` distinct shots with any predictor.
pub fn decode_with<P: Predictor + ?Sized>(
    predictor: &P,
    trailer_len: usize,
    options: &DecodeOptions,
) -> Result<DecodeResult> {
    let movie_shots = predictor.movie_shots();
    if trailer_len == 0 || trailer_len > movie_shots {
        return Err(invalid(format!(
            "trailer length {trailer_len} must be in 1..={movie_shots}"
        )));
    }
    if options.k_max == 0 {
        return Err(invalid("k_max must be >= 1"));
    }
    let mut state = DecodeState::new(movie_shots, trailer_len);
    let mut history = Vec::new();
    let mut rng = seeded(options.seed);
    if options.mode == DecodeMode::SelfCorrective {
        while !state.is_complete() && state.k < options.k_max {
            let p = predictor.probs(&state.z, &state.candidates)?;
            history.push(iteration_step(&mut state, &p, movie_shots, &mut rng)?);
        }
    }
    let forced = options.mode == DecodeMode::SelfCorrective && !state.is_complete();
    while !state.is_complete() {
        let p = predictor.probs(&state.z, &state.candidates)?;
        history.push(greedy_step(&mut state, &p, movie_shots)?);
    }
    Ok(DecodeResult {
        indices: state.z,
        history,
        forced,
    })
}

/// Decodes with a trained encoder over `movie` (`I × D`).
pub fn decode(params: &ModelParams, movie: &Matrix, trailer_len: usize, options: &DecodeOptions) -> Result<DecodeResult> {
    let predictor = ModelPredictor::new(params, movie.clone())?;
    decode_with(&predictor, trailer_len, options)
}

/// Serialised generation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedTrailer {
    pub movie_id: String,
    #[serde(rename = "J")]
    pub trailer_len: usize,
    pub mode: DecodeMode,
    pub seed: u64,
    pub indices: Vec<usize>,
    /// Filled positions after each iteration.
    pub iterations: Vec<usize>,
}

impl GeneratedTrailer {
    pub fn new(movie_id: impl Into<String>, options: &DecodeOptions, result: &DecodeResult) -> Self {
        Self {
            movie_id: movie_id.into(),
            trailer_len: result.indices.len(),
            mode: options.mode,
            seed: options.seed,
            indices: result.indices.clone(),
            iterations: result.fill_counts(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        if g.indices.len() != g.trailer_len {
            return Err(Error::Format(format!(
                "J is {} but {} indices were given",
                g.trailer_len,
                g.indices.len()
            )));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::rng::seeded;

    /// Fixed scores per (position, shot), softmaxed over the candidates.
    struct Table(Matrix);

    impl Predictor for Table {
        fn movie_shots(&self) -> usize {
            self.0.cols()
        }

        fn probs(&self, _z: &[usize], candidates: &[usize]) -> Result<Matrix> {
            let idx: Vec<usize> = candidates.iter().map(|i| i - 1).collect();
            let mut p = self.0.select_cols(&idx);
            for r in 0..p.rows() {
                softmax_in_place(p.row_mut(r));
            }
            Ok(p)
        }
    }

    #[test]
    fn single_shot_single_position() {
        let r = decode_with(&Table(Matrix::scalar(0.3)), 1, &DecodeOptions::default()).unwrap();
        assert_eq!(r.indices, vec![1]);
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.history[0].state.q, vec![1.0]);
    }

    #[test]
    fn peaked_predictor_recovers_truth_in_one_sweep() {
        let oracle = OraclePredictor::new(vec![4, 1, 7], 9, 60.0).unwrap();
        let r = decode_with(&oracle, 3, &DecodeOptions::default()).unwrap();
        assert_eq!(r.indices, vec![4, 1, 7]);
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.fill_counts(), vec![3]);
    }

    #[test]
    fn greedy_takes_exactly_j_iterations() {
        let mut rng = seeded(3);
        let table = Table(Matrix::from_fn(5, 12, |_, _| rng.random_range(-1.0..1.0)));
        let r = decode_with(
            &table,
            5,
            &DecodeOptions {
                mode: DecodeMode::Greedy,
                ..DecodeOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.history.len(), 5);
        assert!(r.history.iter().all(|h| h.newly_filled == 1 && h.remasked == 0));
        let mut sorted = r.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }

    #[test]
    fn collisions_resolved_by_confidence_order() {
        // both positions prefer shot 2; a sharp table means both commit in the first sweep
        let table = Table(Matrix::from_rows(&[[0.0, 40.0, 39.0], [0.0, 40.0, 0.0]]).unwrap());
        let r = decode_with(&table, 2, &DecodeOptions::default()).unwrap();
        // equal q at start: position 1 goes first and claims shot 2
        assert_eq!(r.indices[0], 2);
        assert_ne!(r.indices[1], 2);
    }

    #[test]
    fn filled_position_remask_frequency() {
        let trials = 10_000;
        let mut remasked = 0;
        let mut rng = seeded(99);
        for _ in 0..trials {
            let mut s = DecodeState {
                q: vec![0.3],
                z: vec![1],
                candidates: vec![],
                masked: vec![],
                k: 0,
            };
            let rec = iteration_step(&mut s, &Matrix::zeros(1, 0), 1, &mut rng).unwrap();
            assert_eq!(rec.state.q, vec![0.3]);
            remasked += rec.remasked;
        }
        let freq = remasked as f64 / trials as f64;
        assert!((freq - 0.7).abs() < 0.03, "{freq}");
    }

    #[test]
    fn certain_filled_position_is_kept() {
        let mut s = DecodeState {
            q: vec![1.0, 0.0],
            z: vec![2, 0],
            candidates: vec![1, 3],
            masked: vec![2],
            k: 4,
        };
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.25, 0.75]]).unwrap();
        let rec = iteration_step(&mut s, &p, 3, &mut seeded(0)).unwrap();
        assert_eq!(rec.state.z[0], 2);
        assert_eq!(rec.state.q[1], 0.75);
    }

    #[test]
    fn corrupted_state_is_an_internal_error() {
        let mut s = DecodeState {
            q: vec![0.0, 0.0],
            z: vec![1, 1],
            candidates: vec![2],
            masked: vec![],
            k: 0,
        };
        let err = iteration_step(&mut s, &Matrix::zeros(2, 1), 2, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn model_decode_is_deterministic_and_valid() {
        let cfg = EncoderConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ffn_width: 16,
            seed: 5,
            ..EncoderConfig::default()
        };
        let params = init_params(&cfg).unwrap();
        let mut rng = seeded(8);
        let movie = Matrix::from_fn(15, 8, |_, _| rng.random_range(-1.0..1.0));
        let opts = DecodeOptions {
            seed: 42,
            ..DecodeOptions::default()
        };
        let a = decode(&params, &movie, 6, &opts).unwrap();
        let b = decode(&params, &movie, 6, &opts).unwrap();
        assert_eq!(a, b);
        let mut prev_q = vec![0.0; 6];
        for rec in &a.history {
            assert!(rec.state.q.iter().zip(&prev_q).all(|(n, p)| n >= p));
            prev_q = rec.state.q.clone();
        }
        assert!(decode(&params, &movie, 16, &opts).is_err());
        assert!(decode(&params, &movie, 0, &opts).is_err());
        assert!(decode(&params, &Matrix::zeros(3, 4), 1, &opts).is_err());
        let k0 = DecodeOptions { k_max: 0, ..opts };
        assert!(decode(&params, &movie, 2, &k0).is_err());
    }

    #[test]
    fn k_max_guard_forces_completion() {
        let table = Table(Matrix::zeros(6, 6));
        let r = decode_with(
            &table,
            6,
            &DecodeOptions {
                k_max: 1,
                ..DecodeOptions::default()
            },
        )
        .unwrap();
        let mut sorted = r.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5, 6]);
        assert!(r.forced);
    }

    #[test]
    fn json_round_trip() {
        let r = decode_with(&Table(Matrix::zeros(2, 4)), 2, &DecodeOptions::default()).unwrap();
        let g = GeneratedTrailer::new("m1", &DecodeOptions::default(), &r);
        let text = g.to_json().unwrap();
        assert!(text.contains("\"J\": 2"));
        assert!(text.contains("\"mode\": \"self_corrective\""));
        let back = GeneratedTrailer::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(GeneratedTrailer::from_json(&text.replace("\"J\": 2", "\"J\": 3")).is_err());
        assert_eq!("greedy".parse::<DecodeMode>().unwrap(), DecodeMode::Greedy);
        assert!("beam".parse::<DecodeMode>().is_err());
    }
}

//! Shared inputs for the criterion benches in `benches/`.

use ssmp_core::align::AlignmentProblem;
use ssmp_core::corpus::{synth_pair, MovieTrailerPair, SynthConfig};
use ssmp_core::Matrix;

/// A standard-size synthetic pair (64 movie shots, 12 trailer shots, width 32).
pub fn standard_pair(seed: u64) -> MovieTrailerPair {
    synth_pair(&SynthConfig::default(), seed).expect("default config is valid").pair
}

/// Movie rows followed by trailer rows, the encoder's input layout.
pub fn concatenated(pair: &MovieTrailerPair) -> Matrix {
    let movie = pair.movie.to_matrix();
    let trailer = pair.trailer.to_matrix();
    let mut x = Matrix::zeros(movie.rows() + trailer.rows(), movie.cols());
    for r in 0..movie.rows() {
        x.row_mut(r).copy_from_slice(movie.row(r));
    }
    for r in 0..trailer.rows() {
        x.row_mut(movie.rows() + r).copy_from_slice(trailer.row(r));
    }
    x
}

/// Two length-`n` index sequences that disagree in most places.
pub fn index_sequences(n: usize) -> (Vec<usize>, Vec<usize>) {
    let a = (1..=n).map(|i| (i * 37) % 101).collect();
    let b = (1..=n).map(|i| (i * 53) % 101).collect();
    (a, b)
}

/// Deterministic alignment problem with `n` narrations over `j` shots.
pub fn alignment_problem(n: usize, j: usize) -> AlignmentProblem {
    AlignmentProblem {
        similarity: (0..n)
            .map(|r| (0..j).map(|c| ((r * 7 + c * 3) % 11) as f64 / 10.0).collect())
            .collect(),
        narration_durations: (0..n).map(|r| 1.0 + (r % 3) as f64).collect(),
        shot_durations: (0..j).map(|c| 1.5 + (c % 4) as f64 * 0.5).collect(),
    }
}

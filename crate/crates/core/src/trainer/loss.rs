use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::masking::MaskedSequence;
use crate::autograd::{Graph, NodeId};
use crate::corpus::{argmax, GroundTruth};
use crate::encoder::{encode_graph, BoundParams, EncoderConfig, ModelParams};
use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Ce,
    Mse,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Ce => "ce",
            LossMode::Mse => "mse",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossMode::Ce),
            "mse" => Ok(LossMode::Mse),
            other => Err(invalid(format!("unknown loss `{other}` (expected ce or mse)"))),
        }
    }
}

/// Graph nodes for the trailer-position outputs and their probabilities.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    /// `J × D`
    pub v_hat: NodeId,
    /// `J × I`, softmax over movie shots.
    pub probs: NodeId,
}

/// Builds `[M; tokens]`, runs the encoder and scores trailer outputs
/// against every movie shot.
///
/// Masked rows are wired to the placeholder leaf so it receives gradients.
pub fn predict_graph(
    g: &mut Graph,
    config: &EncoderConfig,
    params: &BoundParams,
    movie: &Matrix,
    masked: &MaskedSequence,
) -> Result<Prediction> {
    let tokens = masked.tokens();
    if movie.cols() != tokens.cols() {
        return Err(shape_mismatch("movie/trailer width", movie.cols(), tokens.cols()));
    }
    let (i, j) = (movie.rows(), tokens.rows());
    let mut kept = tokens.clone();
    let mut indicator = Matrix::zeros(j, 1);
    for r in masked.masked_positions() {
        kept.row_mut(r).fill(0.0);
        indicator.set(r, 0, 1.0);
    }
    let kept = g.constant(kept);
    let indicator = g.constant(indicator);
    let spread = g.matmul(indicator, params.mask_placeholder())?;
    let trailer = g.add(kept, spread)?;

    let m = g.constant(movie.clone());
    let x = g.concat_rows(&[m, trailer])?;
    let positions: Vec<usize> = (0..i + j).collect();
    let out = encode_graph(g, config, params, x, &positions)?;
    let v_hat = g.slice_rows(out, i, j)?;
    let sim = g.cosine_rows(v_hat, m)?;
    let probs = g.softmax_rows(sim)?;
    Ok(Prediction { v_hat, probs })
}

/// Inference form of [`predict_graph`]; returns `(V̂, P)`.
pub fn predict_probs(params: &ModelParams, movie: &Matrix, masked: &MaskedSequence) -> Result<(Matrix, Matrix)> {
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, false);
    let pred = predict_graph(&mut g, &params.config, &bound, movie, masked)?;
    Ok((g.value(pred.v_hat).clone(), g.value(pred.probs).clone()))
}

/// Trailer-position encoder outputs for arbitrary trailer rows.
pub(crate) fn trailer_outputs(params: &ModelParams, movie: &Matrix, tokens: &Matrix) -> Result<Matrix> {
    if movie.cols() != params.config.dim || tokens.cols() != params.config.dim {
        return Err(shape_mismatch(
            "model width",
            params.config.dim,
            if movie.cols() != params.config.dim { movie.cols() } else { tokens.cols() },
        ));
    }
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, false);
    let m = g.constant(movie.clone());
    let t = g.constant(tokens.clone());
    let x = g.concat_rows(&[m, t])?;
    let positions: Vec<usize> = (0..movie.rows() + tokens.rows()).collect();
    let out = encode_graph(&mut g, &params.config, &bound, x, &positions)?;
    Ok(g.value(out).select_rows(&(movie.rows()..movie.rows() + tokens.rows()).collect::<Vec<_>>()))
}

/// Masked-position objective scaled by `1 / t`.
///
/// CE sums `-log P[j][l_j]`; MSE sums squared distances between `v̂_j` and
/// the labelled movie shot.
pub fn compute_loss(
    g: &mut Graph,
    pred: &Prediction,
    movie: &Matrix,
    truth: &GroundTruth,
    masked: &MaskedSequence,
    mode: LossMode,
) -> Result<NodeId> {
    let positions = masked.masked_positions();
    if positions.is_empty() {
        return Err(Error::Empty("masked positions"));
    }
    if truth.len() != masked.len() {
        return Err(shape_mismatch("labels per trailer", masked.len(), truth.len()));
    }
    let scale = 1.0 / masked.ratio();
    let labels = truth.labels();
    let total = match mode {
        LossMode::Ce => {
            // gather P[j][l_j] into a column; unmasked rows read 1 so their log is 0
            let (rows, cols) = g.value(pred.probs).shape();
            let mut pick = Matrix::zeros(rows, cols);
            let mut pad = Matrix::filled(rows, 1, 1.0);
            for &j in &positions {
                pick.set(j, labels[j] - 1, 1.0);
                pad.set(j, 0, 0.0);
            }
            let pick = g.constant(pick);
            let ones = g.constant(Matrix::filled(cols, 1, 1.0));
            let pad = g.constant(pad);
            let picked = g.mul(pred.probs, pick)?;
            let picked = g.matmul(picked, ones)?;
            let picked = g.add(picked, pad)?;
            let logp = g.log(picked)?;
            let s = g.sum(logp)?;
            g.scale(s, -scale)?
        }
        LossMode::Mse => {
            let (rows, cols) = g.value(pred.v_hat).shape();
            let mut target = Matrix::zeros(rows, cols);
            let mut keep = Matrix::zeros(rows, cols);
            for &j in &positions {
                target.row_mut(j).copy_from_slice(movie.row(labels[j] - 1));
                keep.row_mut(j).fill(1.0);
            }
            let target = g.constant(target);
            let keep = g.constant(keep);
            let diff = g.sub(pred.v_hat, target)?;
            let diff = g.mul(diff, keep)?;
            let sq = g.mul(diff, diff)?;
            let s = g.sum(sq)?;
            g.scale(s, scale)?
        }
    };
    Ok(total)
}

/// Fraction of masked positions whose most probable movie shot is the
/// labelled one.
pub fn pair_accuracy(probs: &Matrix, truth: &GroundTruth, masked: &MaskedSequence) -> Result<f64> {
    let positions = masked.masked_positions();
    if positions.is_empty() {
        return Err(Error::Empty("masked positions"));
    }
    if probs.rows() != truth.len() {
        return Err(shape_mismatch("probability rows", truth.len(), probs.rows()));
    }
    let hits = positions
        .iter()
        .filter(|&&j| argmax(probs.row(j)) + 1 == truth.labels()[j])
        .count();
    Ok(hits as f64 / positions.len() as f64)
}

/// Mean of [`pair_accuracy`] over a batch.
pub fn batch_accuracy(batch: &[(&Matrix, &GroundTruth, &MaskedSequence)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (p, truth, masked) in batch {
        total += pair_accuracy(p, truth, masked)?;
    }
    Ok(total / batch.len() as f64)
}

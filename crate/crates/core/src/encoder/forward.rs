use super::params::{EncoderConfig, ModelParams};
use crate::autograd::{Graph, NodeId};
use crate::error::{shape_mismatch, Result};
use crate::matrix::Matrix;

/// Model parameters placed on a graph, in declaration order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    ids: Vec<NodeId>,
    per_layer: usize,
}

impl BoundParams {
    /// Adds every tensor as a leaf; trainable leaves receive gradients.
    pub fn bind(g: &mut Graph, params: &ModelParams, trainable: bool) -> Self {
        let ids = params
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Self { ids, per_layer: 9 }
    }

    /// Wraps leaves that were added in [`ModelParams::tensors`] order, e.g.
    /// by a gradient checker.
    pub fn from_ids(ids: Vec<NodeId>) -> Self {
        Self { ids, per_layer: 9 }
    }

    /// Node ids in the same order as [`ModelParams::tensors`].
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn mask_placeholder(&self) -> NodeId {
        *self.ids.last().expect("bound params are never empty")
    }

    fn layer(&self, l: usize) -> &[NodeId] {
        &self.ids[l * self.per_layer..(l + 1) * self.per_layer]
    }

    /// Gradients for every bound tensor after `g.backward`, zeros where
    /// nothing flowed.
    pub fn grads(&self, g: &Graph) -> Vec<Matrix> {
        self.ids
            .iter()
            .map(|&id| {
                g.grad(id).cloned().unwrap_or_else(|| {
                    let (r, c) = g.value(id).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect()
    }
}

/// Runs all encoder blocks over the `T × D` node `x`, with `positions[r]`
/// the rotary position of row `r`. Attention is unmasked.
pub fn encode_graph(
    g: &mut Graph,
    config: &EncoderConfig,
    params: &BoundParams,
    x: NodeId,
    positions: &[usize],
) -> Result<NodeId> {
    let (rows, cols) = g.value(x).shape();
    if cols != config.dim {
        return Err(shape_mismatch("encoder input width", config.dim, cols));
    }
    if positions.len() != rows {
        return Err(shape_mismatch("encoder positions", rows, positions.len()));
    }
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut h = x;
    for l in 0..config.layers {
        let &[attn_norm, w_q, w_k, w_v, w_o, ffn_norm, w_up, w_gate, w_down] = params.layer(l) else {
            unreachable!("nine tensors per layer");
        };

        let n = g.rms_norm(h, config.rms_eps)?;
        let n = g.mul_row(n, attn_norm)?;
        let q = g.matmul(n, w_q)?;
        let k = g.matmul(n, w_k)?;
        let v = g.matmul(n, w_v)?;
        let mut heads = Vec::with_capacity(config.heads);
        for head in 0..config.heads {
            let qh = g.slice_cols(q, head * dh, dh)?;
            let kh = g.slice_cols(k, head * dh, dh)?;
            let vh = g.slice_cols(v, head * dh, dh)?;
            let qh = g.rope(qh, positions, config.rope_base)?;
            let kh = g.rope(kh, positions, config.rope_base)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let weights = g.softmax_rows(scores)?;
            heads.push(g.matmul(weights, vh)?);
        }
        let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        let attn = g.matmul(merged, w_o)?;
        h = g.add(h, attn)?;

        let n = g.rms_norm(h, config.rms_eps)?;
        let n = g.mul_row(n, ffn_norm)?;
        let up = g.matmul(n, w_up)?;
        let gate = g.matmul(n, w_gate)?;
        let act = g.silu(up)?;
        let gated = g.mul(act, gate)?;
        let down = g.matmul(gated, w_down)?;
        h = g.add(h, down)?;
    }
    Ok(h)
}

/// Inference-only forward pass with positions `0..T`.
pub fn encode(params: &ModelParams, x: &Matrix) -> Result<Matrix> {
    let mut g = Graph::new();
    let bound = BoundParams::bind(&mut g, params, false);
    let xn = g.constant(x.clone());
    let positions: Vec<usize> = (0..x.rows()).collect();
    let out = encode_graph(&mut g, &params.config, &bound, xn, &positions)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use crate::encoder::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            layers: 1,
            heads: 2,
            dim: 8,
            ffn_width: 16,
            seed: 3,
            ..EncoderConfig::default()
        }
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_function_blocks_leave_input_unchanged() {
        let cfg = small_config();
        let mut p = init_params(&cfg).unwrap();
        for l in &mut p.layers {
            for w in [&mut l.w_q, &mut l.w_k, &mut l.w_v, &mut l.w_up, &mut l.w_gate, &mut l.w_down] {
                w.fill(0.0);
            }
            l.w_o = Matrix::from_fn(8, 8, |r, c| if r == c { 1.0 } else { 0.0 });
        }
        let x = Matrix::from_fn(1, 8, |_, c| c as f64 - 3.5);
        assert_eq!(encode(&p, &x).unwrap(), x);
    }

    #[test]
    fn rms_norm_of_constant_row() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::from_rows(&[[2.0, 2.0]]).unwrap());
        let gain = g.constant(Matrix::filled(1, 2, 1.0));
        let n = g.rms_norm(x, 1e-6).unwrap();
        let y = g.mul_row(n, gain).unwrap();
        assert!(g.value(y).as_slice().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn permuting_rows_with_positions_permutes_output() {
        let cfg = small_config();
        let p = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, 5, 8);
        let run = |x: &Matrix, pos: &[usize]| {
            let mut g = Graph::new();
            let b = BoundParams::bind(&mut g, &p, false);
            let xn = g.constant(x.clone());
            let out = encode_graph(&mut g, &cfg, &b, xn, pos).unwrap();
            g.value(out).clone()
        };
        let base = run(&x, &[0, 1, 2, 3, 4]);
        let swapped = run(&x.select_rows(&[0, 3, 2, 1, 4]), &[0, 3, 2, 1, 4]);
        assert!(swapped.max_abs_diff(&base.select_rows(&[0, 3, 2, 1, 4])) < 1e-12);
    }

    #[test]
    fn every_output_row_depends_on_every_input_row() {
        let cfg = small_config();
        let p = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 4, 8);
        for out_row in 0..4 {
            let mut g = Graph::new();
            let b = BoundParams::bind(&mut g, &p, false);
            let xn = g.param(x.clone());
            let out = encode_graph(&mut g, &cfg, &b, xn, &[0, 1, 2, 3]).unwrap();
            let row = g.slice_rows(out, out_row, 1).unwrap();
            let s = g.sum(row).unwrap();
            g.backward(s).unwrap();
            let grad = g.grad(xn).unwrap();
            for in_row in 0..4 {
                assert!(grad.row(in_row).iter().any(|v| v.abs() > 1e-12), "{out_row} <- {in_row}");
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_checks_width() {
        let cfg = small_config();
        let p = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, 3, 8);
        assert_eq!(encode(&p, &x).unwrap(), encode(&p, &x).unwrap());
        assert!(encode(&p, &Matrix::zeros(3, 6)).is_err());
    }

    #[test]
    fn mean_output_gradient_matches_finite_differences() {
        let cfg = small_config();
        let p = init_params(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(&mut rng, 4, 8);
        let tensors: Vec<Matrix> = p.tensors().into_iter().cloned().collect();
        let report = grad_check(
            |g, ids| {
                let b = BoundParams { ids: ids.to_vec(), per_layer: 9 };
                let xn = g.constant(x.clone());
                let out = encode_graph(g, &cfg, &b, xn, &[0, 1, 2, 3])?;
                g.mean(out)
            },
            &tensors,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / (|analytic| + |numeric| + 1e-12)`
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
}

/// Checks every coordinate of every parameter.
///
/// `f` builds a scalar-valued graph from parameter leaves (one per entry of
/// `params`, in order) and returns the root.
pub fn grad_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, m)| (0..m.len()).map(move |c| (p, c)))
        .collect();
    run(f, params, eps, &coords)
}

/// Like [`grad_check`] but only checks `samples` coordinates drawn
/// uniformly without replacement.
pub fn grad_check_sampled<F>(
    f: F,
    params: &[Matrix],
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let all: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, m)| (0..m.len()).map(move |c| (p, c)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, all.len(), samples.min(all.len()));
    let coords: Vec<_> = picked.iter().map(|i| all[i]).collect();
    run(f, params, eps, &coords)
}

fn evaluate<F>(f: &F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.constant(p.clone())).collect();
    let root = f(&mut g, &ids)?;
    let v = g.value(root);
    if v.shape() != (1, 1) {
        return Err(invalid("grad_check function must be scalar-valued"));
    }
    let v = v.get(0, 0);
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

fn run<F>(f: F, params: &[Matrix], eps: f64, coords: &[(usize, usize)]) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(invalid(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = f(&mut g, &ids)?;
    g.backward(root)?;
    let analytic: Vec<Matrix> = ids
        .iter()
        .zip(params)
        .map(|(&id, p)| g.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: 0,
    };
    let mut work = params.to_vec();
    for &(p, c) in coords {
        let orig = work[p].as_slice()[c];
        work[p].as_mut_slice()[c] = orig + eps;
        let plus = evaluate(&f, &work)?;
        work[p].as_mut_slice()[c] = orig - eps;
        let minus = evaluate(&f, &work)?;
        work[p].as_mut_slice()[c] = orig;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[p].as_slice()[c];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        report.coordinates_checked += 1;
        if report.coordinates_checked == 1 || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = (p, c);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(|g, p| g.mul(p[0], p[0]), &[Matrix::scalar(1.0)], 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.coordinates_checked, 1);
    }

    #[test]
    fn softmax_cross_entropy_composite() {
        let logits = Matrix::from_rows(&[[0.3, -1.2, 0.8], [1.5, 0.1, -0.4]]).unwrap();
        let target = Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let r = grad_check(
            |g, p| {
                let probs = g.softmax_rows(p[0])?;
                let logp = g.log(probs)?;
                let t = g.constant(target.clone());
                let picked = g.mul(logp, t)?;
                let s = g.sum(picked)?;
                g.scale(s, -1.0)
            },
            &[logits],
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn rejects_out_of_range_eps() {
        assert!(grad_check(|g, p| g.sum(p[0]), &[Matrix::scalar(1.0)], 1e-2).is_err());
        assert!(grad_check(|g, p| g.sum(p[0]), &[Matrix::scalar(1.0)], 1e-9).is_err());
    }

    #[test]
    fn sampled_checks_requested_count() {
        let m = Matrix::from_fn(4, 4, |r, c| (r as f64 - c as f64) * 0.1);
        let r = grad_check_sampled(
            |g, p| {
                let y = g.mul(p[0], p[0])?;
                g.sum(y)
            },
            &[m],
            1e-5,
            5,
            1,
        )
        .unwrap();
        assert_eq!(r.coordinates_checked, 5);
        assert!(r.max_rel_error < 1e-8);
    }
}

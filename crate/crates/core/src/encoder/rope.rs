use crate::autograd::rotate_pairs;
use crate::error::Result;
use crate::matrix::Matrix;

/// Rotary position embedding of a `T × d_head` block: the column pair
/// `(2k, 2k+1)` of the row at position `p` is rotated by `p * base^(-2k/d_head)`.
pub fn rope_rotate(x: &Matrix, positions: &[usize], base: f64) -> Result<Matrix> {
    rotate_pairs(x, positions, base, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn position_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 1, 8);
        assert_eq!(rope_rotate(&x, &[0], 10_000.0).unwrap(), x);
    }

    #[test]
    fn preserves_row_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 5, 8);
        let y = rope_rotate(&x, &[0, 1, 7, 33, 250], 10_000.0).unwrap();
        for r in 0..5 {
            assert!((dot(x.row(r), x.row(r)).sqrt() - dot(y.row(r), y.row(r)).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn inner_products_depend_only_on_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random(&mut rng, 1, 16);
        let k = random(&mut rng, 1, 16);
        let score = |p1: usize, p2: usize| {
            let a = rope_rotate(&q, &[p1], 10_000.0).unwrap();
            let b = rope_rotate(&k, &[p2], 10_000.0).unwrap();
            dot(a.row(0), b.row(0))
        };
        for (p1, p2, s) in [(3, 7, 5), (0, 10, 42), (20, 4, 13)] {
            assert!((score(p1, p2) - score(p1 + s, p2 + s)).abs() < 1e-10);
        }
    }

    #[test]
    fn odd_width_is_rejected() {
        assert!(rope_rotate(&Matrix::zeros(1, 3), &[1], 10_000.0).is_err());
    }
}

use rand::Rng;

use crate::error::{invalid, shape_mismatch, Result};
use crate::matrix::Matrix;

/// A trailer sequence with some rows swapped for the mask placeholder.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSequence {
    tokens: Matrix,
    masked: Vec<bool>,
    ratio: f64,
}

impl MaskedSequence {
    /// Builds a sequence from an explicit mask; `placeholder` is `1 × D`.
    pub fn from_mask(v: &Matrix, placeholder: &Matrix, masked: Vec<bool>, ratio: f64) -> Result<Self> {
        if masked.len() != v.rows() {
            return Err(shape_mismatch("mask length", v.rows(), masked.len()));
        }
        if placeholder.shape() != (1, v.cols()) {
            return Err(shape_mismatch(
                "mask placeholder",
                format!("1x{}", v.cols()),
                format!("{}x{}", placeholder.rows(), placeholder.cols()),
            ));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(invalid(format!("mask ratio {ratio} outside (0, 1]")));
        }
        let mut tokens = v.clone();
        for (j, &m) in masked.iter().enumerate() {
            if m {
                tokens.row_mut(j).copy_from_slice(placeholder.row(0));
            }
        }
        Ok(Self { tokens, masked, ratio })
    }

    /// `J × D` rows: original features or the placeholder.
    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn is_masked(&self, j: usize) -> bool {
        self.masked[j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.masked
    }

    /// 0-based masked positions in increasing order.
    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.masked.len()).filter(|&j| self.masked[j]).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }
}

/// Masks each row of `v` independently with probability `t`, redrawing
/// until at least one row is masked.
pub fn mask_sequence<R: Rng + ?Sized>(
    v: &Matrix,
    placeholder: &Matrix,
    t: f64,
    rng: &mut R,
) -> Result<MaskedSequence> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(invalid(format!("mask ratio {t} outside (0, 1]")));
    }
    if v.rows() == 0 {
        return Err(invalid("cannot mask an empty sequence"));
    }
    loop {
        let masked: Vec<bool> = (0..v.rows()).map(|_| rng.random::<f64>() < t).collect();
        if masked.iter().any(|&m| m) {
            return MaskedSequence::from_mask(v, placeholder, masked, t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn seq(rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| (r * cols + c) as f64 + 1.0)
    }

    #[test]
    fn full_ratio_masks_everything() {
        let mp = Matrix::filled(1, 3, -1.0);
        let m = mask_sequence(&seq(7, 3), &mp, 1.0, &mut seeded(0)).unwrap();
        assert_eq!(m.masked_count(), 7);
        assert!(m.tokens().row_iter().all(|r| r == [-1.0, -1.0, -1.0]));
    }

    #[test]
    fn half_ratio_concentrates() {
        let mp = Matrix::zeros(1, 1);
        let m = mask_sequence(&seq(10_000, 1), &mp, 0.5, &mut seeded(11)).unwrap();
        let frac = m.masked_count() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn seeded_masks_repeat() {
        let mp = Matrix::zeros(1, 2);
        let a = mask_sequence(&seq(20, 2), &mp, 0.3, &mut seeded(5)).unwrap();
        let b = mask_sequence(&seq(20, 2), &mp, 0.3, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_ratio_still_masks_something() {
        let mp = Matrix::zeros(1, 2);
        let m = mask_sequence(&seq(2, 2), &mp, 1e-3, &mut seeded(1)).unwrap();
        assert!(m.masked_count() >= 1);
    }

    #[test]
    fn rejects_bad_ratio() {
        let mp = Matrix::zeros(1, 2);
        for t in [0.0, -0.2, 1.5, f64::NAN] {
            assert!(mask_sequence(&seq(3, 2), &mp, t, &mut seeded(0)).is_err());
        }
        assert!(mask_sequence(&seq(3, 2), &Matrix::zeros(1, 3), 0.5, &mut seeded(0)).is_err());
    }

    proptest! {
        #[test]
        fn kept_rows_are_bitwise_unchanged(seed in any::<u64>(), t in 0.05f64..=1.0, rows in 1usize..30) {
            let v = Matrix::from_fn(rows, 4, |r, c| ((r * 7 + c * 13) as f64).sin());
            let mp = Matrix::filled(1, 4, 9.0);
            let m = mask_sequence(&v, &mp, t, &mut seeded(seed)).unwrap();
            prop_assert!(m.masked_count() >= 1);
            for j in 0..rows {
                if m.is_masked(j) {
                    prop_assert_eq!(m.tokens().row(j), mp.row(0));
                } else {
                    let same = m.tokens().row(j).iter().zip(v.row(j)).all(|(a, b)| a.to_bits() == b.to_bits());
                    prop_assert!(same);
                }
            }
        }
    }
}

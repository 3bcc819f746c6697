use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Error, Result};
use crate::matrix::Matrix;

/// One feature row per shot, stored as `f32` exactly as on disk.
///
/// Invariants: at least one row and one column, all values finite, and no
/// all-zero row (cosine similarity must be defined).
#[derive(Clone, Debug, PartialEq)]
pub struct ShotMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ShotMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("shot matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(shape_mismatch("ShotMatrix::new", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        for (row, chunk) in data.chunks_exact(cols).enumerate() {
            if chunk.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroNormRow {
                    context: "shot matrix",
                    row,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Rounds each value to `f32`.
    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape_mismatch("ShotMatrix rows", cols, r.len()));
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(
            m.rows(),
            m.cols(),
            m.as_slice().iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Widens to `f64` for computation.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape checked at construction")
    }
}

/// Per trailer position, the 1-based index of the movie shot it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    labels: Vec<usize>,
    movie_shots: usize,
}

impl GroundTruth {
    pub fn from_labels(labels: Vec<usize>, movie_shots: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > movie_shots) {
            return Err(invalid(format!("label {bad} outside 1..={movie_shots}")));
        }
        Ok(Self { labels, movie_shots })
    }

    /// 1-based movie-shot indices, one per trailer position.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn movie_shots(&self) -> usize {
        self.movie_shots
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `J × I` indicator matrix with a single one per row.
    pub fn one_hot(&self) -> Matrix {
        let mut g = Matrix::zeros(self.labels.len(), self.movie_shots);
        for (j, &l) in self.labels.iter().enumerate() {
            g.set(j, l - 1, 1.0);
        }
        g
    }
}

/// `a.rows × b.rows` matrix of cosine similarities, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &ShotMatrix, b: &ShotMatrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(shape_mismatch("cosine_sim", a.cols(), b.cols()));
    }
    let norms = |m: &ShotMatrix| -> Vec<f64> {
        (0..m.rows())
            .map(|r| m.row(r).iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
            .collect()
    };
    let (na, nb) = (norms(a), norms(b));
    let mut out = a.to_matrix().matmul(&b.to_matrix().transpose())?;
    for j in 0..out.rows() {
        for (i, v) in out.row_mut(j).iter_mut().enumerate() {
            *v = (*v / (na[j] * nb[i])).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// Labels each trailer shot with its most similar movie shot; ties go to
/// the lowest index.
pub fn ground_truth(movie: &ShotMatrix, trailer: &ShotMatrix) -> Result<GroundTruth> {
    let sim = cosine_sim(trailer, movie)?;
    let labels = sim.row_iter().map(|row| argmax(row) + 1).collect();
    GroundTruth::from_labels(labels, movie.rows())
}

/// Index of the first maximal entry.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A movie prompt, its trailer and the derived labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MovieTrailerPair {
    pub id: String,
    pub movie: ShotMatrix,
    pub trailer: ShotMatrix,
    pub truth: GroundTruth,
}

impl MovieTrailerPair {
    pub fn new(id: impl Into<String>, movie: ShotMatrix, trailer: ShotMatrix) -> Result<Self> {
        if movie.cols() != trailer.cols() {
            return Err(shape_mismatch("movie/trailer width", movie.cols(), trailer.cols()));
        }
        if trailer.rows() > movie.rows() {
            return Err(invalid(format!(
                "trailer has {} shots but movie only {}",
                trailer.rows(),
                movie.rows()
            )));
        }
        let truth = ground_truth(&movie, &trailer)?;
        Ok(Self {
            id: id.into(),
            movie,
            trailer,
            truth,
        })
    }
}

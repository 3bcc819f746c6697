//! Synthetic movie/trailer pairs with a planted selection-and-ordering rule.
//!
//! Every movie is split into contiguous "event" clusters. Each shot carries
//! two latent quantities encoded along fixed feature directions shared by
//! the whole corpus: a saliency score (cluster level plus per-shot jitter)
//! and a narrative key, an angle written on a 2-D circle. The trailer takes
//! the `J` most salient shots and orders them by key, then perturbs each
//! copied row with Gaussian noise.
//!
//! Every row also carries a constant offset. The encoder has no bias terms,
//! so without it attention has no content-independent component to latch on
//! to and the model struggles to even copy positions.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{save_features, Manifest, ManifestEntry, MovieTrailerPair, ShotMatrix};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, seeded, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Movie length `I`.
    pub movie_shots: usize,
    /// Trailer length `J`.
    pub trailer_shots: usize,
    /// Feature width `D`.
    pub dim: usize,
    /// Standard deviation of the trailer perturbation.
    pub noise: f64,
    pub clusters: usize,
    /// Seeds the corpus-wide rule directions.
    pub rule_seed: u64,
    pub saliency_weight: f64,
    pub key_weight: f64,
    /// Norm of the rule-independent part of every movie row.
    pub content_norm: f64,
    /// Within-cluster spread relative to the cluster centre.
    pub cluster_spread: f64,
    /// Length of the offset shared by every shot in the corpus.
    pub offset_weight: f64,
    pub ordering: TrailerOrder,
    /// Keys are drawn uniformly from `[0, key_span)` radians.
    pub key_span: f64,
}

/// How the planted rule orders the selected shots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrailerOrder {
    /// Ascending narrative key.
    #[default]
    Key,
    /// Movie order.
    Chronological,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            movie_shots: 64,
            trailer_shots: 12,
            dim: 32,
            noise: 0.05,
            clusters: 8,
            rule_seed: 0,
            saliency_weight: 3.0,
            key_weight: 1.5,
            content_norm: 3.0,
            cluster_spread: 0.5,
            offset_weight: 3.0,
            ordering: TrailerOrder::Key,
            key_span: 2.0 * PI,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trailer_shots == 0 || self.trailer_shots > self.movie_shots {
            return Err(invalid(format!(
                "need 1 <= J <= I, got J={} I={}",
                self.trailer_shots, self.movie_shots
            )));
        }
        if self.dim < 2 {
            return Err(invalid(format!("feature width must be >= 2, got {}", self.dim)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if !(self.key_span > 0.0 && self.key_span <= 2.0 * PI) {
            return Err(invalid(format!("key_span must lie in (0, 2pi], got {}", self.key_span)));
        }
        if self.clusters == 0 {
            return Err(invalid("need at least one cluster"));
        }
        Ok(())
    }
}

/// A generated pair plus the generator's own view of it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub pair: MovieTrailerPair,
    /// 1-based movie indices chosen by the planted rule, in trailer order.
    pub planted: Vec<usize>,
    /// Seconds per movie shot.
    pub shot_durations: Vec<f64>,
    /// Interior cut points (seconds) of the trailer's music track; there are
    /// `J - 1` of them.
    pub music_boundaries: Vec<f64>,
}

fn gaussian(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components along orthonormal `basis`.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Saliency direction, the two key-circle directions and the shared offset
/// direction. Orthonormal when `dim >= 5`; for narrower features they are
/// merely unit vectors and the content part is left unprojected.
fn rule_directions(dim: usize, rule_seed: u64) -> (Vec<Vec<f64>>, bool) {
    let mut rng = seeded(derive_seed(rule_seed, 0x5255_4c45));
    let orthogonal = dim >= 5;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4);
    while dirs.len() < 4 {
        let mut v = gaussian(&mut rng, dim);
        if orthogonal {
            project_out(&mut v, &dirs);
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            dirs.push(v);
        }
    }
    (dirs, orthogonal)
}

/// Deterministic in `(config, seed)`.
pub fn synth_pair(config: &SynthConfig, seed: u64) -> Result<SyntheticPair> {
    config.validate()?;
    let (i_len, j_len, dim) = (config.movie_shots, config.trailer_shots, config.dim);
    let (dirs, orthogonal) = rule_directions(dim, config.rule_seed);
    let basis: &[Vec<f64>] = if orthogonal { &dirs } else { &[] };
    let mut rng = seeded(seed);

    let k = config.clusters.min(i_len);
    let mut cuts: Vec<usize> = if k > 1 {
        sample(&mut rng, i_len - 1, k - 1).iter().map(|c| c + 1).collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    let mut cluster_of = Vec::with_capacity(i_len);
    let mut cluster = 0;
    for i in 0..i_len {
        while cluster < cuts.len() && i >= cuts[cluster] {
            cluster += 1;
        }
        cluster_of.push(cluster);
    }

    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut c = gaussian(&mut rng, dim);
            project_out(&mut c, basis);
            c
        })
        .collect();
    let cluster_saliency: Vec<f64> = gaussian(&mut rng, k);

    let mut movie = Vec::with_capacity(i_len);
    let mut saliency = Vec::with_capacity(i_len);
    let mut key = Vec::with_capacity(i_len);
    for &c in &cluster_of {
        let mut content: Vec<f64> = centers[c]
            .iter()
            .map(|&x| x + config.cluster_spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        project_out(&mut content, basis);
        let n = norm(&content).max(1e-12);
        content.iter_mut().for_each(|x| *x *= config.content_norm / n);

        let s = cluster_saliency[c] + 0.5 * rng.sample::<f64, _>(StandardNormal);
        let phi = rng.random_range(0.0..config.key_span);
        let (sin, cos) = phi.sin_cos();
        let row: Vec<f64> = (0..dim)
            .map(|d| {
                content[d]
                    + config.saliency_weight * s * dirs[0][d]
                    + config.key_weight * (cos * dirs[1][d] + sin * dirs[2][d])
                    + config.offset_weight * dirs[3][d]
            })
            .collect();
        movie.push(row);
        saliency.push(s);
        key.push(phi);
    }

    let mut by_saliency: Vec<usize> = (0..i_len).collect();
    by_saliency.sort_by(|&a, &b| saliency[b].total_cmp(&saliency[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = by_saliency[..j_len].to_vec();
    match config.ordering {
        TrailerOrder::Key => chosen.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b))),
        TrailerOrder::Chronological => chosen.sort_unstable(),
    }

    let movie = ShotMatrix::from_f64_rows(&movie)?;
    let trailer_rows: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&i| {
            movie
                .row(i)
                .iter()
                .map(|&v| f64::from(v) + config.noise * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let trailer = ShotMatrix::from_f64_rows(&trailer_rows)?;

    let shot_durations = (0..i_len)
        .map(|_| (rng.random_range(1.0..6.0f64) * 100.0).round() / 100.0)
        .collect();
    let mut t = 0.0;
    let music_boundaries = (1..j_len)
        .map(|_| {
            t += (rng.random_range(1.5..4.0f64) * 100.0).round() / 100.0;
            (t * 100.0f64).round() / 100.0
        })
        .collect();

    let pair = MovieTrailerPair::new(format!("synth-{seed:016x}"), movie, trailer)?;
    Ok(SyntheticPair {
        pair,
        planted: chosen.iter().map(|i| i + 1).collect(),
        shot_durations,
        music_boundaries,
    })
}

/// Generates `count` pairs and writes `manifest.json` plus one feature file
/// per matrix under `dir/features/`. Pair `k` uses a seed derived from
/// `(seed, k)`, so prefixes of a larger corpus are stable.
pub fn write_synthetic_corpus(
    dir: impl AsRef<Path>,
    config: &SynthConfig,
    count: usize,
    seed: u64,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("features"))?;
    let mut manifest = Manifest::default();
    for k in 0..count {
        let generated = synth_pair(config, derive_seed(seed, k as u64))?;
        let id = format!("pair-{k:04}");
        let movie_path = format!("features/{id}.movie.feat");
        let trailer_path = format!("features/{id}.trailer.feat");
        save_features(dir.join(&movie_path), &generated.pair.movie)?;
        save_features(dir.join(&trailer_path), &generated.pair.trailer)?;
        manifest.entries.push(ManifestEntry {
            id,
            movie_path,
            trailer_path,
            shot_durations: Some(generated.shot_durations),
            music_boundaries: Some(generated.music_boundaries),
        });
    }
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_features, MovieTrailerPair};
use crate::error::{Error, Result};

/// One corpus entry. Paths are relative to the manifest's directory unless
/// absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub movie_path: String,
    pub trailer_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_durations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub music_boundaries: Option<Vec<f64>>,
}

/// A corpus manifest: a JSON array of [`ManifestEntry`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        for e in &m.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Format(format!("duplicate manifest id `{}`", e.id)));
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

impl ManifestEntry {
    pub fn resolve(base: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn load_pair(&self, base: &Path) -> Result<MovieTrailerPair> {
        let movie = load_features(Self::resolve(base, &self.movie_path))?;
        let trailer = load_features(Self::resolve(base, &self.trailer_path))?;
        MovieTrailerPair::new(self.id.clone(), movie, trailer)
    }
}

/// Loads every pair listed in the manifest at `path`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Manifest, Vec<MovieTrailerPair>)> {
    let path = path.as_ref();
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let pairs = manifest
        .entries
        .iter()
        .map(|e| e.load_pair(base))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optional_fields_are_omitted_and_unknown_rejected() {
        let m = Manifest {
            entries: vec![ManifestEntry {
                id: "a".into(),
                movie_path: "a.movie.feat".into(),
                trailer_path: "a.trailer.feat".into(),
                shot_durations: None,
                music_boundaries: Some(vec![1.5, 3.0]),
            }],
        };
        let text = m.to_json().unwrap();
        assert!(!text.contains("shot_durations"));
        assert_eq!(Manifest::from_json(&text).unwrap(), m);

        let bad = r#"[{"id":"a","movie_path":"x","trailer_path":"y","extra":1}]"#;
        assert!(Manifest::from_json(bad).is_err());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dup = r#"[{"id":"a","movie_path":"x","trailer_path":"y"},
                      {"id":"a","movie_path":"x","trailer_path":"y"}]"#;
        assert!(Manifest::from_json(dup).is_err());
    }
}

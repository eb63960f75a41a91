//! Labelled image lists shared by the generator, training and evaluation.
//!
//! A manifest file is a JSON array of `{"path", "label", "seed"}` records;
//! relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{load_image, Image, ImageError};

/// Label of real (sharp) images.
pub const REAL: u8 = 0;
/// Label of fake (smooth) images.
pub const FAKE: u8 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("label {0} is not 0 (real) or 1 (fake)")]
    BadLabel(u8),
    #[error("no images found in {0}")]
    Empty(PathBuf),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(e) = entries.iter().find(|e| e.label > FAKE) {
            return Err(DatasetError::BadLabel(e.label));
        }
        Ok(Self {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.entries).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Every PNG/PGM/PPM file of `dir`, sorted by name, with one label.
    pub fn from_folder(dir: impl AsRef<Path>, label: u8) -> Result<Self, DatasetError> {
        let dir = dir.as_ref();
        if label > FAKE {
            return Err(DatasetError::BadLabel(label));
        }
        let io = |source| DatasetError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut names = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if p.is_file() && matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "pnm")) {
                names.push(p.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        if names.is_empty() {
            return Err(DatasetError::Empty(dir.to_path_buf()));
        }
        names.sort();
        Ok(Self {
            root: dir.to_path_buf(),
            entries: names
                .into_iter()
                .map(|path| ManifestEntry { path, label, seed: None })
                .collect(),
        })
    }

    /// A manifest file, or a directory whose `manifest.json` exists, or a
    /// plain folder of images all carrying `folder_label`.
    pub fn open(path: impl AsRef<Path>, folder_label: u8) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        if path.is_dir() {
            let m = path.join("manifest.json");
            if m.is_file() {
                Self::load(m)
            } else {
                Self::from_folder(path, folder_label)
            }
        } else {
            Self::load(path)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn with_label(&self, label: u8) -> Manifest {
        Manifest {
            root: self.root.clone(),
            entries: self.entries.iter().filter(|e| e.label == label).cloned().collect(),
        }
    }

    /// Concatenates manifests, rewriting paths to absolute form.
    pub fn merge(parts: &[&Manifest]) -> Manifest {
        let entries = parts
            .iter()
            .flat_map(|m| {
                m.entries.iter().map(move |e| ManifestEntry {
                    path: m.resolve(e).to_string_lossy().into_owned(),
                    ..e.clone()
                })
            })
            .collect();
        Manifest {
            root: PathBuf::new(),
            entries,
        }
    }

    /// Decodes every image, in order.
    pub fn load_images(&self) -> Result<Vec<(Image, u8)>, DatasetError> {
        crate::par::map_slice(&self.entries, |e| load_image(self.resolve(e)).map(|img| (img, e.label)))
            .into_iter()
            .map(|r| r.map_err(DatasetError::from))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::save_image;

    #[test]
    fn json_shape() {
        let e = ManifestEntry {
            path: "real/00000.png".into(),
            label: 0,
            seed: Some(7),
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"path":"real/00000.png","label":0,"seed":7}"#
        );
        let back: ManifestEntry = serde_json::from_str(r#"{"path":"a.png","label":1}"#).unwrap();
        assert_eq!(back.seed, None);
    }

    #[test]
    fn folder_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::gray_from_fn(4, 4, |x, y| (x * 16 + y) as u8);
        save_image(&img, dir.path().join("b.png")).unwrap();
        save_image(&img, dir.path().join("a.pgm")).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let m = Manifest::from_folder(dir.path(), FAKE).unwrap();
        assert_eq!(m.entries.iter().map(|e| e.path.as_str()).collect::<Vec<_>>(), ["a.pgm", "b.png"]);
        let loaded = m.load_images().unwrap();
        assert!(loaded.iter().all(|(i, l)| *i == img && *l == FAKE));

        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let back = Manifest::open(dir.path(), REAL).unwrap();
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.root, dir.path());
    }

    #[test]
    fn rejects_bad_labels_and_empty_dirs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Manifest::from_folder(dir.path(), 0), Err(DatasetError::Empty(_))));
        let p = dir.path().join("m.json");
        fs::write(&p, r#"[{"path":"x.png","label":3}]"#).unwrap();
        assert!(matches!(Manifest::load(&p), Err(DatasetError::BadLabel(3))));
        fs::write(&p, "{").unwrap();
        assert!(matches!(Manifest::load(&p), Err(DatasetError::Json { .. })));
    }
}

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rect::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One annotated image. `image` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default)]
    pub rects: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    /// Directory image paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    /// Entries of one split; `None` selects every entry.
    pub fn split(&self, split: Option<Split>) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| split.is_none() || e.split == split)
    }

    pub fn total_rects(&self, split: Option<Split>) -> usize {
        self.split(split).map(|e| e.rects.len()).sum()
    }
}

/// Parse a JSON-lines file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    crate::error::create_parent(path)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read a manifest and check that every referenced image exists.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let entries: Vec<ManifestEntry> = read_jsonl(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for (i, e) in entries.iter().enumerate() {
        if let Some(r) = e.rects.iter().find(|r| r.is_degenerate()) {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("degenerate rectangle {r:?}"),
            });
        }
        let image = root.join(&e.image);
        if !image.is_file() {
            return Err(Error::MissingImage(image));
        }
    }
    Ok(CorpusManifest { root, entries })
}

/// Write the entries as JSON lines. Image paths are written unchanged, so
/// they stay valid only relative to the manifest's own directory.
pub fn write_manifest(m: &CorpusManifest, path: &Path) -> Result<()> {
    write_jsonl(&m.entries, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_missing_image() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"x").unwrap();
        let m = CorpusManifest {
            root: dir.path().to_path_buf(),
            entries: vec![
                ManifestEntry {
                    image: "a.png".into(),
                    split: Some(Split::Train),
                    rects: vec![Rect::new(1, 2, 3, 4)],
                },
                ManifestEntry {
                    image: "a.png".into(),
                    split: None,
                    rects: vec![],
                },
            ],
        };
        let path = dir.path().join("m.jsonl");
        write_manifest(&m, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);

        std::fs::remove_file(dir.path().join("a.png")).unwrap();
        match read_manifest(&path) {
            Err(Error::MissingImage(p)) => assert!(p.ends_with("a.png")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "\n{\"image\": 3}\n").unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(Error::Manifest { line: 2, .. })
        ));
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::emotion::EmotionClass;
use crate::error::{Error, Result};
use crate::signal::{read_wav, Waveform};

pub const MANIFEST_HEADER: &str = "path,label,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// As written in the manifest.
    pub path: PathBuf,
    pub label: EmotionClass,
    pub split: Option<Split>,
}

/// Labelled audio list. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
            _ => return Err(Error::Manifest(format!("first line must be '{MANIFEST_HEADER}'"))),
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Manifest(format!(
                    "line {}: expected 3 comma-separated fields, found {} (paths may not contain commas)",
                    n + 1,
                    fields.len()
                )));
            }
            let path = fields[0].trim();
            if path.is_empty() {
                return Err(Error::Manifest(format!("line {}: empty path", n + 1)));
            }
            let label = fields[1]
                .trim()
                .parse::<EmotionClass>()
                .map_err(|_| Error::Manifest(format!("line {}: unknown label '{}'", n + 1, fields[1].trim())))?;
            let split = match fields[2].trim() {
                "" => None,
                s => Some(s.parse().map_err(|e: Error| Error::Manifest(format!("line {}: {e}", n + 1)))?),
            };
            rows.push(ManifestRow { path: PathBuf::from(path), label, split });
        }
        Ok(Self { rows, base_dir: base_dir.into() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for r in &self.rows {
            let split = r.split.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{split}\n", r.path.display(), r.label));
        }
        out
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.path.is_absolute() {
            row.path.clone()
        } else {
            self.base_dir.join(&row.path)
        }
    }

    /// Fails with every missing file listed.
    pub fn check_files(&self) -> Result<()> {
        let missing: Vec<String> = self
            .rows
            .iter()
            .filter(|r| !self.resolve(r).is_file())
            .map(|r| r.path.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Manifest(format!("missing audio files: {}", missing.join(", "))))
        }
    }

    /// Rows of `split`; rows without a split tag count as training data.
    pub fn split(&self, split: Split) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| r.split.unwrap_or(Split::Train) == split).collect()
    }

    /// Reads every row of `split`.
    pub fn load_split(&self, split: Split) -> Result<Vec<(Waveform, EmotionClass)>> {
        self.check_files()?;
        self.split(split)
            .into_iter()
            .map(|r| Ok((read_wav(self.resolve(r))?, r.label)))
            .collect()
    }
}

//! One-line format-version headers carried by stage artifacts.
//!
//! A header looks like `#nodalnet corpus v1`. Readers accept files without a
//! header (hand-written inputs) but reject a header naming another artifact
//! kind or version.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Corpus,
    Embedding,
    Edges,
    RemTrace,
    Sweep,
    Stats,
    Degrees,
    Projection,
    TrainingLog,
}

impl ArtifactKind {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Corpus => "corpus",
            ArtifactKind::Embedding => "embedding",
            ArtifactKind::Edges => "edges",
            ArtifactKind::RemTrace => "rem-trace",
            ArtifactKind::Sweep => "sweep",
            ArtifactKind::Stats => "stats",
            ArtifactKind::Degrees => "degrees",
            ArtifactKind::Projection => "projection",
            ArtifactKind::TrainingLog => "training-log",
        }
    }

    pub fn header(self) -> String {
        format!("#nodalnet {} v{}", self.name(), FORMAT_VERSION)
    }
}

/// Checks a candidate first line. Returns `Ok(true)` if it is a matching
/// header, `Ok(false)` if it is not a header at all.
pub fn check_header(line: &str, kind: ArtifactKind) -> Result<bool> {
    let line = line.trim_end_matches(['\r', '\n']);
    if !line.starts_with("#nodalnet") {
        return Ok(false);
    }
    let expected = kind.header();
    if line == expected {
        Ok(true)
    } else {
        Err(Error::Compatibility {
            expected,
            found: line.to_string(),
        })
    }
}

/// Splits off a leading header line if present and valid.
pub fn strip_header(text: &str, kind: ArtifactKind) -> Result<(&str, usize)> {
    let first = text.lines().next().unwrap_or("");
    if check_header(first, kind)? {
        let rest = text.find('\n').map(|i| &text[i + 1..]).unwrap_or("");
        Ok((rest, 1))
    } else {
        Ok((text, 0))
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

/// Writes `bytes` to `<path>.partial` and renames it into place once the
/// write succeeded. A failed write leaves the `.partial` file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let partial = partial_path(path);
    let mut file = fs::File::create(&partial).map_err(|e| Error::io(&partial, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&partial, e))?;
    file.sync_all().map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

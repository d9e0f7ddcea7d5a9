//! Label-indexed dense vectors and their CSV / binary export formats.

use std::path::Path;

use crate::artifact::{self, ArtifactKind};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"NDLNVEC1";

/// Row-major |N|×d matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVectors {
    labels: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl NodeVectors {
    pub fn new(labels: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != labels.len() * dim {
            return Err(Error::Consistency(format!(
                "{} values for {} rows of dimension {dim}",
                data.len(),
                labels.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericState("vector entries must be finite".into()));
        }
        Ok(Self { labels, dim, data })
    }

    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Consistency("rows differ in length".into()));
        }
        Self::new(labels, dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_csv(&self) -> String {
        let mut out = ArtifactKind::Embedding.header();
        out.push_str("\nlabel");
        for k in 1..=self.dim {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for x in self.row(i) {
                out.push(',');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let (body, skipped) = artifact::strip_header(text, ArtifactKind::Embedding)?;
        let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, message: String| Error::Format {
            what: "embedding CSV",
            line: line + 1 + skipped,
            message,
        };
        let Some((line, header)) = lines.next() else {
            return Self::new(Vec::new(), 0, Vec::new());
        };
        let dim = header.split(',').count().saturating_sub(1);
        if !header.starts_with("label") {
            return Err(bad(line, "expected a `label,x1,...` header".into()));
        }
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (line, text) in lines {
            let mut fields = text.split(',');
            let label = fields.next().unwrap_or_default();
            let before = data.len();
            for field in fields {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| bad(line, format!("`{field}` is not a number")))?;
                data.push(x);
            }
            if data.len() - before != dim {
                return Err(Error::Structure {
                    line: line + 1 + skipped,
                    expected: dim + 1,
                    found: data.len() - before + 1,
                });
            }
            labels.push(label.to_string());
        }
        Self::new(labels, dim, data)
    }

    /// Magic, |N| and d as little-endian u64, then row-major f64 values.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.data.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Binary files carry no labels; rows are named `0..N`.
    pub fn parse_binary(bytes: &[u8]) -> Result<Self> {
        let bad = |message: &str| Error::Format {
            what: "binary embedding",
            line: 0,
            message: message.into(),
        };
        if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
            return Err(bad("missing magic header"));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap()) as usize;
        let (n, dim) = (word(8), word(16));
        if bytes.len() != 24 + 8 * n * dim {
            return Err(bad("payload length does not match header"));
        }
        let data = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new((0..n).map(|i| i.to_string()).collect(), dim, data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        artifact::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        artifact::write_atomic(path, &self.to_binary())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::parse_csv(&artifact::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_and_binary_are_exact(rows in prop::collection::vec(
            prop::collection::vec(-1e6f64..1e6, 3), 0..8)) {
            let labels = (0..rows.len()).map(|i| format!("n{i}")).collect();
            let vectors = NodeVectors::from_rows(labels, &rows).unwrap();
            if !rows.is_empty() {
                prop_assert_eq!(&NodeVectors::parse_csv(&vectors.to_csv()).unwrap(), &vectors);
            }
            let back = NodeVectors::parse_binary(&vectors.to_binary()).unwrap();
            prop_assert_eq!(back.as_slice(), vectors.as_slice());
        }
    }

    #[test]
    fn csv_layout() {
        let v = NodeVectors::from_rows(vec!["a".into()], &[vec![1.5, -2.0]]).unwrap();
        assert_eq!(v.to_csv(), "#nodalnet embedding v1\nlabel,x1,x2\na,1.5,-2\n");
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let v = NodeVectors::from_rows(vec!["a".into()], &[vec![1.0, 2.0]]).unwrap();
        let bytes = v.to_binary();
        assert!(NodeVectors::parse_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(NodeVectors::parse_binary(b"garbage").is_err());
    }

    #[test]
    fn ragged_csv_row_is_rejected() {
        let err = NodeVectors::parse_csv("label,x1,x2\na,1,2\nb,1\n").unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }
}

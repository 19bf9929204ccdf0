//! Matrix cache for feature matrices and probability rolls.
//!
//! ```text
//! "SEDFORGE-MATRIX 1\n"
//! key=value lines (kind, rows, cols, hop, normalized, stats_id, labels)
//! blank line
//! rows*cols little-endian f32, row-major
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sed_forge_core::detect::ActivityProbabilities;
use sed_forge_core::features::{FeatureMatrix, NormStats};
use sha2::{Digest, Sha256};

use crate::error::{io_err, FormatError, Result};

const MAGIC: &str = "SEDFORGE-MATRIX 1";

/// Short content hash identifying a set of normalization statistics.
pub fn norm_stats_id(stats: &NormStats) -> String {
    let mut h = Sha256::new();
    for v in stats.mean.iter().chain(&stats.std) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub header: BTreeMap<String, String>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Matrix {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\nrows={}\ncols={}\n", self.rows, self.cols);
        for (k, v) in &self.header {
            writeln!(head, "{k}={v}").unwrap();
        }
        head.push('\n');
        let mut out = head.into_bytes();
        for v in &self.values {
            out.extend(v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| FormatError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let end = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| corrupt("missing header terminator".into()))?;
        let head = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("header is not UTF-8".into()))?;
        let mut lines = head.lines();
        let first = lines.next().unwrap_or_default();
        if first != MAGIC {
            return Err(if first.starts_with("SEDFORGE-MATRIX ") {
                FormatError::Version {
                    path: path.to_path_buf(),
                    found: first.trim_start_matches("SEDFORGE-MATRIX ").into(),
                    expected: "1".into(),
                }
            } else {
                FormatError::BadMagic {
                    path: path.to_path_buf(),
                    expected: "matrix cache",
                }
            });
        }
        let mut header = BTreeMap::new();
        for l in lines {
            let (k, v) = l.split_once('=').ok_or_else(|| corrupt(format!("bad header line '{l}'")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let dim = |h: &mut BTreeMap<String, String>, k: &str| -> Result<usize> {
            h.remove(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| corrupt(format!("missing or bad '{k}'")))
        };
        let rows = dim(&mut header, "rows")?;
        let cols = dim(&mut header, "cols")?;
        let data = &bytes[end + 2..];
        if Some(data.len()) != rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) {
            return Err(corrupt(format!("expected {rows}x{cols} floats, found {} bytes", data.len())));
        }
        let values = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            header,
            rows,
            cols,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes, path)
    }

    fn field<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        self.header
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| FormatError::Corrupt {
                path: path.to_path_buf(),
                reason: format!("missing or bad '{key}'"),
            })
    }

    fn expect_kind(&self, kind: &str, path: &Path) -> Result<()> {
        match self.header.get("kind") {
            Some(k) if k == kind => Ok(()),
            other => Err(FormatError::Corrupt {
                path: path.to_path_buf(),
                reason: format!("expected a {kind} matrix, found {other:?}"),
            }),
        }
    }
}

/// `stats_id` is recorded for normalized features so a model can refuse mismatched inputs.
pub fn write_features(path: &Path, f: &FeatureMatrix, stats_id: Option<&str>) -> Result<()> {
    let mut header = BTreeMap::new();
    header.insert("kind".into(), "features".into());
    header.insert("hop".into(), format!("{:?}", f.hop_seconds));
    header.insert("normalized".into(), f.normalized.to_string());
    if let Some(id) = stats_id {
        header.insert("stats_id".into(), id.into());
    }
    Matrix {
        header,
        rows: f.bands,
        cols: f.frames,
        values: f.values.clone(),
    }
    .write(path)
}

pub fn read_features(path: &Path) -> Result<(FeatureMatrix, Option<String>)> {
    let m = Matrix::read(path)?;
    m.expect_kind("features", path)?;
    let mut f = FeatureMatrix::new(m.rows, m.cols, m.field("hop", path)?, m.values.clone())?;
    f.normalized = m.field("normalized", path)?;
    Ok((f, m.header.get("stats_id").cloned()))
}

pub fn write_probabilities(path: &Path, p: &ActivityProbabilities) -> Result<()> {
    let mut header = BTreeMap::new();
    header.insert("kind".into(), "probabilities".into());
    header.insert("hop".into(), format!("{:?}", p.hop_seconds));
    header.insert("labels".into(), p.classes.join(","));
    Matrix {
        header,
        rows: p.classes.len(),
        cols: p.frames,
        values: p.values.clone(),
    }
    .write(path)
}

pub fn read_probabilities(path: &Path) -> Result<ActivityProbabilities> {
    let m = Matrix::read(path)?;
    m.expect_kind("probabilities", path)?;
    let classes: Vec<String> = m
        .header
        .get("labels")
        .map(|l| l.split(',').map(String::from).collect())
        .unwrap_or_default();
    if classes.len() != m.rows {
        return Err(FormatError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("{} labels for {} rows", classes.len(), m.rows),
        });
    }
    Ok(ActivityProbabilities {
        classes,
        frames: m.cols,
        hop_seconds: m.field("hop", path)?,
        values: m.values,
    })
}

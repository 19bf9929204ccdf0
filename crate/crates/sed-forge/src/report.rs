//! Experiment reports.
//!
//! ```text
//! key = value            (one per line, insertion order)
//!
//! scope  metric  value   (tab separated, header line first)
//!
//! scope  resolution  tp  fp  fn  s  i  d  a
//! ```
//!
//! Sections are separated by one blank line. Undefined metrics are written as
//! `undefined`.

use std::path::Path;

use sed_forge_core::metrics::SegmentStats;

use crate::error::{io_err, FormatError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
    pub metrics: Vec<(String, String, Option<f64>)>,
    pub stats: Vec<(String, String, SegmentStats)>,
}

const METRIC_HEADER: &str = "scope\tmetric\tvalue";
const STATS_HEADER: &str = "scope\tresolution\ttp\tfp\tfn\ts\ti\td\ta";

impl Report {
    pub fn entry(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn metric(&mut self, scope: impl Into<String>, name: impl Into<String>, value: Option<f64>) {
        self.metrics.push((scope.into(), name.into(), value));
    }

    pub fn stat(&mut self, scope: impl Into<String>, resolution: impl Into<String>, s: SegmentStats) {
        self.stats.push((scope.into(), resolution.into(), s));
    }

    pub fn get(&self, scope: &str, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(s, n, _)| s == scope && n == name)
            .and_then(|m| m.2)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.0 == key).map(|e| e.1.as_str())
    }

    pub fn stats_for(&self, scope: &str, resolution: &str) -> Option<&SegmentStats> {
        self.stats
            .iter()
            .find(|(s, r, _)| s == scope && r == resolution)
            .map(|e| &e.2)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out += &format!("{k} = {v}\n");
        }
        out += &format!("\n{METRIC_HEADER}\n");
        for (scope, name, v) in &self.metrics {
            let v = v.map_or("undefined".to_string(), |x| format!("{x:?}"));
            out += &format!("{scope}\t{name}\t{v}\n");
        }
        out += &format!("\n{STATS_HEADER}\n");
        for (scope, res, s) in &self.stats {
            out += &format!(
                "{scope}\t{res}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                s.tp, s.fp, s.fn_, s.substitutions, s.insertions, s.deletions, s.active
            );
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, reason: &str| FormatError::Parse {
            path: path.to_path_buf(),
            line,
            reason: reason.to_string(),
        };
        let mut r = Report::default();
        let mut section = 0;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.is_empty() {
                section += 1;
                continue;
            }
            match section {
                0 => {
                    let (k, v) = line.split_once(" = ").ok_or_else(|| err(n, "expected 'key = value'"))?;
                    r.entry(k, v);
                }
                1 if line == METRIC_HEADER => {}
                1 => {
                    let f: Vec<&str> = line.split('\t').collect();
                    if f.len() != 3 {
                        return Err(err(n, "expected 3 metric fields"));
                    }
                    let v = match f[2] {
                        "undefined" => None,
                        s => Some(s.parse().map_err(|_| err(n, "bad metric value"))?),
                    };
                    r.metric(f[0], f[1], v);
                }
                2 if line == STATS_HEADER => {}
                2 => {
                    let f: Vec<&str> = line.split('\t').collect();
                    if f.len() != 9 {
                        return Err(err(n, "expected 9 stats fields"));
                    }
                    let mut c = [0u64; 7];
                    for (slot, s) in c.iter_mut().zip(&f[2..]) {
                        *slot = s.parse().map_err(|_| err(n, "bad count"))?;
                    }
                    r.stat(
                        f[0],
                        f[1],
                        SegmentStats {
                            tp: c[0],
                            fp: c[1],
                            fn_: c[2],
                            substitutions: c[3],
                            insertions: c[4],
                            deletions: c[5],
                            active: c[6],
                        },
                    );
                }
                _ => return Err(err(n, "unexpected extra section")),
            }
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }
}

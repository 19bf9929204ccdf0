//! Tab-separated event lists: `onset<TAB>offset<TAB>class`, one event per line.

use std::fmt::Write as _;
use std::path::Path;

use sed_forge_core::synth::EventAnnotation;

use crate::error::{io_err, FormatError, Result};

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<EventAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| FormatError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let onset: f64 = fields[0].trim().parse().map_err(|_| err(format!("bad onset '{}'", fields[0])))?;
        let offset: f64 = fields[1].trim().parse().map_err(|_| err(format!("bad offset '{}'", fields[1])))?;
        let mut a = EventAnnotation::new(fields[2].trim(), onset, offset).map_err(|e| err(e.to_string()))?;
        a.source_file = path.display().to_string();
        out.push(a);
    }
    Ok(out)
}

pub fn format_annotations(events: &[EventAnnotation]) -> String {
    let mut s = String::new();
    for e in events {
        writeln!(s, "{}\t{}\t{}", e.onset, e.offset, e.class_name).unwrap();
    }
    s
}

pub fn read_annotations(path: &Path) -> Result<Vec<EventAnnotation>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&text, path)
}

pub fn write_annotations(path: &Path, events: &[EventAnnotation]) -> Result<()> {
    std::fs::write(path, format_annotations(events)).map_err(io_err(path))
}

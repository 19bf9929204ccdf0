//! Dataset manifest.
//!
//! ```toml
//! classes = ["tone", "chirp", "noise"]
//!
//! [[recordings]]
//! id = "mix000"
//! audio = "audio/mix000.wav"
//! annotations = "annotations/mix000.txt"
//! partition = "train"      # train | validation | test
//! scene = "synthetic"
//! fold = 0
//! ```
//!
//! Each fold is a self-contained train/validation/test split made of the
//! entries carrying that fold number. Paths are relative to the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use sed_forge_core::synth::Partition;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl From<Partition> for Split {
    fn from(p: Partition) -> Self {
        match p {
            Partition::Train => Split::Train,
            Partition::Validation => Split::Validation,
            Partition::Test => Split::Test,
        }
    }
}

fn default_scene() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub id: String,
    pub audio: PathBuf,
    pub annotations: PathBuf,
    pub partition: Split,
    #[serde(default = "default_scene")]
    pub scene: String,
    #[serde(default)]
    pub fold: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub classes: Vec<String>,
    #[serde(default)]
    pub recordings: Vec<Entry>,
}

/// Entries of one fold by partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSplit<'a> {
    pub fold: u32,
    pub train: Vec<&'a Entry>,
    pub validation: Vec<&'a Entry>,
    pub test: Vec<&'a Entry>,
}

impl Manifest {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.recordings {
            for p in [&mut e.audio, &mut e.annotations] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        m.validate(path)?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    /// Serializes with paths made relative to `base` where possible.
    pub fn to_toml(&self, base: &Path) -> String {
        let mut m = self.clone();
        for e in &mut m.recordings {
            for p in [&mut e.audio, &mut e.annotations] {
                if let Ok(r) = p.strip_prefix(base) {
                    *p = r.to_path_buf();
                }
            }
        }
        toml::to_string(&m).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        std::fs::write(path, self.to_toml(base)).map_err(io_err(path))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let mut errs = Vec::new();
        if self.classes.is_empty() {
            errs.push("no classes".to_string());
        }
        let unique: BTreeSet<&String> = self.classes.iter().collect();
        if unique.len() != self.classes.len() {
            errs.push("duplicate class names".into());
        }
        if self.classes.iter().any(|c| c.is_empty() || c.contains([',', '\t', '\n'])) {
            errs.push("class names must be non-empty without commas, tabs or newlines".into());
        }
        let mut ids = BTreeSet::new();
        for e in &self.recordings {
            if !ids.insert(&e.id) {
                errs.push(format!("duplicate recording id '{}'", e.id));
            }
            if e.id.is_empty() || e.id.contains(['/', '\\']) {
                errs.push(format!("recording id '{}' is not a plain name", e.id));
            }
        }
        for f in self.folds() {
            if let Err(e) = self.fold(f).and_then(|s| s.check_isolation()) {
                errs.push(e);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(FormatError::Invalid {
                path: path.to_path_buf(),
                reason: errs.join("; "),
            })
        }
    }

    pub fn folds(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.recordings.iter().map(|e| e.fold).collect();
        set.into_iter().collect()
    }

    pub fn fold(&self, fold: u32) -> std::result::Result<FoldSplit<'_>, String> {
        let mut split = FoldSplit {
            fold,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for e in self.recordings.iter().filter(|e| e.fold == fold) {
            match e.partition {
                Split::Train => split.train.push(e),
                Split::Validation => split.validation.push(e),
                Split::Test => split.test.push(e),
            }
        }
        if split.train.is_empty() && split.validation.is_empty() && split.test.is_empty() {
            return Err(format!("fold {fold} has no recordings"));
        }
        Ok(split)
    }
}

impl FoldSplit<'_> {
    /// Errors when an audio file appears in more than one partition of the fold.
    pub fn check_isolation(&self) -> std::result::Result<(), String> {
        let mut owner: BTreeMap<&Path, Split> = BTreeMap::new();
        for e in self.train.iter().chain(&self.validation).chain(&self.test) {
            if let Some(prev) = owner.insert(&e.audio, e.partition) {
                if prev != e.partition {
                    return Err(format!(
                        "fold {}: '{}' is used in both {prev:?} and {:?}",
                        self.fold,
                        e.audio.display(),
                        e.partition
                    ));
                }
            }
        }
        Ok(())
    }

    /// Audio files allowed to contribute to training statistics.
    pub fn training_sources(&self) -> BTreeSet<&Path> {
        self.train.iter().map(|e| e.audio.as_path()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
classes = ["a", "b"]
[[recordings]]
id = "r0"
audio = "audio/r0.wav"
annotations = "ann/r0.txt"
partition = "train"
[[recordings]]
id = "r1"
audio = "audio/r1.wav"
annotations = "ann/r1.txt"
partition = "test"
fold = 1
[[recordings]]
id = "r2"
audio = "audio/r1.wav"
annotations = "ann/r1.txt"
partition = "train"
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let m = Manifest::from_toml(TEXT, Path::new("/data/m.toml")).unwrap();
        assert_eq!(m.recordings[0].audio, Path::new("/data/audio/r0.wav"));
        assert_eq!(m.recordings[0].scene, "default");
        assert_eq!(m.folds(), vec![0, 1]);
        let f0 = m.fold(0).unwrap();
        assert_eq!(f0.train.len(), 2);
        assert!(f0.test.is_empty());
        assert!(m.fold(7).is_err());
    }

    #[test]
    fn shared_audio_across_partitions_of_a_fold_is_rejected() {
        let bad = TEXT.replace("fold = 1\n", "");
        let err = Manifest::from_toml(&bad, Path::new("m.toml")).unwrap_err();
        assert!(err.to_string().contains("both"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let bad = TEXT.replace("id = \"r2\"", "id = \"r0\"");
        assert!(Manifest::from_toml(&bad, Path::new("m.toml")).is_err());
    }

    #[test]
    fn roundtrip_relative() {
        let m = Manifest::from_toml(TEXT, Path::new("/data/m.toml")).unwrap();
        let text = m.to_toml(Path::new("/data"));
        assert!(text.contains("\"audio/r0.wav\""));
        assert_eq!(Manifest::from_toml(&text, Path::new("/data/m.toml")).unwrap(), m);
    }
}

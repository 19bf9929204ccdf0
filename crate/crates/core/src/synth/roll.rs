use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One annotated event occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct EventAnnotation {
    pub class_name: String,
    pub onset: f64,
    pub offset: f64,
    /// Identifier of the isolated sample the event was cut from, if known.
    pub source_file: String,
}

impl EventAnnotation {
    pub fn new(class_name: impl Into<String>, onset: f64, offset: f64) -> Result<Self> {
        let a = Self {
            class_name: class_name.into(),
            onset,
            offset,
            source_file: String::new(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.onset >= 0.0) || !(self.offset > self.onset) || !self.offset.is_finite() {
            return Err(Error::Validation(format!(
                "event '{}' has onset {} and offset {}",
                self.class_name, self.onset, self.offset
            )));
        }
        Ok(())
    }
}

// Tolerance for landing exactly on frame boundaries despite decimal seconds.
const GRID_EPS: f64 = 1e-9;

/// Frames `[first, end)` whose cell `[t*hop, (t+1)*hop)` intersects `[onset, offset)`.
pub fn frame_span(onset: f64, offset: f64, hop: f64) -> (usize, usize) {
    let first = libm::floor(onset / hop + GRID_EPS).max(0.0) as usize;
    let end = libm::ceil(offset / hop - GRID_EPS).max(0.0) as usize;
    (first, end.max(first))
}

/// Binary `classes x frames` activity matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRoll {
    classes: Vec<String>,
    frames: usize,
    hop_bits: u64,
    activity: Vec<u8>,
}

impl EventRoll {
    pub fn zeros(classes: Vec<String>, frames: usize, hop_seconds: f64) -> Self {
        let n = classes.len() * frames;
        Self {
            classes,
            frames,
            hop_bits: hop_seconds.to_bits(),
            activity: vec![0; n],
        }
    }

    /// Builds a roll from class-major 0/1 values.
    pub fn from_activity(
        classes: Vec<String>,
        frames: usize,
        hop_seconds: f64,
        activity: Vec<u8>,
    ) -> Result<Self> {
        if activity.len() != classes.len() * frames {
            return Err(Error::Shape(format!(
                "{} activity values for {} classes x {frames} frames",
                activity.len(),
                classes.len()
            )));
        }
        if activity.iter().any(|&v| v > 1) {
            return Err(Error::Validation("activity values must be 0 or 1".into()));
        }
        Ok(Self {
            classes,
            frames,
            hop_bits: hop_seconds.to_bits(),
            activity,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn hop_seconds(&self) -> f64 {
        f64::from_bits(self.hop_bits)
    }

    pub fn activity(&self) -> &[u8] {
        &self.activity
    }

    pub fn get(&self, class: usize, frame: usize) -> bool {
        self.activity[class * self.frames + frame] != 0
    }

    pub fn set(&mut self, class: usize, frame: usize, active: bool) {
        self.activity[class * self.frames + frame] = active as u8;
    }

    pub fn row(&self, class: usize) -> &[u8] {
        &self.activity[class * self.frames..(class + 1) * self.frames]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn active_count(&self) -> usize {
        self.activity.iter().map(|&v| v as usize).sum()
    }

    /// Largest number of simultaneously active classes in any frame.
    pub fn max_polyphony(&self) -> usize {
        (0..self.frames)
            .map(|t| (0..self.num_classes()).filter(|&k| self.get(k, t)).count())
            .max()
            .unwrap_or(0)
    }

    /// Frames `start..end` as a new roll.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::Shape(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames
            )));
        }
        let mut activity = Vec::with_capacity(self.num_classes() * (end - start));
        for k in 0..self.num_classes() {
            activity.extend_from_slice(&self.row(k)[start..end]);
        }
        Ok(Self {
            classes: self.classes.clone(),
            frames: end - start,
            hop_bits: self.hop_bits,
            activity,
        })
    }

    /// Concatenates rolls along time; class lists must agree.
    pub fn concat(parts: &[EventRoll]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.classes != first.classes) {
            return Err(Error::Shape("class lists differ".into()));
        }
        let frames = parts.iter().map(|p| p.frames).sum();
        let mut activity = Vec::with_capacity(first.num_classes() * frames);
        for k in 0..first.num_classes() {
            for p in parts {
                activity.extend_from_slice(p.row(k));
            }
        }
        Ok(Self {
            classes: first.classes.clone(),
            frames,
            hop_bits: first.hop_bits,
            activity,
        })
    }

    /// Chunk-level labels: a class is present in a chunk if active in any of its frames.
    /// The trailing partial chunk is kept.
    pub fn chunk_labels(&self, chunk_frames: usize) -> Vec<Vec<u8>> {
        let chunk_frames = chunk_frames.max(1);
        (0..self.frames)
            .step_by(chunk_frames)
            .map(|start| {
                let end = (start + chunk_frames).min(self.frames);
                (0..self.num_classes())
                    .map(|k| self.row(k)[start..end].iter().any(|&v| v != 0) as u8)
                    .collect()
            })
            .collect()
    }
}

/// Frame-level targets from event annotations.
///
/// A frame is active for class `k` when its cell `[t*hop, (t+1)*hop)`
/// intersects any annotated interval of `k`. Events extending past the last
/// frame are clipped.
pub fn build_target_matrix(
    annotations: &[EventAnnotation],
    classes: &[String],
    frames: usize,
    hop_seconds: f64,
) -> Result<EventRoll> {
    if frames == 0 {
        return Err(Error::EmptyInput(
            "target matrix needs at least one frame".into(),
        ));
    }
    let unknown: BTreeSet<&str> = annotations
        .iter()
        .filter(|a| !classes.contains(&a.class_name))
        .map(|a| a.class_name.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownClass(
            unknown.into_iter().map(String::from).collect(),
        ));
    }
    let mut roll = EventRoll::zeros(classes.to_vec(), frames, hop_seconds);
    for a in annotations {
        a.validate()?;
        let k = roll.class_index(&a.class_name).expect("checked above");
        let (first, end) = frame_span(a.onset, a.offset, hop_seconds);
        for t in first..end.min(frames) {
            roll.set(k, t, true);
        }
    }
    Ok(roll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn classes() -> Vec<String> {
        vec!["a".to_string(), "b".to_string()]
    }

    #[test]
    fn no_annotations_all_zero() {
        let r = build_target_matrix(&[], &classes(), 10, 0.02).unwrap();
        assert_eq!(r.active_count(), 0);
    }

    #[test]
    fn polyphony_is_preserved() {
        let ann = [
            EventAnnotation::new("a", 0.0, 0.1).unwrap(),
            EventAnnotation::new("b", 0.0, 0.1).unwrap(),
        ];
        let r = build_target_matrix(&ann, &classes(), 10, 0.02).unwrap();
        for t in 0..5 {
            assert!(r.get(0, t) && r.get(1, t));
        }
        assert_eq!(r.max_polyphony(), 2);
    }

    #[test]
    fn partial_frame_overlap_counts() {
        let ann = [EventAnnotation::new("a", 0.05, 0.10).unwrap()];
        let r = build_target_matrix(&ann, &classes(), 10, 0.02).unwrap();
        // Oracle: enumerate cells [t*hop, (t+1)*hop) and intersect with [0.05, 0.10).
        let expected: Vec<usize> = (0..10)
            .filter(|&t| {
                let (s, e) = (t as f64 * 0.02, (t + 1) as f64 * 0.02);
                s < 0.10 - 1e-12 && e > 0.05 + 1e-12
            })
            .collect();
        assert_eq!(expected, vec![2, 3, 4]);
        let got: Vec<usize> = (0..10).filter(|&t| r.get(0, t)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn unknown_class_is_listed() {
        let ann = [EventAnnotation::new("zebra", 0.0, 1.0).unwrap()];
        match build_target_matrix(&ann, &classes(), 10, 0.02) {
            Err(Error::UnknownClass(c)) => assert_eq!(c, vec!["zebra".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn events_past_the_end_are_clipped() {
        let ann = [EventAnnotation::new("b", 0.15, 9.0).unwrap()];
        let r = build_target_matrix(&ann, &classes(), 10, 0.02).unwrap();
        assert_eq!(r.row(1), &[0, 0, 0, 0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn invalid_interval_rejected() {
        assert!(EventAnnotation::new("x", 3.0, 1.0).is_err());
        assert!(EventAnnotation::new("x", -1.0, 1.0).is_err());
    }

    #[test]
    fn chunk_labels_use_any_frame() {
        let mut r = EventRoll::zeros(classes(), 10, 0.02);
        r.set(0, 3, true);
        r.set(1, 9, true);
        assert_eq!(r.chunk_labels(4), vec![vec![1, 0], vec![0, 0], vec![0, 1]]);
    }
}

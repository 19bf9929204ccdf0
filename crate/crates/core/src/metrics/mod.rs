//! Segment-based F1 and error rate, legacy F1, scene averaging and EER.

mod eer;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign};

use crate::synth::EventRoll;
use crate::{Error, Result};

pub use eer::{class_eer, eer, EerReport};

/// Frames per one-second segment.
pub fn one_second_frames(hop_seconds: f64) -> usize {
    (libm::round(1.0 / hop_seconds) as usize).max(1)
}

/// Per-segment class activity of a reference and a prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedComparison {
    pub segment_frames: usize,
    pub classes: usize,
    /// `segments x classes`, row-major.
    pub reference: Vec<u8>,
    pub prediction: Vec<u8>,
}

impl SegmentedComparison {
    pub fn segments(&self) -> usize {
        if self.classes == 0 {
            0
        } else {
            self.reference.len() / self.classes
        }
    }

    pub fn reference_segment(&self, s: usize) -> &[u8] {
        &self.reference[s * self.classes..(s + 1) * self.classes]
    }

    pub fn prediction_segment(&self, s: usize) -> &[u8] {
        &self.prediction[s * self.classes..(s + 1) * self.classes]
    }
}

fn segment_activity(roll: &EventRoll, segment_frames: usize) -> Vec<u8> {
    let k = roll.num_classes();
    let segments = roll.frames().div_ceil(segment_frames);
    let mut out = alloc::vec![0u8; segments * k];
    for c in 0..k {
        for (t, &v) in roll.row(c).iter().enumerate() {
            if v != 0 {
                out[(t / segment_frames) * k + c] = 1;
            }
        }
    }
    out
}

/// A class is active in a segment if any of its frames is active. The
/// trailing partial segment is kept.
pub fn segment_rolls(
    reference: &EventRoll,
    prediction: &EventRoll,
    segment_frames: usize,
) -> Result<SegmentedComparison> {
    if segment_frames == 0 {
        return Err(Error::Config(
            "segment length must be at least one frame".into(),
        ));
    }
    if reference.num_classes() != prediction.num_classes()
        || reference.frames() != prediction.frames()
        || reference.hop_seconds() != prediction.hop_seconds()
    {
        return Err(Error::Shape(format!(
            "reference roll {}x{} (hop {}) vs prediction {}x{} (hop {})",
            reference.num_classes(),
            reference.frames(),
            reference.hop_seconds(),
            prediction.num_classes(),
            prediction.frames(),
            prediction.hop_seconds()
        )));
    }
    Ok(SegmentedComparison {
        segment_frames,
        classes: reference.num_classes(),
        reference: segment_activity(reference, segment_frames),
        prediction: segment_activity(prediction, segment_frames),
    })
}

/// Intermediate counts, summed over segments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SegmentStats {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub substitutions: u64,
    pub insertions: u64,
    pub deletions: u64,
    pub active: u64,
}

impl SegmentStats {
    /// Counts for one segment given per-class reference and predicted activity.
    pub fn from_segment(reference: &[u8], prediction: &[u8]) -> Self {
        let mut s = Self::default();
        for (&r, &p) in reference.iter().zip(prediction) {
            match (r != 0, p != 0) {
                (true, true) => s.tp += 1,
                (false, true) => s.fp += 1,
                (true, false) => s.fn_ += 1,
                (false, false) => {}
            }
            s.active += (r != 0) as u64;
        }
        s.substitutions = s.fp.min(s.fn_);
        s.deletions = s.fn_ - s.substitutions;
        s.insertions = s.fp - s.substitutions;
        s
    }
}

impl AddAssign for SegmentStats {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.active += o.active;
    }
}

impl Add for SegmentStats {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl core::iter::Sum for SegmentStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn accumulate_stats(cmp: &SegmentedComparison) -> SegmentStats {
    (0..cmp.segments())
        .map(|s| SegmentStats::from_segment(cmp.reference_segment(s), cmp.prediction_segment(s)))
        .sum()
}

/// Convenience: segment and accumulate in one call.
pub fn roll_stats(
    reference: &EventRoll,
    prediction: &EventRoll,
    segment_frames: usize,
) -> Result<SegmentStats> {
    Ok(accumulate_stats(&segment_rolls(
        reference,
        prediction,
        segment_frames,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged precision, recall and F1; zero when a denominator vanishes.
pub fn f1_from_stats(s: &SegmentStats) -> PrecisionRecall {
    let precision = ratio(s.tp, s.tp + s.fp);
    let recall = ratio(s.tp, s.tp + s.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall {
        precision,
        recall,
        f1,
    }
}

/// `(S + I + D) / A`.
pub fn error_rate_from_stats(s: &SegmentStats) -> Result<f64> {
    if s.active == 0 {
        return Err(Error::UndefinedMetric(
            "error rate needs at least one active reference".into(),
        ));
    }
    Ok((s.substitutions + s.insertions + s.deletions) as f64 / s.active as f64)
}

/// Unweighted mean of per-scene values.
pub fn scene_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("no scenes to average".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// One scored recording for [`legacy_f1`].
#[derive(Debug, Clone, Copy)]
pub struct SceneItem<'a> {
    pub scene: &'a str,
    pub reference: &'a EventRoll,
    pub prediction: &'a EventRoll,
}

/// F1 per segment, averaged over the segments of a scene, then over scenes.
/// Segments empty in both reference and prediction are skipped.
pub fn legacy_f1(items: &[SceneItem<'_>], segment_frames: usize) -> Result<f64> {
    let mut per_scene: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for item in items {
        let cmp = segment_rolls(item.reference, item.prediction, segment_frames)?;
        for s in 0..cmp.segments() {
            let st =
                SegmentStats::from_segment(cmp.reference_segment(s), cmp.prediction_segment(s));
            if st.tp + st.fp + st.fn_ == 0 {
                continue;
            }
            let f1 = 2.0 * st.tp as f64 / (2 * st.tp + st.fp + st.fn_) as f64;
            let e = per_scene.entry(item.scene.into()).or_insert((0.0, 0));
            e.0 += f1;
            e.1 += 1;
        }
    }
    let scores: Vec<f64> = per_scene.values().map(|&(sum, n)| sum / n as f64).collect();
    if scores.is_empty() {
        return Err(Error::UndefinedMetric(
            "no segment with any activity to score".into(),
        ));
    }
    scene_average(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn roll(k: usize, t: usize, active: &[(usize, usize)]) -> EventRoll {
        let mut r = EventRoll::zeros((0..k).map(|c| c.to_string()).collect(), t, 0.02);
        for &(c, f) in active {
            r.set(c, f, true);
        }
        r
    }

    #[test]
    fn partitioning_keeps_partial_segment() {
        let a = roll(1, 120, &[(0, 119)]);
        let cmp = segment_rolls(&a, &a, 50).unwrap();
        assert_eq!(cmp.segments(), 3);
        assert_eq!(cmp.reference, vec![0, 0, 1]);
    }

    #[test]
    fn any_frame_rule() {
        let a = roll(1, 50, &[(0, 37)]);
        let cmp = segment_rolls(&a, &roll(1, 50, &[]), 50).unwrap();
        assert_eq!(cmp.reference, vec![1]);
    }

    #[test]
    fn hand_case_substitution() {
        // ref {A, B}, pred {A, C}
        let s = SegmentStats::from_segment(&[1, 1, 0], &[1, 0, 1]);
        assert_eq!(
            s,
            SegmentStats {
                tp: 1,
                fp: 1,
                fn_: 1,
                substitutions: 1,
                insertions: 0,
                deletions: 0,
                active: 2
            }
        );
        assert_eq!(error_rate_from_stats(&s).unwrap(), 0.5);
    }

    #[test]
    fn f1_hand_case_and_conventions() {
        let s = SegmentStats {
            tp: 2,
            fp: 1,
            fn_: 1,
            ..Default::default()
        };
        let prf = f1_from_stats(&s);
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((prf.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_from_stats(&SegmentStats::default()).f1, 0.0);
        assert!(error_rate_from_stats(&SegmentStats::default()).is_err());
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let r = roll(2, 10, &[(0, 1), (1, 1), (1, 7)]);
        let s = roll_stats(&r, &r, 1).unwrap();
        assert_eq!(
            (s.fp, s.fn_, s.substitutions, s.insertions, s.deletions),
            (0, 0, 0, 0, 0)
        );
        assert_eq!(s.tp, 3);
        assert_eq!(f1_from_stats(&s).f1, 1.0);
        assert_eq!(error_rate_from_stats(&s).unwrap(), 0.0);
        let e = roll_stats(&r, &roll(2, 10, &[]), 1).unwrap();
        assert_eq!(error_rate_from_stats(&e).unwrap(), 1.0);
    }

    #[test]
    fn insertions_push_error_rate_above_one() {
        let r = roll(3, 4, &[(0, 0)]);
        let p = roll(3, 4, &[(0, 0), (1, 0), (1, 1), (2, 2), (2, 3)]);
        let s = roll_stats(&r, &p, 1).unwrap();
        assert_eq!(
            error_rate_from_stats(&s).unwrap(),
            s.insertions as f64 / s.active as f64
        );
        assert!(error_rate_from_stats(&s).unwrap() > 1.0);
    }

    #[test]
    fn scene_average_is_unweighted() {
        assert_eq!(scene_average(&[0.7]).unwrap(), 0.7);
        assert!((scene_average(&[0.2, 0.8]).unwrap() - 0.5).abs() < 1e-15);
        // Scene A: 1 frame, all correct. Scene B: 9 frames, half wrong.
        let ra = roll(1, 1, &[(0, 0)]);
        let rb = roll(1, 10, &[(0, 0), (0, 1), (0, 2), (0, 3)]);
        let pb = roll(1, 10, &[(0, 0), (0, 1), (0, 5), (0, 6)]);
        let sa = roll_stats(&ra, &ra, 1).unwrap();
        let sb = roll_stats(&rb, &pb, 1).unwrap();
        let avg = scene_average(&[f1_from_stats(&sa).f1, f1_from_stats(&sb).f1]).unwrap();
        let pooled = f1_from_stats(&(sa + sb)).f1;
        assert!((avg - pooled).abs() > 1e-3);
    }

    #[test]
    fn legacy_f1_cases() {
        let r = roll(2, 2, &[(0, 0), (1, 1)]);
        let p = roll(2, 2, &[(0, 0)]);
        let items = [SceneItem {
            scene: "home",
            reference: &r,
            prediction: &p,
        }];
        assert!((legacy_f1(&items, 1).unwrap() - 0.5).abs() < 1e-15);
        let perfect = [SceneItem {
            scene: "home",
            reference: &r,
            prediction: &r,
        }];
        assert_eq!(legacy_f1(&perfect, 1).unwrap(), 1.0);
        let empty = roll(2, 2, &[]);
        let none = [SceneItem {
            scene: "x",
            reference: &empty,
            prediction: &empty,
        }];
        assert!(legacy_f1(&none, 1).is_err());
    }

    #[test]
    fn legacy_differs_from_micro() {
        // One dense segment with many misses, one sparse perfect segment.
        let r = roll(4, 2, &[(0, 0), (1, 0), (2, 0), (3, 0), (0, 1)]);
        let p = roll(4, 2, &[(0, 0), (0, 1)]);
        let items = [SceneItem {
            scene: "s",
            reference: &r,
            prediction: &p,
        }];
        let legacy = legacy_f1(&items, 1).unwrap();
        let micro = f1_from_stats(&roll_stats(&r, &p, 1).unwrap()).f1;
        assert!((legacy - micro).abs() > 1e-3, "{legacy} vs {micro}");
    }

    #[test]
    fn one_second_segment_length() {
        assert_eq!(one_second_frames(0.02), 50);
        assert_eq!(one_second_frames(0.04), 25);
    }

    #[test]
    fn mismatched_rolls_rejected() {
        assert!(segment_rolls(&roll(2, 5, &[]), &roll(2, 6, &[]), 1).is_err());
        assert!(segment_rolls(&roll(2, 5, &[]), &roll(3, 5, &[]), 1).is_err());
    }
}

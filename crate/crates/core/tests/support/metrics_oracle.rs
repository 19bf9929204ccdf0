//! Brute-force metric definitions used as oracles.

use std::collections::{BTreeMap, BTreeSet};

use sed_forge_core::synth::EventRoll;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub s: u64,
    pub i: u64,
    pub d: u64,
    pub a: u64,
}

/// Active class sets per segment, built frame by frame.
pub fn segment_sets(roll: &EventRoll, seg: usize) -> Vec<BTreeSet<usize>> {
    let n = (roll.frames() + seg - 1) / seg;
    let mut sets = vec![BTreeSet::new(); n];
    for t in 0..roll.frames() {
        for k in 0..roll.num_classes() {
            if roll.get(k, t) {
                sets[t / seg].insert(k);
            }
        }
    }
    sets
}

pub fn counts(reference: &EventRoll, prediction: &EventRoll, seg: usize) -> Counts {
    let r = segment_sets(reference, seg);
    let p = segment_sets(prediction, seg);
    let mut c = Counts::default();
    for (rs, ps) in r.iter().zip(&p) {
        let tp = rs.intersection(ps).count() as u64;
        let fp = ps.difference(rs).count() as u64;
        let fn_ = rs.difference(ps).count() as u64;
        // Pair each miss with a false alarm while both remain.
        let mut s = 0;
        let (mut f, mut m) = (fp, fn_);
        while f > 0 && m > 0 {
            s += 1;
            f -= 1;
            m -= 1;
        }
        c.tp += tp;
        c.fp += fp;
        c.fn_ += fn_;
        c.s += s;
        c.i += f;
        c.d += m;
        c.a += rs.len() as u64;
    }
    c
}

pub fn f1(c: &Counts) -> f64 {
    let p = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let r = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn error_rate(c: &Counts) -> Option<f64> {
    (c.a > 0).then(|| (c.s + c.i + c.d) as f64 / c.a as f64)
}

pub fn legacy(items: &[(&str, &EventRoll, &EventRoll)], seg: usize) -> Option<f64> {
    let mut scenes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (scene, r, p) in items {
        for (rs, ps) in segment_sets(r, seg).iter().zip(segment_sets(p, seg).iter()) {
            if rs.is_empty() && ps.is_empty() {
                continue;
            }
            let tp = rs.intersection(ps).count() as f64;
            let prec = if ps.is_empty() {
                0.0
            } else {
                tp / ps.len() as f64
            };
            let rec = if rs.is_empty() {
                0.0
            } else {
                tp / rs.len() as f64
            };
            let f = if prec + rec == 0.0 {
                0.0
            } else {
                2.0 * prec * rec / (prec + rec)
            };
            scenes.entry(scene).or_default().push(f);
        }
    }
    if scenes.is_empty() {
        return None;
    }
    let per: Vec<f64> = scenes
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    Some(per.iter().sum::<f64>() / per.len() as f64)
}

/// Sweeps every distinct threshold, counting from scratch at each, and
/// linearly interpolates the first sign change of FNR - FPR.
pub fn eer(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&th| {
            let fp = labels
                .iter()
                .zip(scores)
                .filter(|(&l, &s)| l == 0 && s >= th)
                .count() as f64;
            let miss = labels
                .iter()
                .zip(scores)
                .filter(|(&l, &s)| l == 1 && s < th)
                .count() as f64;
            (fp / neg, miss / pos)
        })
        .collect();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (a.1 - a.0, b.1 - b.0);
        if db <= 0.0 {
            let t = da / (da - db);
            return Some(a.0 + t * (b.0 - a.0));
        }
    }
    None
}

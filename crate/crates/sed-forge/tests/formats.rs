use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use sed_forge::annotations::{format_annotations, parse_annotations};
use sed_forge::cache::Matrix;
use sed_forge::config::{ExperimentConfig, Mode};
use sed_forge::report::Report;
use sed_forge::FormatError;
use sed_forge_core::metrics::SegmentStats;
use sed_forge_core::synth::EventAnnotation;

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

proptest! {
    #[test]
    fn matrix_bytes_roundtrip(
        header in prop::collection::btree_map("[a-z_]{1,8}", "[a-zA-Z0-9 ,._-]{0,12}", 0..5),
        rows in 0usize..6,
        cols in 0usize..6,
        bits in prop::collection::vec(any::<u32>(), 36),
    ) {
        let header: BTreeMap<String, String> =
            header.into_iter().filter(|(k, _)| k != "rows" && k != "cols").collect();
        let values: Vec<f32> = bits[..rows * cols].iter().map(|&b| f32::from_bits(b)).collect();
        let m = Matrix { header, rows, cols, values };
        let back = Matrix::from_bytes(&m.to_bytes(), Path::new("m.sfm")).unwrap();
        prop_assert_eq!(&back.header, &m.header);
        prop_assert_eq!((back.rows, back.cols), (rows, cols));
        let a: Vec<u32> = back.values.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = m.values.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn truncated_matrix_is_rejected(cut in 1usize..20) {
        let m = Matrix { header: BTreeMap::new(), rows: 2, cols: 3, values: vec![1.0; 6] };
        let bytes = m.to_bytes();
        prop_assert!(Matrix::from_bytes(&bytes[..bytes.len() - cut], Path::new("m")).is_err());
    }

    #[test]
    fn annotations_roundtrip(events in prop::collection::vec(("[a-z]{1,6}", 0.0f64..500.0, 1e-3f64..60.0), 0..12)) {
        let events: Vec<EventAnnotation> = events
            .into_iter()
            .map(|(c, on, d)| EventAnnotation::new(c, on, on + d).unwrap())
            .collect();
        let back = parse_annotations(&format_annotations(&events), Path::new("a.txt")).unwrap();
        prop_assert_eq!(back.len(), events.len());
        for (a, b) in back.iter().zip(&events) {
            prop_assert_eq!((&a.class_name, a.onset, a.offset), (&b.class_name, b.onset, b.offset));
        }
    }

    #[test]
    fn report_text_roundtrip(values in prop::collection::vec(prop::option::of(-10.0f64..10.0), 1..8), tp in 0u64..1000) {
        let mut r = Report::default();
        r.entry("seed", 4);
        for (i, v) in values.iter().enumerate() {
            r.metric("pooled", format!("m{i}"), *v);
        }
        r.stat("pooled", "frame", SegmentStats { tp, fp: 3, fn_: 1, substitutions: 1, insertions: 2, deletions: 0, active: tp + 1 });
        let back = Report::parse(&r.to_text(), Path::new("r.txt")).unwrap();
        prop_assert_eq!(back, r);
    }
}

#[test]
fn shipped_configs_parse_and_roundtrip() {
    for (name, mode) in [("toy_frame.toml", Mode::Frame), ("toy_tagging.toml", Mode::Tagging)] {
        let path = configs().join(name);
        let cfg = ExperimentConfig::read(&path).unwrap();
        assert_eq!(cfg.mode, mode);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml(), &path).unwrap(), cfg);
        cfg.network_spec(3).unwrap().validate().unwrap();
    }
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&d.to_toml(), Path::new("d.toml")).unwrap(), d);
}

#[test]
fn config_errors_are_specific() {
    let p = Path::new("c.toml");
    let unknown = ExperimentConfig::from_toml("[train]\nbatch = 3\n", p).unwrap_err();
    assert!(matches!(unknown, FormatError::Parse { .. }), "{unknown}");
    let threshold = ExperimentConfig::from_toml("[eval]\nthreshold = 1.5\n", p).unwrap_err();
    assert!(matches!(threshold, FormatError::Invalid { .. }), "{threshold}");
    // Tagging needs exactly one temporal max pooling layer.
    let tagging = ExperimentConfig::from_toml("mode = \"tagging\"\n", p).unwrap_err();
    assert!(tagging.to_string().contains("temporal"), "{tagging}");
}

#[test]
fn unrelated_files_are_rejected_by_magic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.sfm");
    std::fs::write(&p, "hello\n\n").unwrap();
    assert!(matches!(Matrix::read(&p), Err(FormatError::BadMagic { .. })));
    assert!(sed_forge::model::Model::load(&p).is_err());
    assert!(matches!(sed_forge::cache::read_probabilities(&p), Err(FormatError::BadMagic { .. })));
}

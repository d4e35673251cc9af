use proptest::prelude::*;
use rangevar::ingest::{
    parse_profile_csv, serialize_dataset, IntensityKind, ParseOptions, PolarObservation, ScanDataset, ScanMeta,
};

fn observation() -> impl Strategy<Value = PolarObservation> {
    (0u32..5000, -1.5f64..1.5, -3.1f64..3.1, 1e-3f64..500.0, 0.0f64..1e6).prop_map(|(p, v, h, r, i)| PolarObservation {
        profile_index: p,
        vertical_angle: v,
        horizontal_angle: h,
        range: r,
        intensity: i,
    })
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

proptest! {
    #[test]
    fn serialize_then_parse_preserves_values(obs in prop::collection::vec(observation(), 1..200), scaled in any::<bool>()) {
        let ds = ScanDataset {
            observations: obs,
            meta: ScanMeta {
                scanner_id: "test".into(),
                scanning_rate_khz: Some(254.0),
                nominal_distance: Some(10.0),
                intensity_kind: if scaled { IntensityKind::Scaled } else { IntensityKind::Raw },
                point_spacing_note: None,
            },
            skipped_rows: 0,
        };
        let mut buf = Vec::new();
        serialize_dataset(&ds, &mut buf).unwrap();
        let back = parse_profile_csv(buf.as_slice(), &ParseOptions::default()).unwrap();
        prop_assert_eq!(&back.meta, &ds.meta);
        prop_assert_eq!(back.observations.len(), ds.observations.len());
        for (a, b) in ds.observations.iter().zip(&back.observations) {
            prop_assert_eq!(a.profile_index, b.profile_index);
            prop_assert!(close(a.vertical_angle, b.vertical_angle));
            prop_assert!(close(a.horizontal_angle, b.horizontal_angle));
            prop_assert!(close(a.range, b.range));
            prop_assert!(close(a.intensity, b.intensity));
        }
    }
}

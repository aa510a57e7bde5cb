use proptest::prelude::*;

use pfsurvey::geometry::Point;
use pfsurvey::sim::{builtin, default_floorplan, sample_field, simulate};

#[test]
fn ground_truth_never_crosses_walls() {
    let fp = default_floorplan();
    for name in ["corridor", "loop", "detour", "tour", "short"] {
        let s = simulate(&fp, &builtin(name).unwrap(), 1).unwrap();
        for w in s.truth.positions().windows(2) {
            assert!(!fp.segment_crosses_wall(&w[0], &w[1]), "{name}");
        }
    }
}

#[test]
fn same_seed_same_log() {
    let fp = default_floorplan();
    let sc = builtin("loop").unwrap();
    let a = simulate(&fp, &sc, 3).unwrap();
    let b = simulate(&fp, &sc, 3).unwrap();
    let c = simulate(&fp, &sc, 4).unwrap();
    assert_eq!(a.log.to_text(), b.log.to_text());
    assert_ne!(a.log.to_text(), c.log.to_text());
}

proptest! {
    #[test]
    fn field_is_deterministic_and_positive(x in 0.0..50.0f64, y in 0.0..30.0f64) {
        let fp = default_floorplan();
        let field = builtin("loop").unwrap().field(&fp);
        let p = Point::new(x, y);
        let v = sample_field(&field, &p);
        prop_assert!(v > 0.0);
        prop_assert_eq!(v, sample_field(&field, &p));
    }
}

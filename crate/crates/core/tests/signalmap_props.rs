use proptest::prelude::*;

use pfsurvey::geometry::{Bounds, Point};
use pfsurvey::sensors::{ApId, WifiObservation};
use pfsurvey::signalmap::{gp_train, position_one_shot, rss90, GpParams, MapGrid};

fn bounds() -> Bounds {
    Bounds {
        min: Point::new(0.0, 0.0),
        max: Point::new(6.0, 4.0),
    }
}

fn training() -> impl Strategy<Value = Vec<(Point, f64)>> {
    prop::collection::vec((0.0..6.0f64, 0.0..4.0f64, -95.0..-40.0f64), 1..12).prop_map(|v| {
        v.into_iter()
            .map(|(x, y, r)| (Point::new(x, y), r))
            .collect()
    })
}

proptest! {
    #[test]
    fn posterior_variance_is_within_prior(pts in training(), sigma_n in 0.5..6.0f64) {
        let params = GpParams { sigma_n, cell: 1.0, ..GpParams::default() };
        let map = gp_train(ApId::new("a"), &pts, &params, &bounds()).unwrap();
        let prior = params.prior_variance();
        for &v in &map.grid.var {
            prop_assert!((0.0..=prior + 1e-9).contains(&v));
        }
    }

    #[test]
    fn rss90_is_symmetric_and_shift_invariant(
        m1 in -100.0..-30.0f64, v1 in 0.1..80.0f64,
        m2 in -100.0..-30.0f64, v2 in 0.1..80.0f64,
        c in -50.0..50.0f64
    ) {
        let s = rss90(m1, v1, m2, v2);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - rss90(m2, v2, m1, v1)).abs() < 1e-12);
        prop_assert!((s - rss90(m1 + c, v1, m2 + c, v2)).abs() < 1e-9);
    }

    #[test]
    fn positioning_ignores_ap_order(
        mus in prop::collection::vec(prop::collection::vec(-90.0..-40.0f64, 6), 2..5),
        rssi in prop::collection::vec(-90.0..-40.0f64, 5),
        rot in 0usize..5
    ) {
        let cells: Vec<Point> = (0..6).map(|i| Point::new(i as f64, 0.0)).collect();
        let maps: Vec<MapGrid> = mus
            .iter()
            .enumerate()
            .map(|(k, mu)| MapGrid {
                ap: ApId::new(format!("ap{k}")),
                cells: cells.clone(),
                mu: mu.clone(),
                var: vec![4.0; 6],
            })
            .collect();
        let obs: Vec<WifiObservation> = rssi
            .iter()
            .enumerate()
            .map(|(k, &r)| WifiObservation { t: 0.0, ap: ApId::new(format!("ap{k}")), rssi: r })
            .collect();
        let mut shuffled = obs.clone();
        shuffled.rotate_left(rot);
        shuffled.reverse();
        let mut maps_rev = maps.clone();
        maps_rev.reverse();
        let a = position_one_shot(&maps, &obs, 4.0).unwrap();
        prop_assert_eq!(a, position_one_shot(&maps_rev, &shuffled, 4.0).unwrap());
    }
}

#[test]
fn noiseless_gp_reproduces_training_values() {
    let pts = vec![
        (Point::new(1.0, 1.0), -50.0),
        (Point::new(4.0, 1.5), -70.0),
        (Point::new(2.5, 3.0), -60.0),
    ];
    for sigma_n in [1e-2, 1e-3] {
        let params = GpParams {
            sigma_n,
            ..GpParams::default()
        };
        let map = gp_train(ApId::new("a"), &pts, &params, &bounds()).unwrap();
        for (p, r) in &pts {
            let (mu, _) = map.predict(p);
            assert!((mu - r).abs() < 1e-2, "{mu} vs {r} at sigma_n {sigma_n}");
        }
    }
}

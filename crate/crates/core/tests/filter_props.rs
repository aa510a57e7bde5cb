use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pfsurvey::filter::{
    kld_resample_indices, prune_smooth, run_filter, AncestorTree, ConstraintSet, FilterConfig,
    KldConfig, Node, Particle,
};
use pfsurvey::geometry::Pose2D;
use pfsurvey::sim::{builtin, default_floorplan, simulate};

type Gen = Vec<(f64, f64, Option<u32>)>;

/// Up to 10 epochs of up to 10 particles with valid parent links; the last
/// epoch has at least one positive weight.
fn trees() -> impl Strategy<Value = Vec<Gen>> {
    prop::collection::vec(1usize..=10, 1..=10).prop_flat_map(|sizes| {
        let gens: Vec<BoxedStrategy<Gen>> = sizes
            .iter()
            .enumerate()
            .map(|(e, &n)| {
                let prev = if e == 0 { 0 } else { sizes[e - 1] as u32 };
                let last = e + 1 == sizes.len();
                prop::collection::vec(
                    (
                        -5.0..5.0f64,
                        if last {
                            prop_oneof![Just(0.0), 0.1..1.0f64].boxed()
                        } else {
                            (0.1..1.0f64).boxed()
                        },
                        if e == 0 {
                            Just(None).boxed()
                        } else {
                            (0..prev).prop_map(Some).boxed()
                        },
                    ),
                    n,
                )
                .prop_map(move |mut g| {
                    if last {
                        g[0].1 = 1.0;
                    }
                    g
                })
                .boxed()
            })
            .collect();
        gens
    })
}

proptest! {
    #[test]
    fn pruning_matches_surviving_ancestor_average(gens in trees()) {
        let epochs = gens.len();
        let mut alive: Vec<Vec<bool>> = gens.iter().map(|g| vec![false; g.len()]).collect();
        for (i, n) in gens[epochs - 1].iter().enumerate() {
            if n.1 > 0.0 {
                let mut idx = i;
                for e in (0..epochs).rev() {
                    alive[e][idx] = true;
                    if let Some(p) = gens[e][idx].2 {
                        idx = p as usize;
                    }
                }
            }
        }
        let tree_epochs = gens
            .iter()
            .map(|g| g.iter().map(|&(x, w, p)| Node::new(Pose2D::new(x, -x, 0.0), w, p)).collect())
            .collect();
        let mut tree = AncestorTree::from_epochs(tree_epochs).unwrap();
        let got = prune_smooth(&mut tree).unwrap();
        for e in 0..epochs {
            let (mut wx, mut w) = (0.0, 0.0);
            for (n, a) in gens[e].iter().zip(&alive[e]) {
                if *a {
                    wx += n.1 * n.0;
                    w += n.1;
                }
            }
            prop_assert!((got[e].x - wx / w).abs() < 1e-9);
            prop_assert!((got[e].y + wx / w).abs() < 1e-9);
            prop_assert_eq!(tree.survivor_count(e), alive[e].iter().filter(|a| **a).count());
        }
    }
}

#[test]
fn resampling_is_weight_proportional() {
    let particles = [0.7, 0.3].map(|w| Particle {
        pose: Pose2D::new(0.0, 0.0, 0.0),
        weight: w,
        parent: None,
    });
    // one occupied bin, so each call draws exactly n_min
    let cfg = KldConfig {
        n_min: 1000,
        ..KldConfig::coarse()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut first, mut total) = (0usize, 0usize);
    while total < 100_000 {
        let idx = kld_resample_indices(&particles, &cfg, &mut rng).unwrap();
        total += idx.len();
        first += idx.iter().filter(|&&i| i == 0).count();
    }
    let n = total as f64;
    let sd = (n * 0.7 * 0.3).sqrt();
    assert!(
        (first as f64 - 0.7 * n).abs() < 3.0 * sd,
        "{first} of {total}"
    );
}

#[test]
fn filter_run_respects_counts_walls_and_seed() {
    let fp = default_floorplan();
    let s = simulate(&fp, &builtin("short").unwrap(), 4).unwrap();
    let start = s.log.start_hint().unwrap();
    let cfg = FilterConfig::coarse();
    let cs = ConstraintSet::walls_only(&fp);
    let a = run_filter(&s.log.steps, &start, &fp, &cfg, &cs, 21).unwrap();
    let b = run_filter(&s.log.steps, &start, &fp, &cfg, &cs, 21).unwrap();
    assert_eq!(a.poses, b.poses);
    assert_eq!(a.rooms, b.rooms);
    assert_eq!(a.particle_counts, b.particle_counts);
    assert_eq!(a.poses.len(), s.log.steps.len() + 1);
    let n_min = cfg.kld.n_min;
    for &c in &a.particle_counts {
        assert!(c >= n_min && c <= 10 * n_min, "{c}");
    }
    for w in a.map_lineage.windows(2) {
        assert!(!fp.segment_crosses_wall(&w[0].position(), &w[1].position()));
    }
}

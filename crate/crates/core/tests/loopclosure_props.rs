use proptest::prelude::*;

use pfsurvey::filter::{run_filter, sub_seed, ConstraintSet, FilterConfig};
use pfsurvey::geometry::Point;
use pfsurvey::loopclosure::{
    detect_loop_closures, find_msps, maximal_segment_pairs, obe_dtw, validate_closure, MspParams,
    SegmentPair, ValidationParams,
};
use pfsurvey::sim::{builtin, default_floorplan, simulate};

/// Minimal total cost over all open-begin-end paths.
fn brute_dtw(q: &[f64], r: &[f64]) -> f64 {
    fn go(q: &[f64], r: &[f64], i: usize, j: usize, acc: f64) -> f64 {
        let acc = acc + (q[i] - r[j]).abs();
        if i + 1 == q.len() {
            return acc;
        }
        (0..=2)
            .filter(|d| j + d < r.len())
            .map(|d| go(q, r, i + 1, j + d, acc))
            .fold(f64::INFINITY, f64::min)
    }
    (0..r.len())
        .map(|j| go(q, r, 0, j, 0.0))
        .fold(f64::INFINITY, f64::min)
}

/// Every monotone chain of linked cells, then keep those not contained in
/// another. Pairs with identical ranges keep the smallest.
fn brute_msps(traj: &[Point], params: &MspParams) -> Vec<SegmentPair> {
    let n = traj.len();
    let linked =
        |i: usize, j: usize| j > i + params.guard && (traj[i] - traj[j]).norm() <= params.radius;
    let mut all = Vec::new();
    for a0 in 0..n {
        for b0 in 0..n {
            if !linked(a0, b0) {
                continue;
            }
            for dir in [1i64, -1] {
                // reachable cells from (a0, b0)
                let mut seen = vec![(a0, b0)];
                let mut stack = vec![(a0, b0)];
                while let Some((a, b)) = stack.pop() {
                    for (da, db) in [(1usize, 0i64), (0, dir), (1, dir)] {
                        let na = a + da;
                        let nb = b as i64 + db;
                        if na >= n || nb < 0 || nb as usize >= n {
                            continue;
                        }
                        let c = (na, nb as usize);
                        if linked(c.0, c.1) && !seen.contains(&c) {
                            seen.push(c);
                            stack.push(c);
                        }
                    }
                }
                for &(a1, b1) in &seen {
                    if a1 > a0 && b1 != b0 {
                        all.push(SegmentPair {
                            a_start: a0,
                            a_end: a1,
                            b_start: b0,
                            b_end: b1,
                        });
                    }
                }
            }
        }
    }
    all.sort_unstable();
    all.dedup();
    all.iter()
        .filter(|p| {
            !all.iter()
                .any(|o| o != *p && p.contained_in(o) && (!o.contained_in(p) || o < *p))
        })
        .copied()
        .collect()
}

proptest! {
    #[test]
    fn dtw_equals_enumeration(
        q in prop::collection::vec(-9i32..=9, 2..=6),
        r in prop::collection::vec(-9i32..=9, 2..=9)
    ) {
        let q: Vec<f64> = q.into_iter().map(f64::from).collect();
        let r: Vec<f64> = r.into_iter().map(f64::from).collect();
        let (path, cost) = obe_dtw(&q, &r).unwrap();
        prop_assert!(path.is_valid());
        prop_assert!(cost >= 0.0);
        let want = brute_dtw(&q, &r);
        prop_assert_eq!(cost, want / q.len() as f64);
        let path_cost: f64 = path.0.iter().map(|&(i, j)| (q[i] - r[j]).abs()).sum();
        prop_assert_eq!(path_cost, want);
    }

    #[test]
    fn dtw_is_zero_on_an_embedded_query(r in prop::collection::vec(-50.0..50.0f64, 4..20), s in 0usize..100, l in 2usize..6) {
        let start = s % (r.len() - 1);
        let end = (start + l).min(r.len());
        prop_assume!(end - start >= 2);
        let (_, cost) = obe_dtw(&r[start..end], &r).unwrap();
        prop_assert_eq!(cost, 0.0);
    }

    #[test]
    fn msps_match_brute_force(
        pts in prop::collection::vec((0.0..6.0f64, 0.0..3.0f64), 4..11),
        radius in 0.5..2.5f64
    ) {
        let traj: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let params = MspParams { radius, guard: 1 };
        let got = maximal_segment_pairs(&traj, &params);
        prop_assert_eq!(got, brute_msps(&traj, &params));
    }

    #[test]
    fn final_msps_are_mutually_non_contained(
        pts in prop::collection::vec((0.0..8.0f64, 0.0..4.0f64), 4..25)
    ) {
        let traj: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let msps = find_msps(&traj, &MspParams { radius: 1.5, guard: 2 });
        for a in &msps {
            for b in &msps {
                prop_assert!(a == b || !a.contained_in(b));
            }
        }
    }
}

#[test]
fn validation_only_removes_and_accepted_pass_all_checks() {
    let fp = default_floorplan();
    let params = ValidationParams::default();
    for name in ["corridor", "detour"] {
        let s = simulate(&fp, &builtin(name).unwrap(), 2).unwrap();
        let pf1 = run_filter(
            &s.log.steps,
            &s.log.start_hint().unwrap(),
            &fp,
            &FilterConfig::coarse(),
            &ConstraintSet::walls_only(&fp),
            sub_seed(2, 11),
        )
        .unwrap();
        let pos = pf1.positions();
        let rep = detect_loop_closures(&pos, &pf1.times, &s.log.mags, &params).unwrap();
        assert!(rep.accepted.len() <= rep.unvalidated.len());
        for sub in &rep.submatchings {
            let again = validate_closure(&sub.closures, &pos, &pf1.times, &params).unwrap();
            assert_eq!(again.is_ok(), sub.verdict.is_ok());
        }
        let truth = s.truth.positions();
        let precision = |v: &[pfsurvey::loopclosure::StepLoopClosure]| {
            v.iter()
                .filter(|c| (truth[c.epoch_a] - truth[c.epoch_b]).norm() <= 1.5)
                .count() as f64
                / v.len().max(1) as f64
        };
        assert!(
            precision(&rep.accepted) >= precision(&rep.unvalidated),
            "{name}"
        );
    }
}

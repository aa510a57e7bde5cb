//! Reduce dense magnetic closures to one closure per step epoch.

use super::{MagLoopClosure, StepLoopClosure};

fn nearest_index(times: &[f64], t: f64) -> usize {
    let hi = times.partition_point(|&x| x < t);
    if hi == 0 {
        return 0;
    }
    if hi == times.len() {
        return times.len() - 1;
    }
    if t - times[hi - 1] <= times[hi] - t {
        hi - 1
    } else {
        hi
    }
}

/// Thin one matched group of magnetic closures. Every epoch whose time lies
/// in the span covered on side `a` is paired with the epoch nearest the
/// interpolated matched time on side `b`.
pub fn thin_to_steps(closures: &[MagLoopClosure], epoch_times: &[f64]) -> Vec<StepLoopClosure> {
    let mut pairs: Vec<(f64, f64)> = closures.iter().map(|c| (c.time_a, c.time_b)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    pairs.dedup_by(|x, y| x.0 == y.0);
    let (Some(&(ta0, _)), Some(&(ta1, _))) = (pairs.first(), pairs.last()) else {
        return Vec::new();
    };
    let matched = |t: f64| -> f64 {
        let hi = pairs.partition_point(|p| p.0 <= t);
        if hi == 0 || hi == pairs.len() {
            return pairs[hi.saturating_sub(1)].1;
        }
        let (a, b) = (pairs[hi - 1], pairs[hi]);
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    };
    let first = epoch_times.partition_point(|&x| x < ta0);
    let mut out: Vec<StepLoopClosure> = epoch_times[first..]
        .iter()
        .take_while(|&&t| t <= ta1)
        .enumerate()
        .filter_map(|(k, &t)| {
            let eb = nearest_index(epoch_times, matched(t));
            StepLoopClosure::new(first + k, eb)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

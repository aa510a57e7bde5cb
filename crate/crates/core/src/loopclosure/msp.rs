//! Maximum segment pair search over a trajectory.

use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use crate::geometry::Point;

/// Two index ranges of one trajectory that run alongside each other.
/// `b` is stored in traversal order, so `b_start > b_end` for an
/// opposite-direction pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentPair {
    pub a_start: usize,
    pub a_end: usize,
    pub b_start: usize,
    pub b_end: usize,
}

impl SegmentPair {
    pub fn decreasing(&self) -> bool {
        self.b_start > self.b_end
    }

    pub fn b_range(&self) -> (usize, usize) {
        (self.b_start.min(self.b_end), self.b_start.max(self.b_end))
    }

    pub fn a_len(&self) -> usize {
        self.a_end - self.a_start + 1
    }

    pub fn b_len(&self) -> usize {
        let (lo, hi) = self.b_range();
        hi - lo + 1
    }

    /// Both ranges of `self` lie inside the corresponding ranges of `other`.
    pub fn contained_in(&self, other: &SegmentPair) -> bool {
        let (lo, hi) = self.b_range();
        let (olo, ohi) = other.b_range();
        other.a_start <= self.a_start && self.a_end <= other.a_end && olo <= lo && hi <= ohi
    }
}

impl std::fmt::Display for SegmentPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{{{{{}:{}}},{{{}:{}}}}}",
            self.a_start, self.a_end, self.b_start, self.b_end
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MspParams {
    pub radius: f64,
    /// Index pairs closer than this in time are never linked.
    pub guard: usize,
}

impl Default for MspParams {
    fn default() -> Self {
        Self {
            radius: 3.0,
            guard: 15,
        }
    }
}

/// `links[i]` lists every `j > i + guard` within `radius` of `i`, ascending.
pub fn link_indices(traj: &[Point], params: &MspParams) -> Vec<Vec<usize>> {
    let r2 = params.radius * params.radius;
    (0..traj.len())
        .map(|i| {
            (i + params.guard + 1..traj.len())
                .filter(|&j| (traj[i] - traj[j]).norm_squared() <= r2)
                .collect()
        })
        .collect()
}

/// Maximal segment pairs before overlap resolution. A pair is valid when a
/// monotone chain of linked cells runs from `(a_start, b_start)` to
/// `(a_end, b_end)`, each move advancing `a` by one, `b` by one in its
/// direction, or both. Pairs with a one-index side are dropped.
pub fn maximal_segment_pairs(traj: &[Point], params: &MspParams) -> Vec<SegmentPair> {
    let links = link_indices(traj, params);
    let cells: Vec<(usize, usize)> = links
        .iter()
        .enumerate()
        .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
        .collect();
    let index: FxHashMap<(usize, usize), usize> =
        cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();

    let mut candidates = Vec::new();
    for dir in [1isize, -1] {
        let step = |j: usize| j.checked_add_signed(dir);
        let succ = |&(i, j): &(usize, usize)| -> Vec<usize> {
            let mut out = Vec::with_capacity(3);
            for c in [
                Some((i + 1, j)),
                step(j).map(|jj| (i, jj)),
                step(j).map(|jj| (i + 1, jj)),
            ]
            .into_iter()
            .flatten()
            {
                if let Some(&k) = index.get(&c) {
                    out.push(k);
                }
            }
            out
        };
        let mut has_pred = vec![false; cells.len()];
        let successors: Vec<Vec<usize>> = cells.iter().map(succ).collect();
        for s in &successors {
            for &k in s {
                has_pred[k] = true;
            }
        }
        let mut seen = vec![usize::MAX; cells.len()];
        let mut queue = VecDeque::new();
        for src in (0..cells.len()).filter(|&k| !has_pred[k]) {
            seen[src] = src;
            queue.push_back(src);
            while let Some(k) = queue.pop_front() {
                if successors[k].is_empty() {
                    let (a0, b0) = cells[src];
                    let (a1, b1) = cells[k];
                    candidates.push(SegmentPair {
                        a_start: a0,
                        a_end: a1,
                        b_start: b0,
                        b_end: b1,
                    });
                }
                for &n in &successors[k] {
                    if seen[n] != src {
                        seen[n] = src;
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    candidates.retain(|p| p.a_len() >= 2 && p.b_len() >= 2);
    keep_maximal(candidates)
}

/// Remove every pair contained in another one; output sorted and unique.
pub fn keep_maximal(mut pairs: Vec<SegmentPair>) -> Vec<SegmentPair> {
    pairs.sort_unstable();
    pairs.dedup();
    let keep: Vec<bool> = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            !pairs
                .iter()
                .enumerate()
                .any(|(m, q)| m != k && p.contained_in(q) && !(q.contained_in(p) && m > k))
        })
        .collect();
    pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Maximal segment pairs with non-overlapping sides. A pair whose ranges
/// overlap (circling or turning back on the same spot) is split at the
/// midpoint of its combined span, keeping its direction. Split pairs that end
/// up inside another pair are dropped.
pub fn find_msps(traj: &[Point], params: &MspParams) -> Vec<SegmentPair> {
    let out: Vec<SegmentPair> = maximal_segment_pairs(traj, params)
        .into_iter()
        .filter_map(|p| {
            let (lo, _) = p.b_range();
            if p.a_end < lo {
                return Some(p);
            }
            let (_, hi) = p.b_range();
            let mid = (p.a_start + hi) / 2;
            let (b_start, b_end) = if p.decreasing() {
                (hi, mid + 1)
            } else {
                (mid + 1, hi)
            };
            let q = SegmentPair {
                a_start: p.a_start,
                a_end: mid,
                b_start,
                b_end,
            };
            (q.a_len() >= 2 && q.b_len() >= 2).then_some(q)
        })
        .collect();
    keep_maximal(out)
}

//! Open-begin-end DTW with the asymmetric step pattern.

use crate::error::{Error, Result};

/// Index pairs `(i, j)`: query element `i` matched to reference element `j`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WarpingPath(pub Vec<(usize, usize)>);

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `i` advances by exactly one and `j` never decreases.
    pub fn is_valid(&self) -> bool {
        self.0
            .windows(2)
            .all(|w| w[1].0 == w[0].0 + 1 && w[1].1 >= w[0].1 && w[1].1 - w[0].1 <= 2)
    }
}

/// Align all of `q` to a contiguous part of `r`, minimizing the summed
/// absolute difference. Each query step advances the reference by 0, 1 or 2.
/// Returns the path and the cost divided by `|q|`.
///
/// Ties prefer the diagonal move, then the horizontal one, then the skip;
/// the path ends at the lowest-cost reference index, lowest on ties.
pub fn obe_dtw(q: &[f64], r: &[f64]) -> Result<(WarpingPath, f64)> {
    if q.len() < 2 || r.len() < 2 {
        return Err(Error::Invalid(format!(
            "DTW needs at least 2 samples per sequence, got {} and {}",
            q.len(),
            r.len()
        )));
    }
    let (n, m) = (q.len(), r.len());
    let mut back = vec![0u8; n * m];
    let mut prev: Vec<f64> = r.iter().map(|&rj| (q[0] - rj).abs()).collect();
    let mut cur = vec![f64::INFINITY; m];
    for i in 1..n {
        for j in 0..m {
            let mut best = f64::INFINITY;
            let mut mv = 0u8;
            for (code, dj) in [(1u8, 1usize), (2, 0), (3, 2)] {
                if j >= dj && prev[j - dj] < best {
                    best = prev[j - dj];
                    mv = code;
                }
            }
            cur[j] = best + (q[i] - r[j]).abs();
            back[i * m + j] = mv;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (mut j, total) =
        prev.iter().enumerate().fold(
            (0, f64::INFINITY),
            |(bj, bv), (j, &v)| {
                if v < bv {
                    (j, v)
                } else {
                    (bj, bv)
                }
            },
        );
    let mut path = Vec::with_capacity(n);
    for i in (0..n).rev() {
        path.push((i, j));
        if i > 0 {
            j -= match back[i * m + j] {
                1 => 1,
                2 => 0,
                3 => 2,
                _ => unreachable!("unreachable cell on optimal path"),
            };
        }
    }
    path.reverse();
    Ok((WarpingPath(path), total / n as f64))
}

/// Cut horizontal parts out of a path: every run of at least `max_flat`
/// consecutive pairs with the same `j` is removed, and the remaining
/// maximal stretches are returned.
pub fn split_warping_path(path: &WarpingPath, max_flat: usize) -> Vec<WarpingPath> {
    let pairs = &path.0;
    let mut keep = vec![true; pairs.len()];
    let mut s = 0;
    while s < pairs.len() {
        let mut e = s + 1;
        while e < pairs.len() && pairs[e].1 == pairs[s].1 {
            e += 1;
        }
        if e - s >= max_flat.max(1) {
            keep[s..e].fill(false);
        }
        s = e;
    }
    let mut out = Vec::new();
    let mut run = Vec::new();
    for (p, k) in pairs.iter().zip(keep) {
        if k {
            run.push(*p);
        } else if !run.is_empty() {
            out.push(WarpingPath(std::mem::take(&mut run)));
        }
    }
    if !run.is_empty() {
        out.push(WarpingPath(run));
    }
    out
}

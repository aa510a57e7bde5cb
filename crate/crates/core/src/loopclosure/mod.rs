//! Magnetic loop-closure detection and validation on a filtered trajectory.

mod dtw;
mod msp;
mod thin;
mod validate;

pub use dtw::{obe_dtw, split_warping_path, WarpingPath};
pub use msp::{
    find_msps, keep_maximal, link_indices, maximal_segment_pairs, MspParams, SegmentPair,
};
pub use thin::thin_to_steps;
pub use validate::{
    closure_metrics, path_length_between, validate_closure, ClosureMetrics, RejectReason,
    ValidationParams,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::Point;
use crate::sensors::{interpolate_position, MagSample};

/// A dense correspondence between two magnetic sample times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagLoopClosure {
    pub time_a: f64,
    pub time_b: f64,
    pub pos_a: Point,
    pub pos_b: Point,
}

/// Two step epochs asserted to be at the same place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StepLoopClosure {
    pub epoch_a: usize,
    pub epoch_b: usize,
}

impl StepLoopClosure {
    pub fn new(epoch_a: usize, epoch_b: usize) -> Option<Self> {
        (epoch_a < epoch_b).then_some(Self { epoch_a, epoch_b })
    }
}

/// One sub-matching with its verdict.
#[derive(Debug, Clone)]
pub struct SubMatching {
    pub msp: SegmentPair,
    pub closures: Vec<MagLoopClosure>,
    pub verdict: std::result::Result<ClosureMetrics, RejectReason>,
    pub steps: Vec<StepLoopClosure>,
}

#[derive(Debug, Clone, Default)]
pub struct LoopClosureReport {
    pub msps: Vec<SegmentPair>,
    pub submatchings: Vec<SubMatching>,
    /// Step closures from accepted sub-matchings, sorted and unique.
    pub accepted: Vec<StepLoopClosure>,
    /// Step closures from rejected sub-matchings that no accepted one
    /// produced.
    pub rejected: Vec<(StepLoopClosure, RejectReason)>,
    /// Step closures from every sub-matching, before validation.
    pub unvalidated: Vec<StepLoopClosure>,
}

/// Magnitudes linearly interpolated at `hz` over `[t0, t1]`, clipped to the
/// span covered by `mags`.
pub fn resample_magnitude(mags: &[MagSample], t0: f64, t1: f64, hz: f64) -> Vec<(f64, f64)> {
    let (Some(first), Some(last)) = (mags.first(), mags.last()) else {
        return Vec::new();
    };
    let (t0, t1) = (t0.max(first.t), t1.min(last.t));
    if t1 < t0 {
        return Vec::new();
    }
    let n = ((t1 - t0) * hz + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| {
            let t = t0 + k as f64 / hz;
            let hi = mags.partition_point(|m| m.t <= t);
            let v = if hi == 0 {
                first.magnitude()
            } else if hi == mags.len() {
                last.magnitude()
            } else {
                let (a, b) = (&mags[hi - 1], &mags[hi]);
                let f = (t - a.t) / (b.t - a.t);
                a.magnitude() + (b.magnitude() - a.magnitude()) * f
            };
            (t, v)
        })
        .collect()
}

fn match_msp(
    msp: SegmentPair,
    positions: &[Point],
    times: &[f64],
    mags: &[MagSample],
    params: &ValidationParams,
) -> Result<Vec<SubMatching>> {
    let (blo, bhi) = msp.b_range();
    let sa = resample_magnitude(
        mags,
        times[msp.a_start],
        times[msp.a_end],
        params.resample_hz,
    );
    let mut sb = resample_magnitude(mags, times[blo], times[bhi], params.resample_hz);
    if msp.decreasing() {
        sb.reverse();
    }
    if sa.len() < 2 || sb.len() < 2 {
        return Ok(Vec::new());
    }
    let a_is_query = sa.len() <= sb.len();
    let (q, r) = if a_is_query { (&sa, &sb) } else { (&sb, &sa) };
    let qv: Vec<f64> = q.iter().map(|s| s.1).collect();
    let rv: Vec<f64> = r.iter().map(|s| s.1).collect();
    let (path, _) = obe_dtw(&qv, &rv)?;

    let mut out = Vec::new();
    for sub in split_warping_path(&path, params.max_flat) {
        let closures = sub
            .0
            .iter()
            .map(|&(i, j)| {
                let (ta, tb) = if a_is_query {
                    (q[i].0, r[j].0)
                } else {
                    (r[j].0, q[i].0)
                };
                Ok(MagLoopClosure {
                    time_a: ta,
                    time_b: tb,
                    pos_a: interpolate_position(positions, times, ta)?,
                    pos_b: interpolate_position(positions, times, tb)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let verdict = validate_closure(&closures, positions, times, params)?;
        let steps = thin_to_steps(&closures, times);
        out.push(SubMatching {
            msp,
            closures,
            verdict,
            steps,
        });
    }
    Ok(out)
}

/// Full detection chain on a filtered trajectory: segment pairs, magnetic
/// matching, splitting, validation and thinning to step epochs.
pub fn detect_loop_closures(
    positions: &[Point],
    times: &[f64],
    mags: &[MagSample],
    params: &ValidationParams,
) -> Result<LoopClosureReport> {
    params.validate()?;
    if positions.len() < 2 {
        return Ok(LoopClosureReport::default());
    }
    let msp_params = MspParams {
        radius: params.msp_radius,
        guard: params.msp_guard,
    };
    let msps = find_msps(positions, &msp_params);
    let per_msp: Vec<Vec<SubMatching>> = msps
        .par_iter()
        .map(|&m| match_msp(m, positions, times, mags, params))
        .collect::<Result<_>>()?;
    let submatchings: Vec<SubMatching> = per_msp.into_iter().flatten().collect();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut unvalidated = Vec::new();
    for s in &submatchings {
        unvalidated.extend_from_slice(&s.steps);
        match s.verdict {
            Ok(_) => accepted.extend_from_slice(&s.steps),
            Err(why) => rejected.extend(s.steps.iter().map(|&c| (c, why))),
        }
    }
    accepted.sort_unstable();
    accepted.dedup();
    unvalidated.sort_unstable();
    unvalidated.dedup();
    rejected.sort_unstable();
    rejected.dedup_by_key(|r| r.0);
    rejected.retain(|r| accepted.binary_search(&r.0).is_err());
    Ok(LoopClosureReport {
        msps,
        submatchings,
        accepted,
        rejected,
        unvalidated,
    })
}

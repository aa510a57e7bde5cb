//! Spatial validation of magnetic sub-matchings.

use std::fmt;

use crate::error::Result;
use crate::geometry::Point;
use crate::sensors::interpolate_position;

use super::MagLoopClosure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationParams {
    /// The longer matched side must exceed this (metres).
    pub min_length: f64,
    /// Longer over shorter side length must stay below this.
    pub max_length_ratio: f64,
    pub max_mean_dist: f64,
    /// Bound on the population variance of matched-point distances (m²).
    pub max_dist_var: f64,
    pub msp_radius: f64,
    pub msp_guard: usize,
    /// Runs of this many pairs on one reference sample count as horizontal.
    pub max_flat: usize,
    /// Magnitude resampling rate before matching (Hz).
    pub resample_hz: f64,
}

impl Default for ValidationParams {
    fn default() -> Self {
        Self {
            min_length: 2.5,
            max_length_ratio: 2.0,
            max_mean_dist: 3.0,
            max_dist_var: 1.0,
            msp_radius: 3.0,
            msp_guard: 15,
            max_flat: 3,
            resample_hz: 10.0,
        }
    }
}

impl ValidationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.min_length,
            self.max_length_ratio,
            self.max_mean_dist,
            self.max_dist_var,
            self.msp_radius,
            self.resample_hz,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_flat == 0 {
            return Err(crate::error::Error::Invalid(
                "loop-closure validation parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MinLength,
    Ratio,
    MeanDist,
    DistVar,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::MinLength => "min_length",
            RejectReason::Ratio => "ratio",
            RejectReason::MeanDist => "mean_dist",
            RejectReason::DistVar => "dist_var",
        })
    }
}

/// Quantities the validation criteria are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureMetrics {
    pub length_a: f64,
    pub length_b: f64,
    pub mean_dist: f64,
    pub dist_var: f64,
}

impl ClosureMetrics {
    pub fn check(&self, params: &ValidationParams) -> std::result::Result<(), RejectReason> {
        let long = self.length_a.max(self.length_b);
        let short = self.length_a.min(self.length_b);
        if !(long > params.min_length) {
            return Err(RejectReason::MinLength);
        }
        if !(long / short < params.max_length_ratio) {
            return Err(RejectReason::Ratio);
        }
        if !(self.mean_dist <= params.max_mean_dist) {
            return Err(RejectReason::MeanDist);
        }
        if !(self.dist_var <= params.max_dist_var) {
            return Err(RejectReason::DistVar);
        }
        Ok(())
    }
}

/// Length of the polyline `positions` (timed by `times`) between `t0` and
/// `t1`, with interpolated end points.
pub fn path_length_between(positions: &[Point], times: &[f64], t0: f64, t1: f64) -> Result<f64> {
    let (t0, t1) = (t0.min(t1), t0.max(t1));
    let start = interpolate_position(positions, times, t0)?;
    let end = interpolate_position(positions, times, t1)?;
    let mut len = 0.0;
    let mut last = start;
    for (p, &t) in positions.iter().zip(times) {
        if t > t0 && t < t1 {
            len += (p - last).norm();
            last = *p;
        }
    }
    Ok(len + (end - last).norm())
}

/// Metrics of one sub-matching measured on the trajectory.
pub fn closure_metrics(
    sub: &[MagLoopClosure],
    positions: &[Point],
    times: &[f64],
) -> Result<ClosureMetrics> {
    let span = |f: fn(&MagLoopClosure) -> f64| {
        sub.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            })
    };
    let (a0, a1) = span(|c| c.time_a);
    let (b0, b1) = span(|c| c.time_b);
    let length_a = path_length_between(positions, times, a0, a1)?;
    let length_b = path_length_between(positions, times, b0, b1)?;
    let d: Vec<f64> = sub.iter().map(|c| (c.pos_a - c.pos_b).norm()).collect();
    let n = d.len().max(1) as f64;
    let mean_dist = d.iter().sum::<f64>() / n;
    let dist_var = d.iter().map(|x| (x - mean_dist).powi(2)).sum::<f64>() / n;
    Ok(ClosureMetrics {
        length_a,
        length_b,
        mean_dist,
        dist_var,
    })
}

/// Accept or reject one sub-matching.
pub fn validate_closure(
    sub: &[MagLoopClosure],
    positions: &[Point],
    times: &[f64],
    params: &ValidationParams,
) -> Result<std::result::Result<ClosureMetrics, RejectReason>> {
    let m = closure_metrics(sub, positions, times)?;
    Ok(m.check(params).map(|()| m))
}

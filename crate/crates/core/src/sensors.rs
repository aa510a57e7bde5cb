//! Survey log streams (steps, magnetometer, WiFi) and dead reckoning.

use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::formats::{fmt6, parse_f64, records};
use crate::geometry::{wrap_angle, Point, Pose2D, RoomId};

/// Nominal step length assumed by the filters, in metres.
pub const DEFAULT_STEP_LENGTH: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    pub t: f64,
    pub length: f64,
    /// Heading change during this step, radians.
    pub dtheta: f64,
}

/// Independent Gaussian errors on step length and heading change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNoiseModel {
    pub sigma_l: f64,
    pub sigma_dtheta: f64,
}

impl StepNoiseModel {
    /// Length noise proportional to the step length: `sigma_l = lambda * l`.
    pub fn proportional(lambda: f64, step_length: f64, sigma_dtheta: f64) -> Self {
        Self {
            sigma_l: lambda * step_length,
            sigma_dtheta,
        }
    }

    pub fn zero() -> Self {
        Self {
            sigma_l: 0.0,
            sigma_dtheta: 0.0,
        }
    }
}

impl Default for StepNoiseModel {
    fn default() -> Self {
        Self::proportional(0.5, DEFAULT_STEP_LENGTH, 0.5f64.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagSample {
    pub t: f64,
    pub b: [f64; 3],
}

impl MagSample {
    pub fn magnitude(&self) -> f64 {
        let [x, y, z] = self.b;
        (x * x + y * y + z * z).sqrt()
    }
}

/// Opaque access-point identifier (BSSID, name, ...). Must not contain
/// commas or whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApId(pub String);

impl ApId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl std::fmt::Display for ApId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WifiObservation {
    pub t: f64,
    pub ap: ApId,
    pub rssi: f64,
}

pub const RSSI_MIN: f64 = -120.0;
pub const RSSI_MAX: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartHint {
    Room(RoomId),
    Pose(Pose2D),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurveyLog {
    pub steps: Vec<StepEvent>,
    pub mags: Vec<MagSample>,
    pub wifi: Vec<WifiObservation>,
    pub start: Option<StartHint>,
}

impl SurveyLog {
    /// Parse the line-oriented log format. Step timestamps must be strictly
    /// increasing; the other streams are sorted by time.
    pub fn parse(text: &str) -> Result<Self> {
        let mut log = SurveyLog::default();
        let mut last_step: Option<(usize, f64)> = None;
        for (line, f) in records(text) {
            let want = |n: usize| {
                if f.len() == n {
                    Ok(())
                } else {
                    Err(parse_err(
                        line,
                        format!("'{}' expects {} fields", f[0], n - 1),
                    ))
                }
            };
            match f[0] {
                "step" => {
                    want(4)?;
                    let t = parse_f64(line, f[1])?;
                    let length = parse_f64(line, f[2])?;
                    let dtheta = parse_f64(line, f[3])?;
                    if length <= 0.0 {
                        return Err(parse_err(line, "step length must be positive"));
                    }
                    if let Some((prev_line, prev)) = last_step {
                        if t <= prev {
                            return Err(parse_err(
                                line,
                                format!("step time {t} not after {prev} (line {prev_line})"),
                            ));
                        }
                    }
                    last_step = Some((line, t));
                    log.steps.push(StepEvent { t, length, dtheta });
                }
                "mag" => {
                    want(5)?;
                    log.mags.push(MagSample {
                        t: parse_f64(line, f[1])?,
                        b: [
                            parse_f64(line, f[2])?,
                            parse_f64(line, f[3])?,
                            parse_f64(line, f[4])?,
                        ],
                    });
                }
                "wifi" => {
                    want(4)?;
                    let rssi = parse_f64(line, f[3])?;
                    if !(RSSI_MIN..=RSSI_MAX).contains(&rssi) {
                        return Err(parse_err(line, format!("rssi {rssi} outside [-120, 0]")));
                    }
                    log.wifi.push(WifiObservation {
                        t: parse_f64(line, f[1])?,
                        ap: ApId::new(f[2]),
                        rssi,
                    });
                }
                "start" => {
                    log.start =
                        Some(match f.len() {
                            2 => StartHint::Room(RoomId(f[1].parse().map_err(|_| {
                                parse_err(line, format!("bad start room '{}'", f[1]))
                            })?)),
                            4 => StartHint::Pose(Pose2D::new(
                                parse_f64(line, f[1])?,
                                parse_f64(line, f[2])?,
                                parse_f64(line, f[3])?,
                            )),
                            _ => return Err(parse_err(line, "start expects room id or x,y,theta")),
                        });
                }
                other => return Err(parse_err(line, format!("unknown record tag '{other}'"))),
            }
        }
        log.mags.sort_by(|a, b| a.t.total_cmp(&b.t));
        log.wifi.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(log)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.start {
            Some(StartHint::Room(r)) => {
                let _ = writeln!(out, "start,{r}");
            }
            Some(StartHint::Pose(p)) => {
                let _ = writeln!(out, "start,{},{},{}", fmt6(p.x), fmt6(p.y), fmt6(p.theta));
            }
            None => {}
        }
        for s in &self.steps {
            let _ = writeln!(
                out,
                "step,{},{},{}",
                fmt6(s.t),
                fmt6(s.length),
                fmt6(s.dtheta)
            );
        }
        for m in &self.mags {
            let _ = writeln!(
                out,
                "mag,{},{},{},{}",
                fmt6(m.t),
                fmt6(m.b[0]),
                fmt6(m.b[1]),
                fmt6(m.b[2])
            );
        }
        for w in &self.wifi {
            let _ = writeln!(out, "wifi,{},{},{}", fmt6(w.t), w.ap, fmt6(w.rssi));
        }
        out
    }

    pub fn start_hint(&self) -> Result<StartHint> {
        self.start.ok_or(Error::Missing("start"))
    }
}

/// Epoch timestamps for a step stream: epoch 0 precedes the first step by
/// one step period, epoch `i` is the completion time of step `i - 1`.
pub fn epoch_times(steps: &[StepEvent]) -> Vec<f64> {
    let Some(first) = steps.first() else {
        return vec![0.0];
    };
    let lead = match steps.get(1) {
        Some(second) => second.t - first.t,
        None => first.t.max(0.0),
    };
    std::iter::once(first.t - lead)
        .chain(steps.iter().map(|s| s.t))
        .collect()
}

/// Poses at every epoch; `poses.len() == times.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdrTrajectory {
    pub poses: Vec<Pose2D>,
    pub times: Vec<f64>,
}

impl PdrTrajectory {
    pub fn positions(&self) -> Vec<Point> {
        self.poses.iter().map(Pose2D::position).collect()
    }

    pub fn interpolate(&self, t: f64) -> Result<Point> {
        interpolate_position(&self.positions(), &self.times, t)
    }
}

/// Turn-then-step integration of the step stream.
pub fn dead_reckon(steps: &[StepEvent], start: Pose2D) -> PdrTrajectory {
    let mut poses = Vec::with_capacity(steps.len() + 1);
    poses.push(start);
    let (mut x, mut y, mut theta) = (start.x, start.y, start.theta);
    for s in steps {
        theta += s.dtheta;
        x += s.length * theta.cos();
        y += s.length * theta.sin();
        poses.push(Pose2D {
            x,
            y,
            theta: wrap_angle(theta),
        });
    }
    PdrTrajectory {
        poses,
        times: epoch_times(steps),
    }
}

/// Linear interpolation of an epoch-sampled position sequence.
pub fn interpolate_position(positions: &[Point], times: &[f64], t: f64) -> Result<Point> {
    debug_assert_eq!(positions.len(), times.len());
    let (Some(&start), Some(&end)) = (times.first(), times.last()) else {
        return Err(Error::Invalid("empty trajectory".into()));
    };
    if !(start..=end).contains(&t) {
        return Err(Error::OutOfRange { t, start, end });
    }
    // first index with time > t
    let hi = times.partition_point(|&x| x <= t);
    if hi == 0 {
        return Ok(positions[0]);
    }
    let lo = hi - 1;
    if hi == times.len() || times[lo] == t {
        return Ok(positions[lo]);
    }
    let f = (t - times[lo]) / (times[hi] - times[lo]);
    Ok(positions[lo] + (positions[hi] - positions[lo]) * f)
}

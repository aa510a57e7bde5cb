//! Line-oriented text formats shared by every module: comma-separated
//! records, `#` comments, fixed six-decimal numbers.

use std::fmt::Write as _;

use crate::error::{parse_err, Result};
use crate::geometry::{Pose2D, RoomId};
use crate::loopclosure::{RejectReason, StepLoopClosure};

/// Non-empty, non-comment lines split on commas, with 1-based line numbers.
pub fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}

pub fn parse_f64(line: usize, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(line, format!("bad number '{s}'"))),
    }
}

pub fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(line, format!("bad index '{s}'")))
}

/// Fixed six-decimal formatting with negative zero normalized.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn expect_len(line: usize, f: &[&str], n: usize) -> Result<()> {
    if f.len() == n {
        Ok(())
    } else {
        Err(parse_err(
            line,
            format!("'{}' expects {} fields, got {}", f[0], n - 1, f.len() - 1),
        ))
    }
}

/// A timed pose sequence as stored in trajectory files.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrajectory {
    pub poses: Vec<Pose2D>,
    pub times: Vec<f64>,
}

pub fn write_trajectory(poses: &[Pose2D], times: &[f64]) -> String {
    let mut out = String::new();
    for (i, (p, t)) in poses.iter().zip(times).enumerate() {
        let _ = writeln!(
            out,
            "pose,{i},{},{},{},{}",
            fmt6(*t),
            fmt6(p.x),
            fmt6(p.y),
            fmt6(p.theta)
        );
    }
    out
}

/// Reads `pose,...` lines; `cloud,...` lines are skipped. Epochs must be
/// contiguous from 0.
pub fn parse_trajectory(text: &str) -> Result<TimedTrajectory> {
    let mut traj = TimedTrajectory {
        poses: Vec::new(),
        times: Vec::new(),
    };
    for (line, f) in records(text) {
        match f[0] {
            "pose" => {
                expect_len(line, &f, 6)?;
                let epoch = parse_usize(line, f[1])?;
                if epoch != traj.poses.len() {
                    return Err(parse_err(
                        line,
                        format!("expected epoch {}, got {epoch}", traj.poses.len()),
                    ));
                }
                traj.times.push(parse_f64(line, f[2])?);
                traj.poses.push(Pose2D::new(
                    parse_f64(line, f[3])?,
                    parse_f64(line, f[4])?,
                    parse_f64(line, f[5])?,
                ));
            }
            "cloud" => {}
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    Ok(traj)
}

pub fn write_cloud(epoch: usize, particles: &[(Pose2D, f64)]) -> String {
    let mut out = String::new();
    for (p, w) in particles {
        let _ = writeln!(
            out,
            "cloud,{epoch},{},{},{},{}",
            fmt6(p.x),
            fmt6(p.y),
            fmt6(p.theta),
            fmt6(*w)
        );
    }
    out
}

pub fn write_straight(flags: &[bool]) -> String {
    let mut out = String::new();
    for (i, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
        let _ = writeln!(out, "straight,{i}");
    }
    out
}

/// Reads `straight,<step>` lines into a flag vector of length `n_steps`.
pub fn parse_straight(text: &str, n_steps: usize) -> Result<Vec<bool>> {
    let mut flags = vec![false; n_steps];
    for (line, f) in records(text) {
        if f[0] != "straight" {
            return Err(parse_err(line, format!("unknown record '{}'", f[0])));
        }
        expect_len(line, &f, 2)?;
        let i = parse_usize(line, f[1])?;
        *flags
            .get_mut(i)
            .ok_or_else(|| parse_err(line, format!("step {i} out of range")))? = true;
    }
    Ok(flags)
}

pub fn write_closures(
    accepted: &[StepLoopClosure],
    rejected: &[(StepLoopClosure, RejectReason)],
) -> String {
    let mut out = String::new();
    for c in accepted {
        let _ = writeln!(out, "lc,{},{}", c.epoch_a, c.epoch_b);
    }
    for (c, why) in rejected {
        let _ = writeln!(out, "lc_rej,{},{},{}", c.epoch_a, c.epoch_b, why);
    }
    out
}

/// Reads `lc` lines; `lc_rej` lines are ignored.
pub fn parse_closures(text: &str) -> Result<Vec<StepLoopClosure>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        match f[0] {
            "lc" => {
                expect_len(line, &f, 3)?;
                let a = parse_usize(line, f[1])?;
                let b = parse_usize(line, f[2])?;
                out.push(
                    StepLoopClosure::new(a, b)
                        .ok_or_else(|| parse_err(line, "closure needs epoch_a < epoch_b"))?,
                );
            }
            "lc_rej" => {}
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    Ok(out)
}

/// `room,<epoch>,<id>` per epoch, `-` for no room.
pub fn write_rooms(rooms: &[Option<RoomId>]) -> String {
    let mut out = String::new();
    for (i, r) in rooms.iter().enumerate() {
        let _ = writeln!(out, "room,{i},{}", fmt_room(*r));
    }
    out
}

pub fn parse_rooms(text: &str) -> Result<Vec<Option<RoomId>>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        if f[0] != "room" {
            return Err(parse_err(line, format!("unknown record '{}'", f[0])));
        }
        expect_len(line, &f, 3)?;
        if parse_usize(line, f[1])? != out.len() {
            return Err(parse_err(line, format!("expected epoch {}", out.len())));
        }
        out.push(parse_room(line, f[2])?);
    }
    Ok(out)
}

pub fn fmt_room(r: Option<RoomId>) -> String {
    r.map_or_else(|| "-".to_string(), |r| r.to_string())
}

pub fn parse_room(line: usize, s: &str) -> Result<Option<RoomId>> {
    if s == "-" {
        return Ok(None);
    }
    s.parse()
        .map(|v| Some(RoomId(v)))
        .map_err(|_| parse_err(line, format!("bad room id '{s}'")))
}

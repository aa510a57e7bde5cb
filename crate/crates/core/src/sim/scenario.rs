//! Scenario descriptions: walk script, sensor settings, radio and field.

use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::formats::{fmt6, parse_f64, parse_usize, records};
use crate::geometry::{Floorplan, Point};
use crate::sensors::{ApId, StepNoiseModel};

use super::field::{Anomaly, MagFieldModel};
use super::radio::{AccessPoint, RadioModel};
use super::walk::WalkScript;
use super::{door_x, FLOOR_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    /// The log carries the true start pose.
    Pose,
    /// The log carries only the start room.
    Room,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub script: WalkScript,
    pub noise: StepNoiseModel,
    pub gyro_bias_deg_per_min: f64,
    pub mag_rate: f64,
    pub mag_sigma: f64,
    pub background: f64,
    /// Explicit anomalies; when empty a random field is drawn.
    pub anomalies: Vec<Anomaly>,
    pub field_area_per_anomaly: f64,
    pub field_seed: u64,
    pub radio: RadioModel,
    pub wifi_period: f64,
    pub start: StartMode,
}

fn default_radio() -> RadioModel {
    let aps = [
        (8.0, 5.0),
        (25.0, 5.0),
        (42.0, 5.0),
        (8.0, 25.0),
        (25.0, 25.0),
        (42.0, 25.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(x, y))| AccessPoint {
        id: ApId::new(format!("ap{i}")),
        position: Point::new(x, y),
        p0: -40.0,
        n: 2.5,
    })
    .collect();
    RadioModel {
        aps,
        shadow_sigma: 2.5,
    }
}

impl Scenario {
    /// Default sensors and radio for a waypoint list.
    pub fn new(waypoints: Vec<Point>) -> Self {
        Self {
            script: WalkScript::new(waypoints),
            noise: StepNoiseModel {
                sigma_l: 0.05,
                sigma_dtheta: 0.5f64.to_radians(),
            },
            gyro_bias_deg_per_min: 3.0,
            mag_rate: 50.0,
            mag_sigma: 0.15,
            background: 45.0,
            anomalies: Vec::new(),
            field_area_per_anomaly: 4.0,
            field_seed: 7,
            radio: default_radio(),
            wifi_period: 2.0,
            start: StartMode::Pose,
        }
    }

    pub fn field(&self, fp: &Floorplan) -> MagFieldModel {
        if self.anomalies.is_empty() {
            MagFieldModel::random(&fp.bounds, self.field_area_per_anomaly, self.field_seed)
        } else {
            MagFieldModel {
                background: self.background,
                anomalies: self.anomalies.clone(),
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::new(Vec::new());
        let mut radio_explicit = false;
        for (line, f) in records(text) {
            let num = |k: usize| -> Result<f64> {
                f.get(k)
                    .ok_or_else(|| parse_err(line, format!("'{}' is missing field {k}", f[0])))
                    .and_then(|s| parse_f64(line, s))
            };
            let arity = |n: usize| {
                if f.len() == n + 1 {
                    Ok(())
                } else {
                    Err(parse_err(line, format!("'{}' expects {n} fields", f[0])))
                }
            };
            match f[0] {
                "waypoint" => {
                    arity(2)?;
                    sc.script.waypoints.push(Point::new(num(1)?, num(2)?));
                }
                "dwell" => {
                    arity(1)?;
                    let w = sc
                        .script
                        .waypoints
                        .len()
                        .checked_sub(1)
                        .ok_or_else(|| parse_err(line, "dwell before any waypoint"))?;
                    sc.script.dwells.push((w, num(1)?));
                }
                "repeat" => {
                    arity(2)?;
                    let (i, j) = (parse_usize(line, f[1])?, parse_usize(line, f[2])?);
                    sc.script
                        .repeat(i, j)
                        .map_err(|e| parse_err(line, e.to_string()))?;
                }
                "speed" => {
                    arity(1)?;
                    sc.script.speed = num(1)?;
                }
                "step_length" => {
                    arity(1)?;
                    sc.script.step_length = num(1)?;
                }
                "noise" => {
                    arity(2)?;
                    sc.noise = StepNoiseModel {
                        sigma_l: num(1)?,
                        sigma_dtheta: num(2)?.to_radians(),
                    };
                }
                "gyro_bias" => {
                    arity(1)?;
                    sc.gyro_bias_deg_per_min = num(1)?;
                }
                "mag" => {
                    arity(2)?;
                    sc.mag_rate = num(1)?;
                    sc.mag_sigma = num(2)?;
                }
                "background" => {
                    arity(1)?;
                    sc.background = num(1)?;
                }
                "field" => {
                    arity(2)?;
                    sc.field_area_per_anomaly = num(1)?;
                    sc.field_seed = parse_usize(line, f[2])? as u64;
                }
                "wifi" => {
                    arity(2)?;
                    sc.wifi_period = num(1)?;
                    sc.radio.shadow_sigma = num(2)?;
                }
                "start" => {
                    arity(1)?;
                    sc.start = match f[1] {
                        "pose" => StartMode::Pose,
                        "room" => StartMode::Room,
                        other => return Err(parse_err(line, format!("bad start mode '{other}'"))),
                    };
                }
                "ap" => {
                    arity(4)?;
                    if !radio_explicit {
                        sc.radio.aps.clear();
                        radio_explicit = true;
                    }
                    let id = ApId::new(format!("ap{}", sc.radio.aps.len()));
                    sc.radio.aps.push(AccessPoint {
                        id,
                        position: Point::new(num(1)?, num(2)?),
                        p0: num(3)?,
                        n: num(4)?,
                    });
                }
                "anomaly" => {
                    arity(4)?;
                    sc.anomalies.push(Anomaly {
                        center: Point::new(num(1)?, num(2)?),
                        strength: num(3)?,
                        decay: num(4)?,
                    });
                }
                other => return Err(parse_err(line, format!("unknown record '{other}'"))),
            }
        }
        if sc.script.waypoints.len() < 2 {
            return Err(Error::Invalid(
                "scenario needs at least two waypoints".into(),
            ));
        }
        if !sc.anomalies.is_empty() {
            MagFieldModel::new(sc.background, sc.anomalies.clone())?;
        }
        sc.radio.validate()?;
        Ok(sc)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let s = &self.script;
        let _ = writeln!(out, "speed,{}", fmt6(s.speed));
        let _ = writeln!(out, "step_length,{}", fmt6(s.step_length));
        let _ = writeln!(
            out,
            "noise,{},{}",
            fmt6(self.noise.sigma_l),
            fmt6(self.noise.sigma_dtheta.to_degrees())
        );
        let _ = writeln!(out, "gyro_bias,{}", fmt6(self.gyro_bias_deg_per_min));
        let _ = writeln!(out, "mag,{},{}", fmt6(self.mag_rate), fmt6(self.mag_sigma));
        let _ = writeln!(out, "background,{}", fmt6(self.background));
        let _ = writeln!(
            out,
            "field,{},{}",
            fmt6(self.field_area_per_anomaly),
            self.field_seed
        );
        let _ = writeln!(
            out,
            "wifi,{},{}",
            fmt6(self.wifi_period),
            fmt6(self.radio.shadow_sigma)
        );
        let mode = match self.start {
            StartMode::Pose => "pose",
            StartMode::Room => "room",
        };
        let _ = writeln!(out, "start,{mode}");
        for ap in &self.radio.aps {
            let _ = writeln!(
                out,
                "ap,{},{},{},{}",
                fmt6(ap.position.x),
                fmt6(ap.position.y),
                fmt6(ap.p0),
                fmt6(ap.n)
            );
        }
        for a in &self.anomalies {
            let _ = writeln!(
                out,
                "anomaly,{},{},{},{}",
                fmt6(a.center.x),
                fmt6(a.center.y),
                fmt6(a.strength),
                fmt6(a.decay)
            );
        }
        for (i, p) in s.waypoints.iter().enumerate() {
            let _ = writeln!(out, "waypoint,{},{}", fmt6(p.x), fmt6(p.y));
            for &(_, secs) in s.dwells.iter().filter(|d| d.0 == i) {
                let _ = writeln!(out, "dwell,{}", fmt6(secs));
            }
        }
        out
    }
}

/// Builds waypoint routes whose doorway and corridor-boundary crossings
/// fall half a step after an epoch, so no epoch sits on a boundary.
#[derive(Debug, Clone)]
pub struct RouteBuilder {
    pts: Vec<Point>,
    arc: f64,
    step: f64,
}

impl RouteBuilder {
    pub fn new(start: Point, step: f64) -> Self {
        Self {
            pts: vec![start],
            arc: 0.0,
            step,
        }
    }

    fn last(&self) -> Point {
        *self.pts.last().expect("route has a start")
    }

    pub fn to(&mut self, p: Point) -> &mut Self {
        self.arc += (p - self.last()).norm();
        self.pts.push(p);
        self
    }

    /// Walk to `via(d)` and on to `cross`, choosing `d` in `[lo, hi]` so that
    /// `cross` is reached at half-step phase.
    pub fn cross_via(
        &mut self,
        via: impl Fn(f64) -> Point,
        lo: f64,
        hi: f64,
        cross: Point,
    ) -> &mut Self {
        let last = self.last();
        let half = self.step / 2.0;
        let phase_err = |d: f64| {
            let v = via(d);
            let arc = self.arc + (v - last).norm() + (cross - v).norm();
            let ph = arc.rem_euclid(self.step);
            (ph - half).abs()
        };
        let n = 2000;
        let best = (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .min_by(|a, b| phase_err(*a).total_cmp(&phase_err(*b)))
            .expect("non-empty scan");
        self.to(via(best)).to(cross)
    }

    /// Enter south room column `k` through its door, walk `depth` metres in
    /// and come back out to the corridor line `y = 11`. The door is crossed
    /// at half-step phase, so a depth of a whole number of steps plus a half
    /// puts the turnaround on a step boundary.
    pub fn visit_south(&mut self, k: usize, depth: f64) -> &mut Self {
        let x = door_x(k);
        self.cross_via(|d| Point::new(x, 10.0 + d), 0.5, 1.6, Point::new(x, 10.0))
            .to(Point::new(x, 10.0 - depth))
            .to(Point::new(x, 10.0))
            .to(Point::new(x, 11.0))
    }

    /// Same for north room column `k`, returning to `y = 19`.
    pub fn visit_north(&mut self, k: usize, depth: f64) -> &mut Self {
        let x = door_x(k);
        self.cross_via(|d| Point::new(x, 20.0 - d), 0.5, 1.5, Point::new(x, 20.0))
            .to(Point::new(x, 20.0 + depth))
            .to(Point::new(x, 20.0))
            .to(Point::new(x, 19.0))
    }

    /// Circle a table of radius `r` centred at `c`, entering from and
    /// leaving to the top of the circle.
    pub fn circle(&mut self, c: Point, r: f64, laps: usize) -> &mut Self {
        let n = 24;
        for k in 0..=n * laps {
            let a = std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / n as f64;
            self.to(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
        }
        self
    }

    pub fn finish(&self) -> Vec<Point> {
        self.pts.clone()
    }
}

pub const BUILTIN_SCENARIOS: &[&str] = &["corridor", "loop", "detour", "tour", "long", "short"];

fn ring_lap(b: &mut RouteBuilder) {
    let p = Point::new;
    b.to(p(49.0, 11.0))
        .to(p(49.0, 19.0))
        .to(p(1.0, 19.0))
        .to(p(1.0, 11.0));
}

/// Scenarios on the default floorplan.
pub fn builtin(name: &str) -> Result<Scenario> {
    let p = Point::new;
    let step = 0.75;
    let waypoints = match name {
        // south corridor and back
        "corridor" => vec![p(3.0, 11.0), p(47.0, 11.0), p(3.0, 11.0)],
        // one and a half laps around the central block
        "loop" => {
            let mut b = RouteBuilder::new(p(1.0, 11.0), step);
            ring_lap(&mut b);
            b.to(p(49.0, 11.0)).to(p(49.0, 19.0));
            b.finish()
        }
        // a lap, two turns around a table in S3, then half a lap more
        "detour" => {
            let mut b = RouteBuilder::new(p(1.0, 11.0), step);
            ring_lap(&mut b);
            let x = door_x(3);
            b.to(p(x, 11.0))
                .to(p(x, 10.0))
                .circle(p(x, 5.0), 2.2, 2)
                .to(p(x, 10.0))
                .to(p(x, 11.0))
                .to(p(49.0, 11.0))
                .to(p(49.0, 19.0))
                .to(p(25.0, 19.0));
            b.finish()
        }
        // thirteen rooms and both corridors, alternate doors per pass
        "tour" => {
            let mut b = RouteBuilder::new(p(1.0, 11.0), step);
            let depth = 4.5 * step;
            for k in [1, 3, 5, 7] {
                b.visit_south(k, depth);
            }
            b.cross_via(|d| p(49.0, 10.0 + d), 0.5, 1.6, p(49.0, 18.0))
                .to(p(49.0, 19.0));
            for k in [6, 4, 2, 0] {
                b.visit_north(k, depth);
            }
            b.cross_via(|d| p(1.0, 20.0 - d), 0.4, 1.6, p(1.0, 18.0))
                .to(p(1.0, 11.0));
            for k in [2, 4, 6] {
                b.visit_south(k, depth);
            }
            b.cross_via(|d| p(49.0, 10.0 + d), 0.5, 1.6, p(49.0, 18.0))
                .to(p(49.0, 19.0));
            for k in [5, 3] {
                b.visit_north(k, depth);
            }
            b.finish()
        }
        // about 950 steps around the ring
        "long" => {
            let mut b = RouteBuilder::new(p(1.0, 11.0), step);
            for _ in 0..6 {
                ring_lap(&mut b);
            }
            b.to(p(41.0, 11.0));
            b.finish()
        }
        "short" => vec![p(3.0, 11.0), p(20.0, 11.0), p(20.0, 11.5), p(3.0, 11.5)],
        other => {
            return Err(Error::Invalid(format!(
                "unknown scenario '{other}' (expected one of {})",
                BUILTIN_SCENARIOS.join(", ")
            )))
        }
    };
    debug_assert!(waypoints.iter().all(|q| q.x <= FLOOR_WIDTH));
    Ok(Scenario::new(waypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{default_floorplan, generate_walk, north_room, south_room};

    #[test]
    fn text_round_trip() {
        let mut sc = builtin("detour").unwrap();
        sc.script.dwells.push((3, 2.5));
        sc.anomalies.push(Anomaly {
            center: Point::new(1.0, 2.0),
            strength: -3.0,
            decay: 1.5,
        });
        let back = Scenario::parse(&sc.to_text()).unwrap();
        assert_eq!(back.to_text(), sc.to_text());
        assert_eq!(back.script.waypoints.len(), sc.script.waypoints.len());
    }

    #[test]
    fn parse_errors() {
        assert!(Scenario::parse("waypoint,0,0\n").is_err());
        assert!(Scenario::parse("waypoint,0,0\nwaypoint,1,x\n").is_err());
        assert!(Scenario::parse("waypoint,0,0\nwaypoint,1,1\nbogus,1\n").is_err());
        let sc = Scenario::parse("waypoint,0,0\nwaypoint,1,1\nwaypoint,2,0\nrepeat,0,1\n").unwrap();
        assert_eq!(sc.script.waypoints.len(), 5);
    }

    #[test]
    fn builtins_walk_cleanly() {
        let fp = default_floorplan();
        for name in BUILTIN_SCENARIOS {
            let sc = builtin(name).unwrap();
            let walk = generate_walk(&fp, &sc.script).unwrap();
            assert!(walk.steps.len() > 20, "{name}");
            for p in walk.positions() {
                assert!(fp.containing_room(&p).is_some(), "{name}: {p:?}");
            }
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn long_walk_length() {
        let walk = generate_walk(&default_floorplan(), &builtin("long").unwrap().script).unwrap();
        assert!(
            (930..=970).contains(&walk.steps.len()),
            "{}",
            walk.steps.len()
        );
    }

    #[test]
    fn tour_epochs_stay_off_boundaries() {
        let fp = default_floorplan();
        let walk = generate_walk(&fp, &builtin("tour").unwrap().script).unwrap();
        let mut visited = std::collections::BTreeSet::new();
        for p in walk.positions() {
            let r = fp.containing_room(&p).unwrap();
            visited.insert(r);
            // at least a third of a step from every room boundary crossing
            let room = fp.room(r).unwrap();
            let d = room
                .edges()
                .map(|e| e.distance_to(&p))
                .fold(f64::INFINITY, f64::min);
            assert!(d > 0.3, "{p:?} is {d} from the edge of {r}");
        }
        assert_eq!(visited.len(), 15);
        assert!(visited.contains(&north_room(0)) && !visited.contains(&south_room(0)));
    }
}

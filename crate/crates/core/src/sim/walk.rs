//! Ground-truth walks along waypoint scripts and their corruption into PDR
//! measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Floorplan, Point, Pose2D};
use crate::sensors::{epoch_times, interpolate_position, StepEvent, StepNoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct WalkScript {
    pub waypoints: Vec<Point>,
    /// Nominal walking speed, m/s.
    pub speed: f64,
    pub step_length: f64,
    /// `(waypoint index, seconds)`: stand still on reaching that waypoint.
    pub dwells: Vec<(usize, f64)>,
}

impl WalkScript {
    pub fn new(waypoints: Vec<Point>) -> Self {
        Self {
            waypoints,
            speed: 1.2,
            step_length: 0.75,
            dwells: Vec::new(),
        }
    }

    /// Append another pass over waypoints `i..=j`.
    pub fn repeat(&mut self, i: usize, j: usize) -> Result<()> {
        if i > j || j >= self.waypoints.len() {
            return Err(Error::Invalid(format!(
                "repeat range {i}..{j} out of bounds"
            )));
        }
        let again = self.waypoints[i..=j].to_vec();
        self.waypoints.extend(again);
        Ok(())
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }
}

/// A simulated walk: true pose and time per step epoch, the exact step
/// events, and a time-indexed track for sampling sensors.
#[derive(Debug, Clone)]
pub struct Walk {
    pub poses: Vec<Pose2D>,
    pub times: Vec<f64>,
    pub steps: Vec<StepEvent>,
    track_t: Vec<f64>,
    track_p: Vec<Point>,
}

impl Walk {
    pub fn positions(&self) -> Vec<Point> {
        self.poses.iter().map(Pose2D::position).collect()
    }

    pub fn duration(&self) -> f64 {
        *self.track_t.last().unwrap_or(&0.0)
    }

    /// True position at time `t`, clamped to the walk's time span.
    pub fn position_at(&self, t: f64) -> Point {
        let t = t.clamp(self.track_t[0], self.duration());
        interpolate_position(&self.track_p, &self.track_t, t).expect("clamped into range")
    }

    /// Uniform time samples `0, 1/rate, ...` up to the end of the walk.
    pub fn sample_times(&self, rate: f64) -> Vec<f64> {
        let n = (self.duration() * rate + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 / rate).collect()
    }
}

/// Walk the waypoint polyline with step endpoints at every multiple of the
/// step length along it. Step headings are the chord directions.
pub fn generate_walk(fp: &Floorplan, script: &WalkScript) -> Result<Walk> {
    let wp = &script.waypoints;
    if wp.len() < 2 {
        return Err(Error::Invalid("a walk needs at least two waypoints".into()));
    }
    if !(script.speed > 0.0 && script.step_length > 0.0) {
        return Err(Error::Invalid(
            "speed and step length must be positive".into(),
        ));
    }
    for (leg, w) in wp.windows(2).enumerate() {
        if fp.segment_crosses_wall(&w[0], &w[1]) {
            return Err(Error::LegCrossesWall { leg });
        }
    }
    let mut arc = vec![0.0];
    for w in wp.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *arc.last().unwrap();
    let l = script.step_length;
    let n = (total / l + 1e-9).floor() as usize;
    if n < 2 {
        return Err(Error::Invalid("walk shorter than two steps".into()));
    }
    let at = |s: f64| -> Point {
        let k = arc.partition_point(|&a| a <= s).clamp(1, wp.len() - 1);
        let (s0, s1) = (arc[k - 1], arc[k]);
        if s1 == s0 {
            return wp[k];
        }
        wp[k - 1] + (wp[k] - wp[k - 1]) * ((s - s0) / (s1 - s0)).min(1.0)
    };
    let pts: Vec<Point> = (0..=n).map(|k| at(k as f64 * l)).collect();
    for (k, w) in pts.windows(2).enumerate() {
        if fp.segment_crosses_wall(&w[0], &w[1]) {
            return Err(Error::Invalid(format!("step {k} cuts through a wall")));
        }
    }

    // extra standing time before step k starts
    let mut pause = vec![0.0; n + 1];
    for &(w, secs) in &script.dwells {
        if w >= wp.len() || secs < 0.0 {
            return Err(Error::Invalid(format!("bad dwell at waypoint {w}")));
        }
        let epoch = (arc[w] / l - 1e-9).ceil().max(0.0) as usize;
        if epoch < 2 {
            return Err(Error::Invalid(
                "dwell must come after the second step".into(),
            ));
        }
        if epoch < n {
            pause[epoch + 1] += secs;
        }
    }

    let period = l / script.speed;
    let mut steps = Vec::with_capacity(n);
    let mut heading = {
        let d = pts[1] - pts[0];
        d.y.atan2(d.x)
    };
    let mut poses = vec![Pose2D::new(pts[0].x, pts[0].y, heading)];
    let mut t = 0.0;
    let mut track_t = vec![0.0];
    let mut track_p = vec![pts[0]];
    for k in 1..=n {
        if pause[k] > 0.0 {
            t += pause[k];
            track_t.push(t);
            track_p.push(pts[k - 1]);
        }
        t += period;
        let d = pts[k] - pts[k - 1];
        let h = d.y.atan2(d.x);
        steps.push(StepEvent {
            t,
            length: d.norm(),
            dtheta: wrap_angle(h - heading),
        });
        heading = h;
        poses.push(Pose2D::new(pts[k].x, pts[k].y, h));
        track_t.push(t);
        track_p.push(pts[k]);
    }
    Ok(Walk {
        times: epoch_times(&steps),
        poses,
        steps,
        track_t,
        track_p,
    })
}

/// Add Gaussian length and heading-change noise plus a heading bias that
/// grows linearly with time (`gyro_bias_deg_per_min`). Lengths are not
/// clamped.
pub fn corrupt_steps(
    steps: &[StepEvent],
    noise: &StepNoiseModel,
    gyro_bias_deg_per_min: f64,
    seed: u64,
) -> Vec<StepEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = gyro_bias_deg_per_min.to_radians() / 60.0;
    let times = epoch_times(steps);
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e_l: f64 = rng.sample(StandardNormal);
            let e_t: f64 = rng.sample(StandardNormal);
            StepEvent {
                t: s.t,
                length: s.length + e_l * noise.sigma_l,
                dtheta: s.dtheta + e_t * noise.sigma_dtheta + rate * (times[i + 1] - times[i]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment;
    use crate::sensors::dead_reckon;
    use approx::assert_abs_diff_eq;

    fn open() -> Floorplan {
        let p = Point::new;
        Floorplan::new(
            vec![Segment::new(p(-100.0, -100.0), p(-99.0, -100.0))],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn straight_leg() {
        let w = generate_walk(
            &open(),
            &WalkScript::new(vec![Point::new(0.0, 0.0), Point::new(7.5, 0.0)]),
        )
        .unwrap();
        assert_eq!(w.steps.len(), 10);
        assert!(w.steps.iter().all(|s| s.dtheta == 0.0));
        assert_abs_diff_eq!(w.poses[10].x, 7.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w.times[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn square_loop_closes() {
        let p = Point::new;
        let script = WalkScript::new(vec![
            p(0.0, 0.0),
            p(6.0, 0.0),
            p(6.0, 6.0),
            p(0.0, 6.0),
            p(0.0, 0.0),
        ]);
        let w = generate_walk(&open(), &script).unwrap();
        let end = w.poses.last().unwrap().position();
        assert!(end.coords.norm() <= 0.75 + 1e-9);
    }

    #[test]
    fn out_and_back_retraces() {
        let p = Point::new;
        let script = WalkScript::new(vec![p(0.0, 0.0), p(15.0, 0.0), p(0.0, 0.0)]);
        let w = generate_walk(&open(), &script).unwrap();
        let n = w.poses.len() - 1;
        for k in 0..=n / 2 {
            let a = w.poses[k].position();
            let b = w.poses[n - k].position();
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn dead_reckoning_reproduces_truth() {
        let p = Point::new;
        let script = WalkScript::new(vec![p(0.0, 0.0), p(10.0, 0.0), p(13.0, 7.0), p(2.0, 9.0)]);
        let w = generate_walk(&open(), &script).unwrap();
        let dr = dead_reckon(&w.steps, w.poses[0]);
        for (a, b) in dr.poses.iter().zip(&w.poses) {
            assert!((a.position() - b.position()).norm() < 1e-9);
        }
    }

    #[test]
    fn leg_through_wall_is_rejected() {
        let p = Point::new;
        let fp = Floorplan::new(vec![Segment::new(p(5.0, -1.0), p(5.0, 1.0))], vec![]).unwrap();
        let err =
            generate_walk(&fp, &WalkScript::new(vec![p(0.0, 0.0), p(10.0, 0.0)])).unwrap_err();
        assert!(matches!(err, Error::LegCrossesWall { leg: 0 }));
    }

    #[test]
    fn dwell_shifts_time_not_position() {
        let p = Point::new;
        let mut script = WalkScript::new(vec![p(0.0, 0.0), p(3.0, 0.0), p(6.0, 0.0)]);
        script.dwells.push((1, 5.0));
        let w = generate_walk(&open(), &script).unwrap();
        let plain = generate_walk(&open(), &WalkScript::new(script.waypoints.clone())).unwrap();
        assert_abs_diff_eq!(w.duration(), plain.duration() + 5.0, epsilon = 1e-9);
        // standing at the 3 m mark during the dwell
        let t4 = w.times[4];
        assert!((w.position_at(t4 + 2.0) - p(3.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = Point::new;
        let w = generate_walk(&open(), &WalkScript::new(vec![p(0.0, 0.0), p(5.0, 5.0)])).unwrap();
        assert_eq!(
            corrupt_steps(&w.steps, &StepNoiseModel::zero(), 0.0, 3),
            w.steps
        );
    }

    #[test]
    fn bias_accumulates() {
        // ten minutes of straight walking at 3 deg/min
        let steps: Vec<StepEvent> = (1..=1000)
            .map(|i| StepEvent {
                t: 0.6 * i as f64,
                length: 0.75,
                dtheta: 0.0,
            })
            .collect();
        let noisy = corrupt_steps(&steps, &StepNoiseModel::zero(), 3.0, 1);
        let dr = dead_reckon(&noisy, Pose2D::new(0.0, 0.0, 0.0));
        let heading = dr.poses.last().unwrap().theta.to_degrees();
        assert_abs_diff_eq!(heading, 30.0, epsilon = 1e-6);
    }

    #[test]
    fn noise_statistics() {
        let n = 100_000;
        let steps: Vec<StepEvent> = (1..=n)
            .map(|i| StepEvent {
                t: 0.6 * i as f64,
                length: 0.75,
                dtheta: 0.0,
            })
            .collect();
        let noise = StepNoiseModel::default();
        let noisy = corrupt_steps(&steps, &noise, 0.0, 9);
        let sd = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let sl = sd(&mut noisy.iter().map(|s| s.length));
        let st = sd(&mut noisy.iter().map(|s| s.dtheta));
        // standard error of a sample sd is about sigma / sqrt(2n)
        let se = |s: f64| 3.0 * s / (2.0 * n as f64).sqrt();
        assert!((sl - 0.375).abs() < se(0.375), "{sl}");
        assert!(
            (st - 0.5f64.to_radians()).abs() < se(0.5f64.to_radians()),
            "{st}"
        );
    }
}

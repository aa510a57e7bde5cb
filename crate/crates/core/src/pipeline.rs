//! The two-pass survey pipeline and trajectory evaluation.

use crate::error::{Error, Result};
use crate::filter::{run_filter, sub_seed, ConstraintSet, FilterConfig, FilterResult, KldConfig};
use crate::geometry::{Floorplan, Point, Pose2D, RoomId};
use crate::loopclosure::{detect_loop_closures, LoopClosureReport, ValidationParams};
use crate::sensors::{interpolate_position, StepNoiseModel, SurveyLog};
use crate::signalmap::SurveyPoint;
use crate::straightline::{detect_straight_steps, StraightLineParams};

/// Minimum number of steps a survey log must contain.
pub const MIN_STEPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub pf1_kld: KldConfig,
    pub pf2_kld: KldConfig,
    pub noise: StepNoiseModel,
    pub init_sigma_xy: f64,
    pub init_sigma_theta: f64,
    pub straight: StraightLineParams,
    pub validation: ValidationParams,
    pub sigma_alpha: f64,
    pub sigma_d: f64,
    pub seed: u64,
    /// When false PF2 reuses the PF1 configuration without extra constraints.
    pub constraints: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let pf1 = FilterConfig::coarse();
        Self {
            pf1_kld: KldConfig::coarse(),
            pf2_kld: KldConfig::fine(),
            noise: pf1.noise,
            init_sigma_xy: pf1.init_sigma_xy,
            init_sigma_theta: pf1.init_sigma_theta,
            straight: StraightLineParams::default(),
            validation: ValidationParams::default(),
            sigma_alpha: 2.5f64.to_radians(),
            sigma_d: 1.0,
            seed: 0,
            constraints: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("bad value for {key}: {value:?}")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pf1_kld.validate()?;
        self.pf2_kld.validate()?;
        self.straight.validate()?;
        self.validation.validate()?;
        let n = &self.noise;
        if !(n.sigma_l >= 0.0 && n.sigma_dtheta >= 0.0) {
            return Err(Error::Invalid("noise sigmas must be non-negative".into()));
        }
        if !(self.init_sigma_xy >= 0.0 && self.init_sigma_theta >= 0.0) {
            return Err(Error::Invalid("initial spread must be non-negative".into()));
        }
        if !(self.sigma_alpha > 0.0 && self.sigma_d > 0.0) {
            return Err(Error::Invalid(
                "sigma_alpha and sigma_d must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Apply one `key=value` override. Angles are given in degrees.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let deg = |v: &str| parse_num::<f64>(key, v).map(f64::to_radians);
        let kld = |cfg: &mut KldConfig, field: &str| -> Result<()> {
            match field {
                "bin_xy" => {
                    let b = parse_num(key, value)?;
                    cfg.bin_x = b;
                    cfg.bin_y = b;
                }
                "bin_x" => cfg.bin_x = parse_num(key, value)?,
                "bin_y" => cfg.bin_y = parse_num(key, value)?,
                "bin_theta_deg" => cfg.bin_theta = deg(value)?,
                "delta" => cfg.delta = parse_num(key, value)?,
                "epsilon" => cfg.epsilon = parse_num(key, value)?,
                "n_min" => cfg.n_min = parse_num(key, value)?,
                _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
            }
            Ok(())
        };
        match key.split_once('.') {
            Some(("pf1", f)) => kld(&mut self.pf1_kld, f)?,
            Some(("pf2", f)) => kld(&mut self.pf2_kld, f)?,
            _ => match key {
                "seed" => self.seed = parse_num(key, value)?,
                "constraints" => self.constraints = parse_num(key, value)?,
                "noise.sigma_l" => self.noise.sigma_l = parse_num(key, value)?,
                "noise.sigma_dtheta_deg" => self.noise.sigma_dtheta = deg(value)?,
                "init.sigma_xy" => self.init_sigma_xy = parse_num(key, value)?,
                "init.sigma_theta_deg" => self.init_sigma_theta = deg(value)?,
                "straight.turn_threshold_deg" => {
                    self.straight.turn_threshold_deg = parse_num(key, value)?
                }
                "straight.min_run" => self.straight.min_run = parse_num(key, value)?,
                "lc.min_length" => self.validation.min_length = parse_num(key, value)?,
                "lc.max_length_ratio" => self.validation.max_length_ratio = parse_num(key, value)?,
                "lc.max_mean_dist" => self.validation.max_mean_dist = parse_num(key, value)?,
                "lc.max_dist_var" => self.validation.max_dist_var = parse_num(key, value)?,
                "lc.msp_radius" => self.validation.msp_radius = parse_num(key, value)?,
                "lc.msp_guard" => self.validation.msp_guard = parse_num(key, value)?,
                "lc.max_flat" => self.validation.max_flat = parse_num(key, value)?,
                "lc.resample_hz" => self.validation.resample_hz = parse_num(key, value)?,
                "sigma_alpha_deg" => self.sigma_alpha = deg(value)?,
                "sigma_d" => self.sigma_d = parse_num(key, value)?,
                _ => return Err(Error::Invalid(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Parse `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn pf1(&self) -> FilterConfig {
        FilterConfig {
            name: "pf1".into(),
            kld: self.pf1_kld,
            noise: self.noise,
            init_sigma_xy: self.init_sigma_xy,
            init_sigma_theta: self.init_sigma_theta,
            keep_clouds: Vec::new(),
        }
    }

    pub fn pf2(&self) -> FilterConfig {
        FilterConfig {
            name: "pf2".into(),
            kld: if self.constraints {
                self.pf2_kld
            } else {
                self.pf1_kld
            },
            ..self.pf1()
        }
    }
}

/// Intermediate results of every stage.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub pf1: FilterResult,
    pub straight: Vec<bool>,
    pub closures: LoopClosureReport,
}

#[derive(Debug, Clone)]
pub struct SurveyOutput {
    pub trajectory: FilterResult,
    pub points: Vec<SurveyPoint>,
    pub diagnostics: Diagnostics,
}

/// PF1 on the raw steps with walls only, then straight-line and loop-closure
/// detection, then PF2 on the raw steps with every constraint.
pub fn run_pfsurvey(log: &SurveyLog, fp: &Floorplan, cfg: &PipelineConfig) -> Result<SurveyOutput> {
    cfg.validate()?;
    if log.steps.len() < MIN_STEPS {
        return Err(Error::Invalid(format!(
            "survey has {} steps, at least {MIN_STEPS} required",
            log.steps.len()
        )));
    }
    let start = log.start_hint()?;
    let pf1 = run_filter(
        &log.steps,
        &start,
        fp,
        &cfg.pf1(),
        &ConstraintSet::walls_only(fp),
        sub_seed(cfg.seed, 11),
    )?;

    let straight = detect_straight_steps(&log.steps, &cfg.straight);
    let pf1_positions = pf1.positions();
    let closures = detect_loop_closures(&pf1_positions, &pf1.times, &log.mags, &cfg.validation)?;

    let constraints = if cfg.constraints {
        ConstraintSet::walls_only(fp)
            .with_straight(straight.clone(), cfg.sigma_alpha)
            .with_closures(closures.accepted.clone(), cfg.sigma_d, pf1_positions)
    } else {
        ConstraintSet::walls_only(fp)
    };
    let pf2 = run_filter(
        &log.steps,
        &start,
        fp,
        &cfg.pf2(),
        &constraints,
        sub_seed(cfg.seed, 12),
    )?;
    let points = survey_points(log, &pf2)?;
    Ok(SurveyOutput {
        trajectory: pf2,
        points,
        diagnostics: Diagnostics {
            pf1,
            straight,
            closures,
        },
    })
}

/// WiFi observations placed on the trajectory by time interpolation.
/// Observations outside the trajectory's time span are dropped. The room is
/// the filter's assignment at the nearest epoch.
pub fn survey_points(log: &SurveyLog, traj: &FilterResult) -> Result<Vec<SurveyPoint>> {
    let positions = traj.positions();
    let times = &traj.times;
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Ok(Vec::new());
    };
    log.wifi
        .iter()
        .filter(|o| (t0..=t1).contains(&o.t))
        .map(|o| {
            let position = interpolate_position(&positions, times, o.t)?;
            Ok(SurveyPoint {
                t: o.t,
                position,
                ap: o.ap.clone(),
                rssi: o.rssi,
                room: traj.rooms[nearest_epoch(times, o.t)],
            })
        })
        .collect()
}

fn nearest_epoch(times: &[f64], t: f64) -> usize {
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

/// Empirical distribution of a set of errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCdf {
    sorted: Vec<f64>,
}

impl ErrorCdf {
    pub fn new(mut errors: Vec<f64>) -> Result<Self> {
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(Error::Invalid("non-finite error value".into()));
        }
        errors.sort_by(f64::total_cmp);
        Ok(Self { sorted: errors })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Nearest-rank quantile, `p` in (0, 1].
    pub fn quantile(&self, p: f64) -> Option<f64> {
        if self.sorted.is_empty() || !(p > 0.0 && p <= 1.0) {
            return None;
        }
        let n = self.sorted.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        Some(self.sorted[rank - 1])
    }

    /// Fraction of errors `<= x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&e| e <= x) as f64 / self.sorted.len() as f64
    }

    /// First-order stochastic dominance: `self`'s CDF is at least `other`'s
    /// everywhere, so errors under `self` are smaller.
    pub fn dominates(&self, other: &ErrorCdf) -> bool {
        self.sorted
            .iter()
            .chain(&other.sorted)
            .all(|&x| self.fraction_below(x) >= other.fraction_below(x))
    }
}

/// Quantiles reported by `summary`.
pub const STANDARD_QUANTILES: [f64; 5] = [0.5, 0.68, 0.9, 0.95, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEval {
    pub errors: Vec<f64>,
    pub cdf: ErrorCdf,
    pub room_accuracy: f64,
}

impl TrajectoryEval {
    pub fn quantiles(&self) -> Vec<(f64, f64)> {
        STANDARD_QUANTILES
            .iter()
            .filter_map(|&p| self.cdf.quantile(p).map(|q| (p, q)))
            .collect()
    }
}

/// Per-epoch position error and the fraction of epochs whose estimated
/// position lies in the same room as the truth.
pub fn evaluate_trajectory(
    est: &[Pose2D],
    truth: &[Pose2D],
    fp: &Floorplan,
) -> Result<TrajectoryEval> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: est.len(),
            right: truth.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    let errors: Vec<f64> = est
        .iter()
        .zip(truth)
        .map(|(a, b)| (a.position() - b.position()).norm())
        .collect();
    let assigned: Vec<Option<RoomId>> = est
        .iter()
        .map(|p| fp.containing_room(&p.position()))
        .collect();
    let room_accuracy = room_accuracy(&assigned, truth, fp)?;
    Ok(TrajectoryEval {
        cdf: ErrorCdf::new(errors.clone())?,
        errors,
        room_accuracy,
    })
}

/// Fraction of epochs whose assigned room equals the room containing the
/// true position.
pub fn room_accuracy(assigned: &[Option<RoomId>], truth: &[Pose2D], fp: &Floorplan) -> Result<f64> {
    if assigned.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: assigned.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    let hits = assigned
        .iter()
        .zip(truth)
        .filter(|(r, t)| **r == fp.containing_room(&t.position()))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Distance from `p` to the nearest point of a polyline.
pub fn distance_to_path(p: &Point, path: &[Point]) -> f64 {
    match path {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => path
            .windows(2)
            .map(|w| crate::geometry::Segment::new(w[0], w[1]).distance_to(p))
            .fold(f64::INFINITY, f64::min),
    }
}

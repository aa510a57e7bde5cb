//! Constraint-weighted particle filter over step events.
//!
//! The same filter serves both passes: the coarse pass weighs particles by
//! walls only, the fine pass adds straight-line and loop-closure factors.

mod kld;
mod tree;

pub use kld::{
    kld_required_particles, kld_resample, kld_resample_indices, upper_normal_quantile, KldConfig,
    ZeroTotalWeight, DEFAULT_DELTA, DEFAULT_EPSILON,
};
pub use tree::{prune_smooth, weighted_mean, AncestorTree, Node};

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Floorplan, Point, Pose2D, RoomId};
use crate::loopclosure::StepLoopClosure;
use crate::sensors::{epoch_times, StartHint, StepEvent, StepNoiseModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
    /// Index of the ancestor in the previous epoch.
    pub parent: Option<u32>,
}

/// Density of a zero-mean folded normal at `x >= 0`.
pub fn folded_normal_density(x: f64, sigma: f64) -> f64 {
    (2.0f64).sqrt() / (sigma * PI.sqrt()) * (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Advance a particle by one step with Gaussian step-length and
/// heading-change errors. The heading turns first, then the particle moves.
pub fn propagate<R: Rng + ?Sized>(
    p: &Particle,
    step: &StepEvent,
    noise: &StepNoiseModel,
    rng: &mut R,
) -> Particle {
    let e_l: f64 = rng.sample::<f64, _>(StandardNormal) * noise.sigma_l;
    let e_theta: f64 = rng.sample::<f64, _>(StandardNormal) * noise.sigma_dtheta;
    Particle {
        pose: advance(&p.pose, step, e_l, e_theta),
        weight: 1.0,
        parent: p.parent,
    }
}

fn advance(pose: &Pose2D, step: &StepEvent, e_l: f64, e_theta: f64) -> Pose2D {
    let theta = pose.theta + step.dtheta + e_theta;
    let l = step.length + e_l;
    Pose2D::new(pose.x + l * theta.cos(), pose.y + l * theta.sin(), theta)
}

/// Constraint classes applied during reweighting.
#[derive(Debug, Clone)]
pub struct ConstraintSet<'a> {
    pub floorplan: &'a Floorplan,
    pub walls: bool,
    /// Per-step straight-line flags; empty disables the constraint.
    pub straight: Vec<bool>,
    pub sigma_alpha: f64,
    pub closures: Vec<StepLoopClosure>,
    pub sigma_d: f64,
    /// Positions used for a closure's counterpart when the particle's own
    /// lineage cannot provide one.
    pub fallback: Vec<Point>,
    by_epoch: BTreeMap<usize, Vec<usize>>,
}

impl<'a> ConstraintSet<'a> {
    /// Wall constraints only.
    pub fn walls_only(floorplan: &'a Floorplan) -> Self {
        Self {
            floorplan,
            walls: true,
            straight: Vec::new(),
            sigma_alpha: 2.5f64.to_radians(),
            closures: Vec::new(),
            sigma_d: 1.0,
            fallback: Vec::new(),
            by_epoch: BTreeMap::new(),
        }
    }

    /// No constraints at all: plain dead reckoning with noise.
    pub fn none(floorplan: &'a Floorplan) -> Self {
        Self {
            walls: false,
            ..Self::walls_only(floorplan)
        }
    }

    pub fn with_straight(mut self, flags: Vec<bool>, sigma_alpha: f64) -> Self {
        self.straight = flags;
        self.sigma_alpha = sigma_alpha;
        self
    }

    pub fn with_closures(
        mut self,
        closures: Vec<StepLoopClosure>,
        sigma_d: f64,
        fallback: Vec<Point>,
    ) -> Self {
        self.by_epoch.clear();
        for c in &closures {
            self.by_epoch.entry(c.epoch_b).or_default().push(c.epoch_a);
        }
        self.closures = closures;
        self.sigma_d = sigma_d;
        self.fallback = fallback;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.straight.is_empty() && !(self.sigma_alpha > 0.0) {
            return Err(Error::Invalid("sigma_alpha must be positive".into()));
        }
        if !self.closures.is_empty() && !(self.sigma_d > 0.0) {
            return Err(Error::Invalid("sigma_d must be positive".into()));
        }
        Ok(())
    }

    fn is_straight(&self, step: usize) -> bool {
        self.straight.get(step).copied().unwrap_or(false)
    }

    /// Earlier epochs tied to `epoch` by a loop closure.
    pub fn closure_targets(&self, epoch: usize) -> &[usize] {
        self.by_epoch.get(&epoch).map_or(&[], Vec::as_slice)
    }
}

/// Importance weight of a freshly propagated particle. `counterpart` maps an
/// earlier epoch to this particle's own ancestor position there, if known.
pub fn reweight(
    prev: &Point,
    new: &Particle,
    step_index: usize,
    constraints: &ConstraintSet<'_>,
    counterpart: impl Fn(usize) -> Option<Point>,
) -> f64 {
    let pos = new.pose.position();
    if constraints.walls && constraints.floorplan.segment_crosses_wall(prev, &pos) {
        return 0.0;
    }
    let mut w = 1.0;
    if constraints.is_straight(step_index) {
        let heading = (pos.y - prev.y).atan2(pos.x - prev.x);
        if let Some(alpha) = constraints
            .floorplan
            .acute_angle_to_best_wall(&pos, heading)
        {
            w *= folded_normal_density(alpha, constraints.sigma_alpha);
        }
    }
    for &a in constraints.closure_targets(step_index + 1) {
        let other = counterpart(a).or_else(|| constraints.fallback.get(a).copied());
        if let Some(other) = other {
            w *= folded_normal_density((pos - other).norm(), constraints.sigma_d);
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub name: String,
    pub kld: KldConfig,
    pub noise: StepNoiseModel,
    /// Spread of the initial cloud around a start pose.
    pub init_sigma_xy: f64,
    pub init_sigma_theta: f64,
    /// Epochs whose weighted particle clouds are kept for diagnostics.
    pub keep_clouds: Vec<usize>,
}

impl FilterConfig {
    pub fn coarse() -> Self {
        Self {
            name: "pf1".into(),
            kld: KldConfig::coarse(),
            noise: StepNoiseModel::default(),
            init_sigma_xy: 0.3,
            init_sigma_theta: 5f64.to_radians(),
            keep_clouds: Vec::new(),
        }
    }

    pub fn fine() -> Self {
        Self {
            name: "pf2".into(),
            kld: KldConfig::fine(),
            ..Self::coarse()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Pruning-smoothed pose per epoch.
    pub poses: Vec<Pose2D>,
    pub times: Vec<f64>,
    /// Room assignment per epoch.
    pub rooms: Vec<Option<RoomId>>,
    /// Lineage of the highest-weight final particle.
    pub map_lineage: Vec<Pose2D>,
    pub particle_counts: Vec<usize>,
    pub survivor_counts: Vec<usize>,
    pub clouds: Vec<(usize, Vec<(Pose2D, f64)>)>,
}

impl FilterResult {
    pub fn positions(&self) -> Vec<Point> {
        self.poses.iter().map(Pose2D::position).collect()
    }
}

fn initial_particles(
    start: &StartHint,
    fp: &Floorplan,
    cfg: &FilterConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Particle>> {
    let n = cfg.kld.n_min;
    let w = 1.0 / n as f64;
    match start {
        StartHint::Pose(p) => Ok((0..n)
            .map(|_| {
                let dx: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.init_sigma_xy;
                let dy: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.init_sigma_xy;
                let dt: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.init_sigma_theta;
                Particle {
                    pose: Pose2D::new(p.x + dx, p.y + dy, p.theta + dt),
                    weight: w,
                    parent: None,
                }
            })
            .collect()),
        StartHint::Room(id) => {
            let room = fp
                .room(*id)
                .ok_or_else(|| Error::Invalid(format!("start room {id} not in floorplan")))?;
            let bb = room.bbox();
            let mut out = Vec::with_capacity(n);
            let mut attempts = 0usize;
            while out.len() < n {
                attempts += 1;
                if attempts > 1000 * n {
                    return Err(Error::Invalid(format!("cannot sample inside room {id}")));
                }
                let q = Point::new(
                    rng.random_range(bb.min.x..=bb.max.x),
                    rng.random_range(bb.min.y..=bb.max.y),
                );
                if room.contains(&q) {
                    let theta = rng.random_range(-PI..PI);
                    out.push(Particle {
                        pose: Pose2D::new(q.x, q.y, theta),
                        weight: w,
                        parent: None,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Tracks, for every live particle, its own ancestor position at each
/// closure target epoch that is still referenced by a later closure.
struct LineageSlots {
    slot_of: Vec<Option<usize>>,
    width: usize,
}

impl LineageSlots {
    fn plan(constraints: &ConstraintSet<'_>, n_epochs: usize) -> Self {
        let mut last_use: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &constraints.closures {
            if c.epoch_b < n_epochs {
                let e = last_use.entry(c.epoch_a).or_insert(c.epoch_b);
                *e = (*e).max(c.epoch_b);
            }
        }
        let mut slot_of = vec![None; n_epochs];
        let mut free: Vec<usize> = Vec::new();
        let mut width = 0;
        let mut busy: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&a, &b) in &last_use {
            // reclaim slots whose last use is before `a`
            let done: Vec<usize> = busy.range(..a).map(|(k, _)| *k).collect();
            for k in done {
                free.extend(busy.remove(&k).unwrap_or_default());
            }
            let slot = free.pop().unwrap_or_else(|| {
                width += 1;
                width - 1
            });
            slot_of[a] = Some(slot);
            busy.entry(b).or_default().push(slot);
        }
        Self { slot_of, width }
    }
}

/// Run one filter pass: propagate, reweight and KLD-resample at every step,
/// then extract the pruning-smoothed trajectory.
pub fn run_filter(
    steps: &[StepEvent],
    start: &StartHint,
    fp: &Floorplan,
    cfg: &FilterConfig,
    constraints: &ConstraintSet<'_>,
    seed: u64,
) -> Result<FilterResult> {
    if steps.is_empty() {
        return Err(Error::Invalid("no steps to filter".into()));
    }
    cfg.kld.validate()?;
    constraints.validate()?;
    let n_epochs = steps.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lost = |epoch: usize| Error::FilterLost {
        pass: cfg.name.clone(),
        epoch,
    };

    let mut current = initial_particles(start, fp, cfg, &mut rng)?;
    let slots = LineageSlots::plan(constraints, n_epochs);
    let width = slots.width;
    let mut tracked = vec![Point::origin(); current.len() * width];
    if let Some(s) = slots.slot_of[0] {
        for (i, p) in current.iter().enumerate() {
            tracked[i * width + s] = p.pose.position();
        }
    }

    let mut tree = AncestorTree::new(
        current
            .iter()
            .map(|p| Node::new(p.pose, p.weight, None))
            .collect(),
    );
    let mut particle_counts = vec![current.len()];
    let mut clouds = Vec::new();
    if cfg.keep_clouds.contains(&0) {
        clouds.push((0, current.iter().map(|p| (p.pose, p.weight)).collect()));
    }

    let mut noise = Vec::new();
    for (k, step) in steps.iter().enumerate() {
        let epoch = k + 1;
        let draws = kld_resample_indices(&current, &cfg.kld, &mut rng).map_err(|_| lost(k))?;
        noise.clear();
        noise.extend(draws.iter().map(|_| {
            let e_l: f64 = rng.sample(StandardNormal);
            let e_t: f64 = rng.sample(StandardNormal);
            (e_l * cfg.noise.sigma_l, e_t * cfg.noise.sigma_dtheta)
        }));

        let mut next_tracked = vec![Point::origin(); draws.len() * width];
        if width > 0 {
            for (j, &src) in draws.iter().enumerate() {
                let src = src as usize;
                next_tracked[j * width..(j + 1) * width]
                    .copy_from_slice(&tracked[src * width..(src + 1) * width]);
            }
        }

        let prev = &current;
        let row_of = |j: usize| &next_tracked[j * width..(j + 1) * width];
        let next: Vec<Particle> = draws
            .par_iter()
            .zip(noise.par_iter())
            .enumerate()
            .with_min_len(512)
            .map(|(j, (&src, &(e_l, e_t)))| {
                let parent = &prev[src as usize];
                let pose = advance(&parent.pose, step, e_l, e_t);
                let mut p = Particle {
                    pose,
                    weight: 1.0,
                    parent: Some(src),
                };
                let row = row_of(j);
                p.weight = reweight(&parent.pose.position(), &p, k, constraints, |a| {
                    slots.slot_of.get(a).copied().flatten().map(|s| row[s])
                });
                p
            })
            .collect();

        let total: f64 = next.iter().map(|p| p.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(lost(epoch));
        }
        if let Some(s) = slots.slot_of[epoch] {
            for (j, p) in next.iter().enumerate() {
                next_tracked[j * width + s] = p.pose.position();
            }
        }
        if cfg.keep_clouds.contains(&epoch) {
            clouds.push((
                epoch,
                next.iter().map(|p| (p.pose, p.weight / total)).collect(),
            ));
        }
        tree.push_generation(
            next.iter()
                .map(|p| Node::new(p.pose, p.weight / total, p.parent))
                .collect(),
        )?;
        particle_counts.push(next.len());
        current = next;
        tracked = next_tracked;
    }

    let poses = prune_smooth(&mut tree)?;
    let best = tree.best_leaf().ok_or_else(|| lost(n_epochs - 1))?;
    let map_lineage = tree.lineage(best);
    let rooms = (0..n_epochs)
        .map(|e| assign_room(fp, &tree, e, &poses[e], &map_lineage[e]))
        .collect();
    let survivor_counts = (0..n_epochs).map(|e| tree.survivor_count(e)).collect();

    Ok(FilterResult {
        poses,
        times: epoch_times(steps),
        rooms,
        map_lineage,
        particle_counts,
        survivor_counts,
        clouds,
    })
}

/// Room of the weighted mean, unless the bulk of the surviving weight sits in
/// a different room; then the room of the best lineage.
fn assign_room(
    fp: &Floorplan,
    tree: &AncestorTree,
    epoch: usize,
    mean: &Pose2D,
    best: &Pose2D,
) -> Option<RoomId> {
    let mut mass: BTreeMap<Option<RoomId>, f64> = BTreeMap::new();
    for n in tree.survivors(epoch) {
        *mass
            .entry(fp.containing_room(&n.pose.position()))
            .or_default() += n.weight;
    }
    let mode = mass
        .iter()
        .fold(None::<(Option<RoomId>, f64)>, |acc, (&r, &w)| match acc {
            Some((_, bw)) if bw >= w => acc,
            _ => Some((r, w)),
        })
        .map(|(r, _)| r);
    let mean_room = fp.containing_room(&mean.position());
    match mode {
        Some(m) if m != mean_room => fp.containing_room(&best.position()),
        _ => mean_room,
    }
}

/// Independent per-stream seed derived from a run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

/// Heading bins anchored at zero: `theta mod 2π`.
pub fn heading_bin(theta: f64, bin: f64) -> i64 {
    (theta.rem_euclid(TAU) / bin).floor() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{wrap_angle, Room, Segment};
    use crate::sensors::dead_reckon;
    use approx::assert_abs_diff_eq;

    fn open_floor() -> Floorplan {
        let p = Point::new;
        Floorplan::new(
            vec![Segment::new(p(-50.0, -50.0), p(50.0, -50.0))],
            vec![Room::new(
                RoomId(0),
                "hall",
                vec![
                    p(-50.0, -50.0),
                    p(50.0, -50.0),
                    p(50.0, 50.0),
                    p(-50.0, 50.0),
                ],
            )
            .unwrap()],
        )
        .unwrap()
    }

    fn walk(n: usize, dtheta: f64) -> Vec<StepEvent> {
        (0..n)
            .map(|i| StepEvent {
                t: 0.6 * (i + 1) as f64,
                length: 0.75,
                dtheta: if i % 7 == 3 { dtheta } else { 0.0 },
            })
            .collect()
    }

    #[test]
    fn zero_noise_propagation_is_dead_reckoning() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Particle {
            pose: Pose2D::new(1.0, 2.0, 0.3),
            weight: 0.2,
            parent: Some(4),
        };
        let step = StepEvent {
            t: 1.0,
            length: 0.75,
            dtheta: 0.1,
        };
        let q = propagate(&p, &step, &StepNoiseModel::zero(), &mut rng);
        let dr = dead_reckon(&[step], p.pose);
        assert_abs_diff_eq!(q.pose.x, dr.poses[1].x, epsilon = 1e-12);
        assert_abs_diff_eq!(q.pose.y, dr.poses[1].y, epsilon = 1e-12);
        assert_eq!(q.weight, 1.0);
    }

    #[test]
    fn propagation_mean_matches_noiseless_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = StepNoiseModel::default();
        let p = Particle {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            weight: 1.0,
            parent: None,
        };
        let step = StepEvent {
            t: 1.0,
            length: 0.75,
            dtheta: 0.0,
        };
        let n = 100_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let q = propagate(&p, &step, &noise, &mut rng);
            sx += q.pose.x;
            sy += q.pose.y;
        }
        let (mx, my) = (sx / n as f64, sy / n as f64);
        // x ≈ (l + e_l) cos(e_θ); the heading term shifts the mean by ~l σ²/2
        let bound = 3.0 * noise.sigma_l / (n as f64).sqrt();
        let bias = 0.75 * noise.sigma_dtheta.powi(2) / 2.0;
        assert!((mx - 0.75).abs() < bound + bias, "{mx}");
        assert!(my.abs() < 3.0 * 0.75 * noise.sigma_dtheta / (n as f64).sqrt() + 1e-3);
    }

    #[test]
    fn reweight_factors() {
        let p = Point::new;
        let room = Room::new(
            RoomId(0),
            "r",
            vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 4.0), p(0.0, 4.0)],
        )
        .unwrap();
        let fp = Floorplan::new(vec![Segment::new(p(5.0, 0.0), p(5.0, 3.0))], vec![room]).unwrap();
        let sigma_alpha = 2.5f64.to_radians();

        let across = Particle {
            pose: Pose2D::new(5.5, 1.0, 0.0),
            weight: 1.0,
            parent: None,
        };
        let c = ConstraintSet::walls_only(&fp);
        assert_eq!(reweight(&p(4.5, 1.0), &across, 0, &c, |_| None), 0.0);

        let along = Particle {
            pose: Pose2D::new(2.0, 1.0, 0.0),
            weight: 1.0,
            parent: None,
        };
        let c = ConstraintSet::walls_only(&fp).with_straight(vec![true], sigma_alpha);
        let w = reweight(&p(1.25, 1.0), &along, 0, &c, |_| None);
        assert_abs_diff_eq!(w, 2f64.sqrt() / (sigma_alpha * PI.sqrt()), epsilon = 1e-9);

        let c = ConstraintSet::walls_only(&fp).with_closures(
            vec![StepLoopClosure::new(0, 1).unwrap()],
            1.0,
            vec![],
        );
        let w = reweight(&p(1.25, 1.0), &along, 0, &c, |_| Some(p(2.0, 1.0)));
        assert_abs_diff_eq!(w, 2f64.sqrt() / PI.sqrt(), epsilon = 1e-12);
        // fallback position when the lineage has none
        let c = ConstraintSet::walls_only(&fp).with_closures(
            vec![StepLoopClosure::new(0, 1).unwrap()],
            1.0,
            vec![p(2.0, 2.0)],
        );
        let w = reweight(&p(1.25, 1.0), &along, 0, &c, |_| None);
        assert_abs_diff_eq!(w, folded_normal_density(1.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_filter_reproduces_dead_reckoning() {
        let fp = open_floor();
        let steps = walk(30, 0.4);
        let start = Pose2D::new(0.0, 0.0, 0.2);
        let cfg = FilterConfig {
            noise: StepNoiseModel::zero(),
            init_sigma_xy: 0.0,
            init_sigma_theta: 0.0,
            kld: KldConfig {
                n_min: 50,
                ..KldConfig::coarse()
            },
            ..FilterConfig::coarse()
        };
        let res = run_filter(
            &steps,
            &StartHint::Pose(start),
            &fp,
            &cfg,
            &ConstraintSet::walls_only(&fp),
            1,
        )
        .unwrap();
        let dr = dead_reckon(&steps, start);
        assert_eq!(res.poses.len(), steps.len() + 1);
        for (a, b) in res.poses.iter().zip(&dr.poses) {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-9);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-9);
            assert_abs_diff_eq!(wrap_angle(a.theta - b.theta), 0.0, epsilon = 1e-9);
        }
        assert!(res.rooms.iter().all(|r| *r == Some(RoomId(0))));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let fp = open_floor();
        let steps = walk(25, 0.3);
        let cfg = FilterConfig {
            kld: KldConfig {
                n_min: 200,
                ..KldConfig::coarse()
            },
            keep_clouds: vec![3],
            ..FilterConfig::coarse()
        };
        let run = |seed| {
            run_filter(
                &steps,
                &StartHint::Room(RoomId(0)),
                &fp,
                &cfg,
                &ConstraintSet::walls_only(&fp),
                seed,
            )
            .unwrap()
        };
        let (a, b, c) = (run(5), run(5), run(6));
        assert_eq!(a.poses, b.poses);
        assert_eq!(a.particle_counts, b.particle_counts);
        assert_eq!(a.clouds, b.clouds);
        assert_ne!(a.poses, c.poses);
        assert!(a
            .particle_counts
            .iter()
            .all(|&n| (cfg.kld.n_min..=cfg.kld.cap()).contains(&n)));
    }

    #[test]
    fn wall_block_loses_filter() {
        let p = Point::new;
        let fp = Floorplan::new(vec![Segment::new(p(1.0, -10.0), p(1.0, 10.0))], vec![]).unwrap();
        let steps = walk(4, 0.0);
        let cfg = FilterConfig {
            noise: StepNoiseModel::zero(),
            init_sigma_xy: 0.0,
            init_sigma_theta: 0.0,
            kld: KldConfig {
                n_min: 10,
                ..KldConfig::coarse()
            },
            ..FilterConfig::coarse()
        };
        let err = run_filter(
            &steps,
            &StartHint::Pose(Pose2D::new(0.0, 0.0, 0.0)),
            &fp,
            &cfg,
            &ConstraintSet::walls_only(&fp),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::FilterLost { epoch: 2, .. }), "{err}");
    }

    #[test]
    fn folded_density_at_mode() {
        assert_abs_diff_eq!(folded_normal_density(0.0, 1.0), (2.0 / PI).sqrt());
    }
}

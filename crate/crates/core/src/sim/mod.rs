//! Synthetic floorplans, walks and sensor streams with known ground truth.

mod field;
mod radio;
mod scenario;
mod walk;

pub use field::{sample_field, sample_magnetics, Anomaly, MagFieldModel};
pub use radio::{simulate_wifi, AccessPoint, RadioModel};
pub use scenario::{builtin, RouteBuilder, Scenario, StartMode, BUILTIN_SCENARIOS};
pub use walk::{corrupt_steps, generate_walk, Walk, WalkScript};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
pub use crate::filter::sub_seed;
use crate::geometry::{Floorplan, Point, Room, RoomId, Segment};
use crate::sensors::{StartHint, SurveyLog, WifiObservation};

pub const FLOOR_WIDTH: f64 = 50.0;
pub const FLOOR_DEPTH: f64 = 30.0;
pub const ROOMS_PER_SIDE: usize = 8;
pub const ROOM_WIDTH: f64 = FLOOR_WIDTH / ROOMS_PER_SIDE as f64;
pub const DOOR_WIDTH: f64 = 1.0;

/// South corridor, a U wrapping the central block.
pub const SOUTH_CORRIDOR: RoomId = RoomId(0);
pub const NORTH_CORRIDOR: RoomId = RoomId(1);

/// Id of south room `k` (west to east).
pub fn south_room(k: usize) -> RoomId {
    RoomId(2 + k as u32)
}

/// Id of north room `k` (west to east).
pub fn north_room(k: usize) -> RoomId {
    RoomId(2 + (ROOMS_PER_SIDE + k) as u32)
}

/// x coordinate of the door centre of room column `k`.
pub fn door_x(k: usize) -> f64 {
    ROOM_WIDTH * (k as f64 + 0.5)
}

/// The default 50 m × 30 m test floor: eight rooms along each long side,
/// a south corridor that wraps a walled central block, and a north corridor.
/// Rooms open onto the corridors through 1 m doors at their centres.
pub fn default_floorplan() -> Floorplan {
    let p = Point::new;
    let (w, d) = (FLOOR_WIDTH, FLOOR_DEPTH);
    let mut walls = vec![
        Segment::new(p(0.0, 0.0), p(w, 0.0)),
        Segment::new(p(w, 0.0), p(w, d)),
        Segment::new(p(w, d), p(0.0, d)),
        Segment::new(p(0.0, d), p(0.0, 0.0)),
        // central block
        Segment::new(p(2.0, 12.0), p(48.0, 12.0)),
        Segment::new(p(48.0, 12.0), p(48.0, 18.0)),
        Segment::new(p(48.0, 18.0), p(2.0, 18.0)),
        Segment::new(p(2.0, 18.0), p(2.0, 12.0)),
    ];
    for k in 1..ROOMS_PER_SIDE {
        let x = ROOM_WIDTH * k as f64;
        walls.push(Segment::new(p(x, 0.0), p(x, 10.0)));
        walls.push(Segment::new(p(x, 20.0), p(x, d)));
    }
    for y in [10.0, 20.0] {
        let mut x0 = 0.0;
        for k in 0..ROOMS_PER_SIDE {
            let xc = door_x(k);
            walls.push(Segment::new(p(x0, y), p(xc - DOOR_WIDTH / 2.0, y)));
            x0 = xc + DOOR_WIDTH / 2.0;
        }
        walls.push(Segment::new(p(x0, y), p(w, y)));
    }

    let rect =
        |x0: f64, y0: f64, x1: f64, y1: f64| vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)];
    let mut rooms = vec![
        Room::new(
            SOUTH_CORRIDOR,
            "corridor-south",
            vec![
                p(0.0, 10.0),
                p(w, 10.0),
                p(w, 18.0),
                p(48.0, 18.0),
                p(48.0, 12.0),
                p(2.0, 12.0),
                p(2.0, 18.0),
                p(0.0, 18.0),
            ],
        ),
        Room::new(NORTH_CORRIDOR, "corridor-north", rect(0.0, 18.0, w, 20.0)),
    ];
    for k in 0..ROOMS_PER_SIDE {
        let x0 = ROOM_WIDTH * k as f64;
        rooms.push(Room::new(
            south_room(k),
            format!("S{k}"),
            rect(x0, 0.0, x0 + ROOM_WIDTH, 10.0),
        ));
    }
    for k in 0..ROOMS_PER_SIDE {
        let x0 = ROOM_WIDTH * k as f64;
        rooms.push(Room::new(
            north_room(k),
            format!("N{k}"),
            rect(x0, 20.0, x0 + ROOM_WIDTH, d),
        ));
    }
    let rooms = rooms
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .expect("default rooms are simple polygons");
    Floorplan::new(walls, rooms).expect("default floorplan is valid")
}

/// A simulated survey: ground truth plus the log a phone would record.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: Walk,
    pub log: SurveyLog,
}

/// Run every generator of a scenario with sub-seeds of `seed`.
pub fn simulate(fp: &Floorplan, scenario: &Scenario, seed: u64) -> Result<Simulation> {
    let truth = generate_walk(fp, &scenario.script)?;
    let steps = corrupt_steps(
        &truth.steps,
        &scenario.noise,
        scenario.gyro_bias_deg_per_min,
        sub_seed(seed, 1),
    );
    if let Some(i) = steps.iter().position(|s| !(s.length > 0.0)) {
        return Err(Error::Invalid(format!(
            "step {i} has non-positive length after corruption; lower the length noise"
        )));
    }
    let field = scenario.field(fp);
    let mags = sample_magnetics(
        &truth,
        &field,
        scenario.mag_rate,
        scenario.mag_sigma,
        sub_seed(seed, 2),
    )?;
    let wifi = simulate_wifi(
        &truth,
        &scenario.radio,
        scenario.wifi_period,
        sub_seed(seed, 3),
    )?;
    let start = match scenario.start {
        StartMode::Pose => StartHint::Pose(truth.poses[0]),
        StartMode::Room => StartHint::Room(
            fp.containing_room(&truth.poses[0].position())
                .ok_or_else(|| Error::Invalid("walk starts outside every room".into()))?,
        ),
    };
    Ok(Simulation {
        log: SurveyLog {
            steps,
            mags,
            wifi,
            start: Some(start),
        },
        truth,
    })
}

/// Random points inside rooms, each with one scan.
pub fn test_points(
    fp: &Floorplan,
    radio: &RadioModel,
    n: usize,
    seed: u64,
) -> Vec<(Point, Vec<WifiObservation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = fp.bounds;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = Point::new(
            rng.random_range(b.min.x..=b.max.x),
            rng.random_range(b.min.y..=b.max.y),
        );
        if fp.containing_room(&q).is_some() {
            let scan = radio.scan(0.0, &q, &mut rng);
            out.push((q, scan));
        }
    }
    out
}

/// A manual grid survey: one scan at every in-room grid node.
pub fn grid_survey(
    fp: &Floorplan,
    radio: &RadioModel,
    spacing: f64,
    seed: u64,
) -> Vec<(Point, Vec<WifiObservation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = fp.bounds;
    let nx = (b.width() / spacing).floor() as usize;
    let ny = (b.height() / spacing).floor() as usize;
    let mut out = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let q = Point::new(
                b.min.x + (ix as f64 + 0.5) * spacing,
                b.min.y + (iy as f64 + 0.5) * spacing,
            );
            if fp.containing_room(&q).is_some() {
                let scan = radio.scan(0.0, &q, &mut rng);
                out.push((q, scan));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_floor_layout() {
        let fp = default_floorplan();
        assert_eq!(fp.rooms.len(), 18);
        assert_eq!(
            fp.containing_room(&Point::new(25.0, 11.0)),
            Some(SOUTH_CORRIDOR)
        );
        assert_eq!(
            fp.containing_room(&Point::new(1.0, 15.0)),
            Some(SOUTH_CORRIDOR)
        );
        assert_eq!(
            fp.containing_room(&Point::new(25.0, 19.0)),
            Some(NORTH_CORRIDOR)
        );
        assert_eq!(fp.containing_room(&Point::new(25.0, 15.0)), None);
        assert_eq!(
            fp.containing_room(&Point::new(door_x(3), 5.0)),
            Some(south_room(3))
        );
        assert_eq!(
            fp.containing_room(&Point::new(door_x(7), 25.0)),
            Some(north_room(7))
        );
        // through a door, but not through the wall beside it
        let xc = door_x(2);
        assert!(!fp.segment_crosses_wall(&Point::new(xc, 9.0), &Point::new(xc, 11.0)));
        assert!(fp.segment_crosses_wall(&Point::new(xc + 1.0, 9.0), &Point::new(xc + 1.0, 11.0)));
        // connectors are open, the block is not
        assert!(!fp.segment_crosses_wall(&Point::new(1.0, 11.0), &Point::new(1.0, 19.0)));
        assert!(fp.segment_crosses_wall(&Point::new(10.0, 11.0), &Point::new(10.0, 19.0)));
        let back = Floorplan::parse(&fp.to_text()).unwrap();
        assert_eq!(back.walls.len(), fp.walls.len());
    }

    #[test]
    fn simulation_is_seeded() {
        let fp = default_floorplan();
        let sc = builtin("corridor").unwrap();
        let a = simulate(&fp, &sc, 4).unwrap();
        let b = simulate(&fp, &sc, 4).unwrap();
        let c = simulate(&fp, &sc, 5).unwrap();
        assert_eq!(a.log, b.log);
        assert_ne!(a.log.steps, c.log.steps);
        assert_eq!(a.truth.poses, c.truth.poses);
        assert!(matches!(a.log.start, Some(StartHint::Pose(_))));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 1), sub_seed(1, 2));
        assert_ne!(sub_seed(1, 1), sub_seed(2, 1));
        assert_eq!(sub_seed(9, 3), sub_seed(9, 3));
    }
}

//! Floorplan geometry: walls, named room polygons and the spatial queries
//! the particle filters run millions of times per survey.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use nalgebra::{Point2, Vector2};

use crate::error::{parse_err, Error, Result};
use crate::formats::{parse_f64, records};

pub type Point = Point2<f64>;

/// Normalize an angle to `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return TAU for tiny negative inputs
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoomId(pub u32);

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Shortest distance from `p` to any point of the segment.
    pub fn distance_to(&self, p: &Point) -> f64 {
        let d = self.b - self.a;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return (p - self.a).norm();
        }
        let t = ((p - self.a).dot(&d) / len2).clamp(0.0, 1.0);
        (p - (self.a + d * t)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Some(Self { min, max })
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

#[derive(Debug, Clone)]
pub struct Room {
    pub id: RoomId,
    pub name: String,
    pub polygon: Vec<Point>,
    bbox: Bounds,
}

impl Room {
    pub fn new(id: RoomId, name: impl Into<String>, polygon: Vec<Point>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::Invalid(format!(
                "room {id} has {} vertices, need at least 3",
                polygon.len()
            )));
        }
        if !is_simple(&polygon) {
            return Err(Error::Invalid(format!("room {id} polygon self-intersects")));
        }
        let bbox = Bounds::from_points(&polygon).expect("non-empty polygon");
        Ok(Self {
            id,
            name: name.into(),
            polygon,
            bbox,
        })
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| Segment::new(self.polygon[i], self.polygon[(i + 1) % n]))
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: &Point) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        if self.edges().any(|e| on_segment(&e.a, &e.b, p)) {
            return true;
        }
        point_in_polygon(&self.polygon, p)
    }

    /// Area centroid of the polygon.
    pub fn centroid(&self) -> Point {
        let n = self.polygon.len();
        let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = self.polygon[i];
            let q = self.polygon[(i + 1) % n];
            let cross = p.x * q.y - q.x * p.y;
            a += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        a *= 0.5;
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    pub fn bbox(&self) -> Bounds {
        self.bbox
    }
}

/// Uniform bucket grid over wall segments so crossing tests only look at
/// nearby walls.
#[derive(Debug, Clone)]
struct WallGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl WallGrid {
    const CELL: f64 = 2.0;

    fn build(walls: &[Segment], bounds: &Bounds) -> Self {
        let cell = Self::CELL;
        let nx = ((bounds.width() / cell).floor() as usize + 1).max(1);
        let ny = ((bounds.height() / cell).floor() as usize + 1).max(1);
        let mut grid = Self {
            origin: bounds.min,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, w) in walls.iter().enumerate() {
            let (x0, x1, y0, y1) = grid.cell_range(&w.a, &w.b);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    grid.buckets[cy * nx + cx].push(i as u32);
                }
            }
        }
        grid
    }

    fn clamp_x(&self, x: f64) -> usize {
        let c = ((x - self.origin.x) / self.cell).floor();
        c.clamp(0.0, (self.nx - 1) as f64) as usize
    }

    fn clamp_y(&self, y: f64) -> usize {
        let c = ((y - self.origin.y) / self.cell).floor();
        c.clamp(0.0, (self.ny - 1) as f64) as usize
    }

    fn cell_range(&self, a: &Point, b: &Point) -> (usize, usize, usize, usize) {
        (
            self.clamp_x(a.x.min(b.x)),
            self.clamp_x(a.x.max(b.x)),
            self.clamp_y(a.y.min(b.y)),
            self.clamp_y(a.y.max(b.y)),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Floorplan {
    pub walls: Vec<Segment>,
    /// Sorted by id; `rooms[i].id == RoomId(i)`.
    pub rooms: Vec<Room>,
    pub bounds: Bounds,
    grid: WallGrid,
}

impl Floorplan {
    pub fn new(walls: Vec<Segment>, mut rooms: Vec<Room>) -> Result<Self> {
        if walls.is_empty() && rooms.is_empty() {
            return Err(Error::Invalid("no geometry".into()));
        }
        rooms.sort_by_key(|r| r.id);
        for (i, r) in rooms.iter().enumerate() {
            if r.id.0 as usize != i {
                return Err(Error::Invalid(if i > 0 && rooms[i - 1].id == r.id {
                    format!("duplicate room id {}", r.id)
                } else {
                    format!("room ids must be contiguous from 0, found {}", r.id)
                }));
            }
        }
        let all = walls
            .iter()
            .flat_map(|w| [w.a, w.b])
            .chain(rooms.iter().flat_map(|r| r.polygon.iter().copied()))
            .collect::<Vec<_>>();
        if all.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        let bounds = Bounds::from_points(&all).expect("checked non-empty");
        let grid = WallGrid::build(&walls, &bounds);
        Ok(Self {
            walls,
            rooms,
            bounds,
            grid,
        })
    }

    pub fn room(&self, id: RoomId) -> Option<&Room> {
        self.rooms.get(id.0 as usize)
    }

    /// True iff the segment `p0 → p1` touches or crosses any wall. Touching a
    /// wall endpoint or overlapping a wall collinearly counts as a crossing.
    pub fn segment_crosses_wall(&self, p0: &Point, p1: &Point) -> bool {
        let g = &self.grid;
        let (x0, x1, y0, y1) = g.cell_range(p0, p1);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &wi in &g.buckets[cy * g.nx + cx] {
                    let w = &self.walls[wi as usize];
                    if segments_intersect(p0, p1, &w.a, &w.b) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// The room whose polygon contains `p`; shared boundaries go to the
    /// lowest id.
    pub fn containing_room(&self, p: &Point) -> Option<RoomId> {
        self.rooms.iter().find(|r| r.contains(p)).map(|r| r.id)
    }

    /// Smallest acute angle between `heading` and any edge of the room
    /// containing `p`, or `None` outside every room.
    pub fn acute_angle_to_best_wall(&self, p: &Point, heading: f64) -> Option<f64> {
        let room = self.room(self.containing_room(p)?)?;
        room.edges()
            .filter(|e| e.length() > 0.0)
            .map(|e| {
                let d = e.b - e.a;
                acute_angle(heading, d.y.atan2(d.x))
            })
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Parse the line-oriented floorplan format (`wall,...` / `room,...`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut walls = Vec::new();
        let mut rooms = Vec::new();
        for (line, fields) in records(text) {
            match fields[0] {
                "wall" => {
                    if fields.len() != 5 {
                        return Err(parse_err(line, "wall needs x0,y0,x1,y1"));
                    }
                    let v = fields[1..]
                        .iter()
                        .map(|s| parse_f64(line, s))
                        .collect::<Result<Vec<_>>>()?;
                    walls.push(Segment::new(Point::new(v[0], v[1]), Point::new(v[2], v[3])));
                }
                "room" => {
                    if fields.len() < 3 {
                        return Err(parse_err(line, "room needs id,name,vertices"));
                    }
                    let id: u32 = fields[1]
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad room id '{}'", fields[1])))?;
                    let coords = &fields[3..];
                    if coords.len() % 2 != 0 {
                        return Err(parse_err(line, "odd number of room coordinates"));
                    }
                    let pts = coords
                        .chunks(2)
                        .map(|c| Ok(Point::new(parse_f64(line, c[0])?, parse_f64(line, c[1])?)))
                        .collect::<Result<Vec<_>>>()?;
                    let room = Room::new(RoomId(id), fields[2], pts)
                        .map_err(|e| parse_err(line, e.to_string()))?;
                    rooms.push(room);
                }
                other => return Err(parse_err(line, format!("unknown record '{other}'"))),
            }
        }
        Self::new(walls, rooms)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for w in &self.walls {
            let _ = writeln!(
                out,
                "wall,{:.6},{:.6},{:.6},{:.6}",
                w.a.x, w.a.y, w.b.x, w.b.y
            );
        }
        for r in &self.rooms {
            let _ = write!(out, "room,{},{}", r.id, r.name);
            for p in &r.polygon {
                let _ = write!(out, ",{:.6},{:.6}", p.x, p.y);
            }
            out.push('\n');
        }
        out
    }
}

/// Acute angle in `[0, π/2]` between two undirected directions.
pub fn acute_angle(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > FRAC_PI_2 {
        PI - d
    } else {
        d
    }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection: touching and collinear overlap count.
pub fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn point_in_polygon(poly: &[Point], p: &Point) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if adjacent {
                // adjacent edges may only share their common vertex
                let shared = if j == i + 1 { a2 } else { a1 };
                let (other_a, other_b) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                if cross(&shared, &other_a, &other_b) == 0.0
                    && (other_a - shared).dot(&(other_b - shared)) > 0.0
                {
                    return false;
                }
                continue;
            }
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return false;
            }
        }
    }
    true
}

/// Unit-vector mean heading; `None` when the weights cancel out.
pub fn mean_heading(items: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let mut v = Vector2::zeros();
    for (theta, w) in items {
        v += Vector2::new(theta.cos(), theta.sin()) * w;
    }
    (v.norm() > 0.0).then(|| wrap_angle(v.y.atan2(v.x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn one_wall() -> Floorplan {
        Floorplan::new(vec![Segment::new(p(0.0, 0.0), p(0.0, 10.0))], vec![]).unwrap()
    }

    fn rect(id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> Room {
        Room::new(
            RoomId(id),
            format!("r{id}"),
            vec![p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)],
        )
        .unwrap()
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(PI), -PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), -PI);
        assert!(wrap_angle(-1e-18) < PI);
    }

    #[test]
    fn crossing_cases() {
        let fp = one_wall();
        assert!(fp.segment_crosses_wall(&p(-1.0, 5.0), &p(1.0, 5.0)));
        assert!(!fp.segment_crosses_wall(&p(1.0, 1.0), &p(2.0, 1.0)));
        assert!(fp.segment_crosses_wall(&p(-1.0, 5.0), &p(0.0, 5.0)));
        // collinear overlap
        assert!(fp.segment_crosses_wall(&p(0.0, 11.0), &p(0.0, 9.0)));
        // collinear but disjoint
        assert!(!fp.segment_crosses_wall(&p(0.0, 11.0), &p(0.0, 12.0)));
        // through the wall endpoint
        assert!(fp.segment_crosses_wall(&p(-1.0, 11.0), &p(1.0, 9.0)));
    }

    #[test]
    fn room_queries() {
        let fp = Floorplan::new(
            vec![],
            vec![
                rect(0, 0.0, 0.0, 4.0, 3.0),
                rect(1, 10.0, 0.0, 12.0, 2.0),
                rect(2, 12.0, 0.0, 14.0, 2.0),
            ],
        )
        .unwrap();
        assert_eq!(fp.containing_room(&fp.rooms[0].centroid()), Some(RoomId(0)));
        assert_eq!(fp.containing_room(&p(7.0, 1.0)), None);
        assert_eq!(fp.containing_room(&p(12.0, 1.0)), Some(RoomId(1)));

        let a = fp.acute_angle_to_best_wall(&p(2.0, 1.5), 0.0).unwrap();
        assert_abs_diff_eq!(a, 0.0);
        let a = fp.acute_angle_to_best_wall(&p(2.0, 1.5), PI / 4.0).unwrap();
        assert_abs_diff_eq!(a, PI / 4.0, epsilon = 1e-12);
        assert!(fp.acute_angle_to_best_wall(&p(7.0, 1.0), 0.0).is_none());
    }

    #[test]
    fn parse_floorplan() {
        let text = "# test\nwall,0,0,10,0\nwall,10,0,10,10\nroom,0,tri,0,0,4,0,0,4\n";
        let fp = Floorplan::parse(text).unwrap();
        assert_eq!(fp.walls.len(), 2);
        assert_eq!(fp.rooms.len(), 1);
        assert_eq!(fp.rooms[0].name, "tri");

        let err = Floorplan::parse("# nothing\n\n").unwrap_err();
        assert!(err.to_string().contains("no geometry"));

        let dup = "room,0,a,0,0,1,0,0,1\nroom,0,b,2,0,3,0,2,1\n";
        assert!(Floorplan::parse(dup)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));

        let short = "room,0,a,0,0,1,0\n";
        let err = Floorplan::parse(short).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let bowtie = "room,0,a,0,0,1,1,1,0,0,1\n";
        assert!(Floorplan::parse(bowtie).is_err());

        let gap = "room,1,a,0,0,1,0,0,1\n";
        assert!(Floorplan::parse(gap).is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "wall,0,0,10,0\nroom,0,hall,0,0,10,0,10,2,0,2\n";
        let fp = Floorplan::parse(text).unwrap();
        let again = Floorplan::parse(&fp.to_text()).unwrap();
        assert_eq!(again.walls, fp.walls);
        assert_eq!(again.rooms[0].polygon, fp.rooms[0].polygon);
    }

    #[test]
    fn mean_heading_wraps() {
        let h = mean_heading([(PI - 0.1, 1.0), (-PI + 0.1, 1.0)]).unwrap();
        assert_abs_diff_eq!(h.abs(), PI, epsilon = 1e-12);
    }
}

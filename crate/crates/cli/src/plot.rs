//! Standalone SVG rendering of floorplans and survey results.

use std::fmt::Write as _;

use pfsurvey::formats::{parse_f64, records, TimedTrajectory};
use pfsurvey::geometry::{Floorplan, Point};
use pfsurvey::loopclosure::StepLoopClosure;
use pfsurvey::signalmap::MapGrid;
use pfsurvey::{Error, Result};

const SCALE: f64 = 20.0;
const MARGIN: f64 = 20.0;
const EXTRA_COLOURS: [&str; 4] = ["#1f5fbf", "#c0392b", "#8e44ad", "#16a085"];

#[derive(Default)]
pub struct Layers {
    pub trajectories: Vec<TimedTrajectory>,
    pub closures: Vec<StepLoopClosure>,
    pub rejected: Vec<StepLoopClosure>,
    pub cloud: Vec<(Point, f64)>,
    pub map: Option<MapGrid>,
}

pub fn parse_rejected(text: &str) -> Result<Vec<StepLoopClosure>> {
    records(text)
        .filter(|(_, f)| f[0] == "lc_rej")
        .map(|(line, f)| {
            let a = f.get(1).and_then(|s| s.parse().ok());
            let b = f.get(2).and_then(|s| s.parse().ok());
            a.zip(b)
                .and_then(|(a, b)| StepLoopClosure::new(a, b))
                .ok_or(Error::Parse {
                    line,
                    msg: "bad lc_rej record".into(),
                })
        })
        .collect()
}

/// `cloud,<epoch>,<x>,<y>,<theta>,<w>` lines; other records are skipped.
pub fn parse_cloud(text: &str) -> Result<Vec<(Point, f64)>> {
    records(text)
        .filter(|(_, f)| f[0] == "cloud")
        .map(|(line, f)| {
            if f.len() != 6 {
                return Err(Error::Parse {
                    line,
                    msg: "cloud expects 5 fields".into(),
                });
            }
            Ok((
                Point::new(parse_f64(line, f[2])?, parse_f64(line, f[3])?),
                parse_f64(line, f[5])?,
            ))
        })
        .collect()
}

struct Frame {
    min: Point,
    height: f64,
}

impl Frame {
    fn x(&self, p: &Point) -> f64 {
        MARGIN + (p.x - self.min.x) * SCALE
    }

    fn y(&self, p: &Point) -> f64 {
        MARGIN + (self.height - (p.y - self.min.y)) * SCALE
    }
}

/// Blue to red through yellow.
fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 0.5 {
        let t = v * 2.0;
        (t, t, 1.0 - t)
    } else {
        let t = (v - 0.5) * 2.0;
        (1.0, 1.0 - t, 0.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8
    )
}

fn polyline(out: &mut String, f: &Frame, pts: &[Point], colour: &str, width: f64) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", f.x(p), f.y(p)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="{width}"/>"#,
        coords.join(" ")
    );
}

fn line(out: &mut String, f: &Frame, a: &Point, b: &Point, colour: &str, width: f64) {
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="{width}"/>"#,
        f.x(a),
        f.y(a),
        f.x(b),
        f.y(b)
    );
}

pub fn render(fp: &Floorplan, layers: &Layers) -> String {
    let b = fp.bounds;
    let f = Frame {
        min: b.min,
        height: b.height(),
    };
    let w = b.width() * SCALE + 2.0 * MARGIN;
    let h = b.height() * SCALE + 2.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    if let Some(map) = &layers.map {
        let lo = map.mu.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = map.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-9);
        let cell = estimate_cell(&map.cells) * SCALE;
        let _ = writeln!(out, r#"<g id="map">"#);
        for (p, mu) in map.cells.iter().zip(&map.mu) {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                f.x(p) - cell / 2.0,
                f.y(p) - cell / 2.0,
                ramp((mu - lo) / span)
            );
        }
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r#"<g id="rooms">"#);
    for room in &fp.rooms {
        let pts: Vec<String> = room
            .polygon
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p), f.y(p)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="none" stroke="#c8c8c8" stroke-width="0.5"/>"##,
            pts.join(" ")
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g id="walls">"#);
    for s in &fp.walls {
        line(&mut out, &f, &s.a, &s.b, "#404040", 2.0);
    }
    let _ = writeln!(out, "</g>");

    if !layers.cloud.is_empty() {
        let wmax = layers
            .cloud
            .iter()
            .map(|c| c.1)
            .fold(0.0, f64::max)
            .max(1e-300);
        let _ = writeln!(out, r#"<g id="cloud">"#);
        for (p, wt) in &layers.cloud {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#1f5fbf" fill-opacity="{:.3}"/>"##,
                f.x(p),
                f.y(p),
                0.15 + 0.85 * wt / wmax
            );
        }
        let _ = writeln!(out, "</g>");
    }

    if let Some(base) = layers.trajectories.first() {
        let pos: Vec<Point> = base.poses.iter().map(|p| p.position()).collect();
        let _ = writeln!(out, r#"<g id="closures">"#);
        for (set, colour) in [(&layers.rejected, "#8b5a2b"), (&layers.closures, "#2e9e3e")] {
            for c in set.iter() {
                if let (Some(a), Some(b)) = (pos.get(c.epoch_a), pos.get(c.epoch_b)) {
                    line(&mut out, &f, a, b, colour, 1.0);
                }
            }
        }
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r#"<g id="trajectories">"#);
    for (i, t) in layers.trajectories.iter().enumerate().rev() {
        let pos: Vec<Point> = t.poses.iter().map(|p| p.position()).collect();
        let colour = if i == 0 {
            "#000000"
        } else {
            EXTRA_COLOURS[(i - 1) % EXTRA_COLOURS.len()]
        };
        polyline(&mut out, &f, &pos, colour, 1.5);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    out
}

/// Smallest positive coordinate gap between cell centres.
fn estimate_cell(cells: &[Point]) -> f64 {
    let mut xs: Vec<f64> = cells.iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-9)
        .fold(f64::INFINITY, f64::min)
        .clamp(0.05, 5.0)
}

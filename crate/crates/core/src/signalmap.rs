//! Gaussian-process WiFi signal maps, RSS90 map comparison and one-shot
//! fingerprint positioning.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{parse_err, Error, Result};
use crate::formats::{fmt6, parse_f64, records};
use crate::geometry::{Bounds, Point, RoomId};
use crate::pipeline::ErrorCdf;
use crate::sensors::{ApId, WifiObservation};

/// One WiFi reading placed on the recovered trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyPoint {
    pub t: f64,
    pub position: Point,
    pub ap: ApId,
    pub rssi: f64,
    pub room: Option<RoomId>,
}

/// `point,<t>,<x>,<y>,<ap>,<rssi>,<room>`
pub fn write_survey_points(points: &[SurveyPoint]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(
            out,
            "point,{},{},{},{},{},{}",
            fmt6(p.t),
            fmt6(p.position.x),
            fmt6(p.position.y),
            p.ap,
            fmt6(p.rssi),
            crate::formats::fmt_room(p.room)
        );
    }
    out
}

pub fn parse_survey_points(text: &str) -> Result<Vec<SurveyPoint>> {
    records(text)
        .map(|(line, f)| {
            if f.len() != 7 || f[0] != "point" {
                return Err(parse_err(line, "expected point,t,x,y,ap,rssi,room"));
            }
            Ok(SurveyPoint {
                t: parse_f64(line, f[1])?,
                position: Point::new(parse_f64(line, f[2])?, parse_f64(line, f[3])?),
                ap: ApId::new(f[4]),
                rssi: parse_f64(line, f[5])?,
                room: crate::formats::parse_room(line, f[6])?,
            })
        })
        .collect()
}

/// Squared-exponential kernel and grid settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    pub length_scale: f64,
    pub sigma_f: f64,
    pub sigma_n: f64,
    pub prior_mean: f64,
    pub cell: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            length_scale: 3.0,
            sigma_f: 6.0,
            sigma_n: 4.0,
            prior_mean: -90.0,
            cell: 0.5,
        }
    }
}

impl GpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.sigma_f > 0.0 && self.cell > 0.0) {
            return Err(Error::Invalid(
                "length scale, signal sigma and cell size must be positive".into(),
            ));
        }
        if !(self.sigma_n >= 0.0 && self.prior_mean.is_finite()) {
            return Err(Error::Invalid("bad noise sigma or prior mean".into()));
        }
        Ok(())
    }

    pub fn kernel(&self, a: &Point, b: &Point) -> f64 {
        let d2 = (a - b).norm_squared();
        self.sigma_f.powi(2) * (-d2 / (2.0 * self.length_scale.powi(2))).exp()
    }

    pub fn prior_variance(&self) -> f64 {
        self.sigma_f.powi(2) + self.sigma_n.powi(2)
    }
}

/// Cell centres covering `bounds`, row-major from the minimum corner.
pub fn grid_cells(bounds: &Bounds, cell: f64) -> Vec<Point> {
    let nx = (bounds.width() / cell).ceil().max(1.0) as usize;
    let ny = (bounds.height() / cell).ceil().max(1.0) as usize;
    (0..ny)
        .flat_map(|iy| {
            (0..nx).map(move |ix| {
                Point::new(
                    bounds.min.x + (ix as f64 + 0.5) * cell,
                    bounds.min.y + (iy as f64 + 0.5) * cell,
                )
            })
        })
        .collect()
}

/// Posterior mean and variance of one AP on a set of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub ap: ApId,
    pub cells: Vec<Point>,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GpSignalMap {
    pub params: GpParams,
    pub inputs: Vec<Point>,
    pub targets: Vec<f64>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    pub grid: MapGrid,
}

const CHUNK: usize = 256;

/// Exact GP regression on `(position, rssi)` pairs, evaluated on a grid
/// covering `bounds`. Variances include the observation noise.
pub fn gp_train(
    ap: ApId,
    points: &[(Point, f64)],
    params: &GpParams,
    bounds: &Bounds,
) -> Result<GpSignalMap> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::Invalid(format!("no training points for {ap}")));
    }
    if points
        .iter()
        .any(|(p, r)| !(p.x.is_finite() && p.y.is_finite() && r.is_finite()))
    {
        return Err(Error::Invalid("non-finite training point".into()));
    }
    let n = points.len();
    let noise = params.sigma_n.powi(2);
    let k = DMatrix::from_fn(n, n, |i, j| {
        params.kernel(&points[i].0, &points[j].0) + if i == j { noise } else { 0.0 }
    });
    let chol = Cholesky::new(k).ok_or_else(|| {
        Error::Singular(format!("kernel matrix for {ap} is not positive definite"))
    })?;
    let y = DVector::from_iterator(n, points.iter().map(|(_, r)| r - params.prior_mean));
    let alpha = chol.solve(&y);
    let inputs: Vec<Point> = points.iter().map(|(p, _)| *p).collect();
    let targets = points.iter().map(|(_, r)| *r).collect();

    let cells = grid_cells(bounds, params.cell);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = cells
        .par_chunks(CHUNK)
        .map(|chunk| predict_batch(params, &inputs, &alpha, &chol, chunk))
        .collect();
    let (mut mu, mut var) = (
        Vec::with_capacity(cells.len()),
        Vec::with_capacity(cells.len()),
    );
    for (m, v) in parts {
        mu.extend(m);
        var.extend(v);
    }
    Ok(GpSignalMap {
        params: *params,
        inputs,
        targets,
        alpha,
        chol,
        grid: MapGrid { ap, cells, mu, var },
    })
}

fn predict_batch(
    params: &GpParams,
    inputs: &[Point],
    alpha: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    queries: &[Point],
) -> (Vec<f64>, Vec<f64>) {
    let ks = DMatrix::from_fn(inputs.len(), queries.len(), |i, j| {
        params.kernel(&inputs[i], &queries[j])
    });
    let mu = ks.tr_mul(alpha);
    let v = chol
        .l_dirty()
        .solve_lower_triangular(&ks)
        .expect("cholesky factor has a positive diagonal");
    let prior = params.prior_variance();
    let var = v
        .column_iter()
        .map(|c| (prior - c.norm_squared()).clamp(0.0, prior))
        .collect();
    (mu.iter().map(|m| m + params.prior_mean).collect(), var)
}

impl GpSignalMap {
    pub fn ap(&self) -> &ApId {
        &self.grid.ap
    }

    /// Posterior mean and variance at an arbitrary point.
    pub fn predict(&self, p: &Point) -> (f64, f64) {
        let (mu, var) = predict_batch(&self.params, &self.inputs, &self.alpha, &self.chol, &[*p]);
        (mu[0], var[0])
    }
}

/// One map per AP seen in `points`, in AP order.
pub fn build_maps(
    points: &[SurveyPoint],
    params: &GpParams,
    bounds: &Bounds,
) -> Result<Vec<GpSignalMap>> {
    let mut by_ap: Vec<(ApId, Vec<(Point, f64)>)> = Vec::new();
    let mut index: FxHashMap<&ApId, usize> = FxHashMap::default();
    for p in points {
        let i = *index.entry(&p.ap).or_insert_with(|| {
            by_ap.push((p.ap.clone(), Vec::new()));
            by_ap.len() - 1
        });
        by_ap[i].1.push((p.position, p.rssi));
    }
    by_ap.sort_by(|a, b| a.0.cmp(&b.0));
    by_ap
        .into_iter()
        .map(|(ap, pts)| gp_train(ap, &pts, params, bounds))
        .collect()
}

/// z such that a central interval of ±zσ holds 90% of a Gaussian.
pub fn z90() -> f64 {
    Normal::standard().inverse_cdf(0.95)
}

/// Intersection over union of the central 90% intervals of two Gaussians.
pub fn rss90(mu1: f64, var1: f64, mu2: f64, var2: f64) -> f64 {
    let z = z90();
    let (h1, h2) = (z * var1.max(0.0).sqrt(), z * var2.max(0.0).sqrt());
    let (lo1, hi1, lo2, hi2) = (mu1 - h1, mu1 + h1, mu2 - h2, mu2 + h2);
    let inter = (hi1.min(hi2) - lo1.max(lo2)).max(0.0);
    let union = 2.0 * h1 + 2.0 * h2 - inter;
    if union <= 0.0 {
        return if mu1 == mu2 { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Per-cell RSS90 scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Rss90Result {
    pub cells: Vec<(Point, f64)>,
}

impl Rss90Result {
    pub fn scores(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.1).collect()
    }

    pub fn cdf(&self) -> ErrorCdf {
        ErrorCdf::new(self.scores()).expect("scores are finite")
    }

    pub fn restrict(&self, keep: impl Fn(&Point) -> bool) -> Rss90Result {
        Rss90Result {
            cells: self
                .cells
                .iter()
                .filter(|(p, _)| keep(p))
                .copied()
                .collect(),
        }
    }

    pub fn median(&self) -> Option<f64> {
        self.cdf().quantile(0.5)
    }
}

fn cell_key(p: &Point) -> (i64, i64) {
    ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64)
}

/// RSS90 on every cell present in both maps, in `a`'s cell order.
pub fn compare_maps(a: &MapGrid, b: &MapGrid) -> Result<Rss90Result> {
    if a.ap != b.ap {
        return Err(Error::Invalid(format!(
            "comparing maps of {} and {}",
            a.ap, b.ap
        )));
    }
    let lookup: FxHashMap<(i64, i64), usize> = b
        .cells
        .iter()
        .enumerate()
        .map(|(i, p)| (cell_key(p), i))
        .collect();
    let cells: Vec<(Point, f64)> = a
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            lookup
                .get(&cell_key(p))
                .map(|&j| (*p, rss90(a.mu[i], a.var[i], b.mu[j], b.var[j])))
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::DisjointCoverage);
    }
    Ok(Rss90Result { cells })
}

/// The cell maximizing the summed Gaussian log-likelihood of the scan over
/// APs present in both the scan and the maps. Every map must share one cell
/// list. Ties go to the lowest cell index.
pub fn position_one_shot(
    maps: &[MapGrid],
    obs: &[WifiObservation],
    sigma_n: f64,
) -> Result<(usize, Point)> {
    let Some(first) = maps.first() else {
        return Err(Error::NoSharedAps);
    };
    if maps.iter().any(|m| m.cells != first.cells) {
        return Err(Error::Invalid("signal maps use different grids".into()));
    }
    let mut shared: Vec<(&ApId, f64, &MapGrid)> = Vec::new();
    for o in obs {
        if shared.iter().any(|s| *s.0 == o.ap) {
            continue;
        }
        if let Some(m) = maps.iter().find(|m| m.ap == o.ap) {
            shared.push((&o.ap, o.rssi, m));
        }
    }
    if shared.is_empty() {
        return Err(Error::NoSharedAps);
    }
    shared.sort_by(|a, b| a.0.cmp(b.0));
    let noise = sigma_n * sigma_n;
    let score = |c: usize| -> f64 {
        shared
            .iter()
            .map(|(_, r, m)| {
                let v = m.var[c] + noise;
                if v <= 0.0 {
                    return if *r == m.mu[c] {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                -0.5 * ((r - m.mu[c]).powi(2) / v + (std::f64::consts::TAU * v).ln())
            })
            .sum()
    };
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..first.cells.len() {
        let s = score(c);
        if s > best.1 {
            best = (c, s);
        }
    }
    Ok((best.0, first.cells[best.0]))
}

/// Which distance bucket `d` falls in, given ascending upper edges.
pub fn bucket_of(d: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= d)
}

/// Positioning error CDF, optionally split by each truth point's distance
/// to the survey path. Buckets are `[0, e0), [e0, e1), ..., [e_last, inf)`.
pub fn positioning_cdf(
    estimates: &[Point],
    truths: &[Point],
    path: Option<(&[Point], &[f64])>,
) -> Result<Vec<ErrorCdf>> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    let errors: Vec<f64> = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e - t).norm())
        .collect();
    let Some((path, edges)) = path else {
        return Ok(vec![ErrorCdf::new(errors)?]);
    };
    let mut buckets = vec![Vec::new(); edges.len() + 1];
    for (t, e) in truths.iter().zip(errors) {
        buckets[bucket_of(crate::pipeline::distance_to_path(t, path), edges)].push(e);
    }
    buckets.into_iter().map(ErrorCdf::new).collect()
}

/// Default bucket edges in metres.
pub const PATH_BUCKETS: [f64; 2] = [1.0, 2.0];

/// `cell,<x>,<y>,<ap>,<mu>,<var>` for every cell of every map.
pub fn write_maps<'a>(maps: impl IntoIterator<Item = &'a MapGrid>) -> String {
    let mut out = String::new();
    for m in maps {
        for ((p, mu), var) in m.cells.iter().zip(&m.mu).zip(&m.var) {
            let _ = writeln!(
                out,
                "cell,{},{},{},{},{}",
                fmt6(p.x),
                fmt6(p.y),
                m.ap,
                fmt6(*mu),
                fmt6(*var)
            );
        }
    }
    out
}

/// Maps grouped by AP in order of first appearance.
pub fn parse_maps(text: &str) -> Result<Vec<MapGrid>> {
    let mut maps: Vec<MapGrid> = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 6 || f[0] != "cell" {
            return Err(parse_err(line, "expected cell,x,y,ap,mu,var"));
        }
        let ap = ApId::new(f[3]);
        let p = Point::new(parse_f64(line, f[1])?, parse_f64(line, f[2])?);
        let (mu, var) = (parse_f64(line, f[4])?, parse_f64(line, f[5])?);
        if var < 0.0 {
            return Err(parse_err(line, "negative variance"));
        }
        let m = match maps.iter_mut().position(|m| m.ap == ap) {
            Some(i) => &mut maps[i],
            None => {
                maps.push(MapGrid {
                    ap,
                    cells: Vec::new(),
                    mu: Vec::new(),
                    var: Vec::new(),
                });
                maps.last_mut().unwrap()
            }
        };
        m.cells.push(p);
        m.mu.push(mu);
        m.var.push(var);
    }
    Ok(maps)
}

/// `rss90,<x>,<y>,<score>`
pub fn write_comparison(r: &Rss90Result) -> String {
    let mut out = String::new();
    for (p, s) in &r.cells {
        let _ = writeln!(out, "rss90,{},{},{}", fmt6(p.x), fmt6(p.y), fmt6(*s));
    }
    out
}

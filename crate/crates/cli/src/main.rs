#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use pfsurvey::filter::{run_filter, ConstraintSet};
use pfsurvey::formats::{
    fmt6, parse_closures, parse_rooms, parse_trajectory, write_closures, write_cloud, write_rooms,
    write_straight, write_trajectory,
};
use pfsurvey::geometry::{Floorplan, Point};
use pfsurvey::loopclosure::detect_loop_closures;
use pfsurvey::pipeline::{evaluate_trajectory, room_accuracy, run_pfsurvey, PipelineConfig};
use pfsurvey::sensors::{SurveyLog, WifiObservation};
use pfsurvey::signalmap::{
    build_maps, compare_maps, parse_maps, parse_survey_points, position_one_shot, write_comparison,
    write_maps, write_survey_points, GpParams, SurveyPoint,
};
use pfsurvey::sim::{self, builtin, default_floorplan, simulate, Scenario};
use pfsurvey::straightline::detect_straight_steps;
use pfsurvey::Error;

mod plot;

#[derive(Parser)]
#[command(
    name = "pfsurvey",
    version,
    about = "Trajectory recovery and signal maps for indoor path surveys"
)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// `key=value` override, or a file of them. Repeatable.
    #[arg(long = "config")]
    config: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a survey log and ground truth from a scenario.
    #[command(group(ArgGroup::new("source").required(true).args(["scenario", "builtin"])))]
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        builtin: Option<String>,
        /// Defaults to the built-in test floor.
        #[arg(long)]
        floorplan: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write this many random test scans for positioning.
        #[arg(long)]
        test_points: Option<usize>,
        /// Also write a manual grid survey at this spacing (metres).
        #[arg(long)]
        grid_survey: Option<f64>,
    },
    /// Wall-constrained first pass.
    Pf1 {
        #[arg(long)]
        floorplan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated epochs whose particle clouds are appended.
        #[arg(long, value_delimiter = ',')]
        clouds: Vec<usize>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Flag straight-walking steps.
    Straight {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Detect and validate loop closures on a first-pass trajectory.
    Loops {
        #[arg(long)]
        log: PathBuf,
        /// First-pass trajectory file.
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Full two-pass pipeline.
    Survey {
        #[arg(long)]
        floorplan: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Train per-AP GP signal maps from survey points.
    Map {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        floorplan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gp: GpArgs,
    },
    /// RSS90 agreement between two map files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to one access point.
        #[arg(long)]
        ap: Option<String>,
    },
    /// One-shot positioning of WiFi scans against map files.
    Position {
        #[arg(long)]
        maps: PathBuf,
        /// Log file whose `wifi` lines form scans grouped by timestamp.
        #[arg(long)]
        scans: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        sigma_n: f64,
    },
    /// Error CDF and room accuracy of an estimate against ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        floorplan: PathBuf,
        /// Per-epoch room assignments to score instead of containing rooms.
        #[arg(long)]
        rooms: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a floorplan with trajectories, closures, clouds or a map as SVG.
    Plot {
        #[arg(long)]
        floorplan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trajectory files; the first is drawn in black.
        #[arg(long)]
        traj: Vec<PathBuf>,
        /// Closure file drawn on the first trajectory.
        #[arg(long)]
        closures: Option<PathBuf>,
        /// File with `cloud` lines.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        /// Access point to draw from the map file; defaults to the first.
        #[arg(long)]
        ap: Option<String>,
    },
}

#[derive(Args, Clone)]
struct GpArgs {
    #[arg(long, default_value_t = 3.0)]
    length_scale: f64,
    #[arg(long, default_value_t = 6.0)]
    sigma_f: f64,
    #[arg(long, default_value_t = 4.0)]
    sigma_n: f64,
    #[arg(long, default_value_t = -90.0)]
    prior_mean: f64,
    #[arg(long, default_value_t = 0.5)]
    cell: f64,
}

impl GpArgs {
    fn params(&self) -> GpParams {
        GpParams {
            length_scale: self.length_scale,
            sigma_f: self.sigma_f,
            sigma_n: self.sigma_n,
            prior_mean: self.prior_mean,
            cell: self.cell,
        }
    }
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())).into())
}

fn write(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::Io)?;
    }
    fs::write(path, text)
        .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())).into())
}

fn load_floorplan(path: &Path) -> CliResult<Floorplan> {
    Ok(Floorplan::parse(&read(path)?)?)
}

fn load_log(path: &Path) -> CliResult<SurveyLog> {
    Ok(SurveyLog::parse(&read(path)?)?)
}

fn pipeline_config(t: &Tuning) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    for item in &t.config {
        if let Some((k, v)) = item.split_once('=') {
            cfg.set(k.trim(), v.trim())?;
        } else {
            cfg.apply_text(&read(Path::new(item))?)?;
        }
    }
    if let Some(seed) = t.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::FilterLost { .. }) {
                3
            } else {
                2
            })
        }
    }
}

fn run(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::Simulate {
            scenario,
            builtin: name,
            floorplan,
            seed,
            out,
            test_points,
            grid_survey,
        } => {
            let fp = match &floorplan {
                Some(p) => load_floorplan(p)?,
                None => default_floorplan(),
            };
            let sc = match (&scenario, &name) {
                (Some(p), _) => Scenario::parse(&read(p)?)?,
                (None, Some(n)) => builtin(n)?,
                (None, None) => return Err(Failure::Usage("need --scenario or --builtin".into())),
            };
            let s = simulate(&fp, &sc, seed)?;
            write(&out.join("floorplan.txt"), &fp.to_text())?;
            write(&out.join("log.txt"), &s.log.to_text())?;
            write(
                &out.join("truth.txt"),
                &write_trajectory(&s.truth.poses, &s.truth.times),
            )?;
            if let Some(n) = test_points {
                let pts = sim::test_points(&fp, &sc.radio, n, sim::sub_seed(seed, 4));
                let (scans, truth) = scans_text(&pts);
                write(&out.join("test_scans.txt"), &scans)?;
                write(&out.join("test_truth.txt"), &truth)?;
            }
            if let Some(spacing) = grid_survey {
                if !(spacing > 0.0) {
                    return Err(Failure::Usage(
                        "--grid-survey spacing must be positive".into(),
                    ));
                }
                let pts = sim::grid_survey(&fp, &sc.radio, spacing, sim::sub_seed(seed, 5));
                let points: Vec<SurveyPoint> = pts
                    .iter()
                    .flat_map(|(p, scan)| {
                        let room = fp.containing_room(p);
                        scan.iter().map(move |o| SurveyPoint {
                            t: o.t,
                            position: *p,
                            ap: o.ap.clone(),
                            rssi: o.rssi,
                            room,
                        })
                    })
                    .collect();
                write(&out.join("grid_points.txt"), &write_survey_points(&points))?;
            }
            println!("steps,{}", s.log.steps.len());
            println!("duration,{}", fmt6(s.truth.duration()));
        }
        Cmd::Pf1 {
            floorplan,
            log,
            out,
            clouds,
            tuning,
        } => {
            let fp = load_floorplan(&floorplan)?;
            let log = load_log(&log)?;
            let cfg = pipeline_config(&tuning)?;
            let start = log.start_hint()?;
            let mut fc = cfg.pf1();
            fc.keep_clouds = clouds;
            let r = run_filter(
                &log.steps,
                &start,
                &fp,
                &fc,
                &ConstraintSet::walls_only(&fp),
                pfsurvey::filter::sub_seed(cfg.seed, 11),
            )?;
            let mut text = write_trajectory(&r.poses, &r.times);
            for (e, c) in &r.clouds {
                text.push_str(&write_cloud(*e, c));
            }
            write(&out, &text)?;
        }
        Cmd::Straight { log, out, tuning } => {
            let log = load_log(&log)?;
            let cfg = pipeline_config(&tuning)?;
            let flags = detect_straight_steps(&log.steps, &cfg.straight);
            write(&out, &write_straight(&flags))?;
            println!("straight_steps,{}", flags.iter().filter(|f| **f).count());
        }
        Cmd::Loops {
            log,
            traj,
            out,
            tuning,
        } => {
            let log = load_log(&log)?;
            let traj = parse_trajectory(&read(&traj)?)?;
            let cfg = pipeline_config(&tuning)?;
            let positions: Vec<Point> = traj.poses.iter().map(|p| p.position()).collect();
            let rep = detect_loop_closures(&positions, &traj.times, &log.mags, &cfg.validation)?;
            write(&out, &write_closures(&rep.accepted, &rep.rejected))?;
            println!("accepted,{}", rep.accepted.len());
            println!("rejected,{}", rep.rejected.len());
        }
        Cmd::Survey {
            floorplan,
            log,
            out,
            tuning,
        } => {
            let fp = load_floorplan(&floorplan)?;
            let log = load_log(&log)?;
            let cfg = pipeline_config(&tuning)?;
            let s = run_pfsurvey(&log, &fp, &cfg)?;
            let d = &s.diagnostics;
            write(
                &out.join("pf1.txt"),
                &write_trajectory(&d.pf1.poses, &d.pf1.times),
            )?;
            write(&out.join("straight.txt"), &write_straight(&d.straight))?;
            write(
                &out.join("closures.txt"),
                &write_closures(&d.closures.accepted, &d.closures.rejected),
            )?;
            write(
                &out.join("trajectory.txt"),
                &write_trajectory(&s.trajectory.poses, &s.trajectory.times),
            )?;
            write(&out.join("rooms.txt"), &write_rooms(&s.trajectory.rooms))?;
            write(&out.join("points.txt"), &write_survey_points(&s.points))?;
            println!("epochs,{}", s.trajectory.poses.len());
            println!("closures,{}", d.closures.accepted.len());
            println!("survey_points,{}", s.points.len());
        }
        Cmd::Map {
            points,
            floorplan,
            out,
            gp,
        } => {
            let fp = load_floorplan(&floorplan)?;
            let pts = parse_survey_points(&read(&points)?)?;
            let maps = build_maps(&pts, &gp.params(), &fp.bounds)?;
            write(&out, &write_maps(maps.iter().map(|m| &m.grid)))?;
            println!("maps,{}", maps.len());
        }
        Cmd::Compare { a, b, out, ap } => {
            let a = parse_maps(&read(&a)?)?;
            let b = parse_maps(&read(&b)?)?;
            let mut text = String::new();
            let mut any = false;
            for ma in &a {
                if ap.as_deref().is_some_and(|id| ma.ap.0 != id) {
                    continue;
                }
                let Some(mb) = b.iter().find(|m| m.ap == ma.ap) else {
                    continue;
                };
                let r = compare_maps(ma, mb)?;
                any = true;
                text.push_str(&format!("# ap {}\n", ma.ap));
                text.push_str(&write_comparison(&r));
                println!("median,{},{}", ma.ap, fmt6(r.median().unwrap_or(0.0)));
            }
            if !any {
                return Err(
                    Error::Invalid("no access point appears in both map files".into()).into(),
                );
            }
            write(&out, &text)?;
        }
        Cmd::Position {
            maps,
            scans,
            out,
            sigma_n,
        } => {
            let maps = parse_maps(&read(&maps)?)?;
            let log = load_log(&scans)?;
            let mut text = String::new();
            for (t, scan) in group_scans(&log.wifi) {
                let (cell, p) = position_one_shot(&maps, scan, sigma_n)?;
                text.push_str(&format!(
                    "est,{},{},{},{cell}\n",
                    fmt6(t),
                    fmt6(p.x),
                    fmt6(p.y)
                ));
            }
            write(&out, &text)?;
        }
        Cmd::Eval {
            est,
            truth,
            floorplan,
            rooms,
            out,
        } => {
            let fp = load_floorplan(&floorplan)?;
            let est = parse_trajectory(&read(&est)?)?;
            let truth = parse_trajectory(&read(&truth)?)?;
            let ev = evaluate_trajectory(&est.poses, &truth.poses, &fp)?;
            let mut text = String::new();
            for (p, q) in ev.quantiles() {
                text.push_str(&format!("quantile,{},{}\n", fmt6(p), fmt6(q)));
            }
            let acc = match rooms {
                Some(r) => room_accuracy(&parse_rooms(&read(&r)?)?, &truth.poses, &fp)?,
                None => ev.room_accuracy,
            };
            text.push_str(&format!("room_accuracy,{}\n", fmt6(acc)));
            print!("{text}");
            if let Some(o) = out {
                write(&o, &text)?;
            }
        }
        Cmd::Plot {
            floorplan,
            out,
            traj,
            closures,
            cloud,
            map,
            ap,
        } => {
            let fp = load_floorplan(&floorplan)?;
            let mut layers = plot::Layers::default();
            for t in &traj {
                layers.trajectories.push(parse_trajectory(&read(t)?)?);
            }
            if let Some(c) = closures {
                let text = read(&c)?;
                layers.closures = parse_closures(&text)?;
                layers.rejected = plot::parse_rejected(&text)?;
                if layers.trajectories.is_empty() {
                    return Err(Failure::Usage(
                        "--closures needs a --traj to draw on".into(),
                    ));
                }
            }
            if let Some(c) = cloud {
                layers.cloud = plot::parse_cloud(&read(&c)?)?;
            }
            if let Some(m) = map {
                let maps = parse_maps(&read(&m)?)?;
                let chosen = match &ap {
                    Some(id) => maps.into_iter().find(|g| g.ap.0 == *id),
                    None => maps.into_iter().next(),
                };
                layers.map = Some(
                    chosen.ok_or_else(|| Error::Invalid("access point not in map file".into()))?,
                );
            }
            write(&out, &plot::render(&fp, &layers))?;
        }
    }
    Ok(())
}

/// Test scans as a wifi-only log (timestamp = point index) and their true
/// positions as `truth_point,<i>,<x>,<y>`.
fn scans_text(pts: &[(Point, Vec<WifiObservation>)]) -> (String, String) {
    let mut scans = String::new();
    let mut truth = String::new();
    for (i, (p, obs)) in pts.iter().enumerate() {
        for o in obs {
            scans.push_str(&format!(
                "wifi,{},{},{}\n",
                fmt6(i as f64),
                o.ap,
                fmt6(o.rssi)
            ));
        }
        truth.push_str(&format!("truth_point,{i},{},{}\n", fmt6(p.x), fmt6(p.y)));
    }
    (scans, truth)
}

/// Consecutive observations with equal timestamps form one scan.
fn group_scans(obs: &[WifiObservation]) -> Vec<(f64, &[WifiObservation])> {
    obs.chunk_by(|a, b| a.t == b.t)
        .map(|c| (c[0].t, c))
        .collect()
}

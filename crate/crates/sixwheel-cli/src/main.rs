//! Command-line front end for the sixwheel robot stack: run simulated
//! scenarios, train the Q-tuner, analyze lane images, and plot run logs.
//!
//! Exit codes: 0 success, 1 malformed input, 2 I/O failure. Output files are
//! written atomically (temp file in the target directory, then rename), so a
//! failed run never leaves a partial file behind.

mod plot;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use sixwheel::fuzzy::ControllerConfig;
use sixwheel::image::{GrayImage, ImageError};
use sixwheel::sim::CameraConfig;
use sixwheel::vision::{
    lane_estimate, CannyParams, HoughLine, HoughParams, LaneGeometry, VisionError,
};
use sixwheel::{run_scenario, QFile, QTuner, Scenario, SimConfig, SimWorld, TunerConfig};

#[derive(Parser)]
#[command(name = "sixwheel", about = "Six-wheeled delivery robot simulator and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario closed-loop and write the run log as CSV.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Learned parameter JSON (from `train`); its breakpoints replace
        /// the controller defaults.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Train the Q-learning tuner on a scenario and save the result.
    Train {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output JSON path for the learned parameters and Q table.
        #[arg(long)]
        out: PathBuf,
        /// Number of training episodes.
        #[arg(long, default_value_t = 200)]
        episodes: u64,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from a previously saved training state.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Detect lane boundaries in a PGM image and print the offsets.
    LaneDetect {
        /// Input image (binary or ASCII PGM).
        image: PathBuf,
        /// Detector settings JSON (canny / hough / geometry, all optional).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Write an annotated copy with detected lines and vanishing point.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a plot of a run-log CSV as a self-contained SVG.
    Plot {
        /// Run log CSV (as written by `simulate`).
        #[arg(long)]
        csv: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// What to plot.
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Scenario JSON; overlays the reference path on trajectory plots.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Reference path and driven trace in the plane.
    Trajectory,
    /// Governed speed against time.
    Speed,
    /// True and estimated body pitch against time.
    Pitch,
    /// Absolute lateral offset against time.
    Error,
}

/// Failure category; the exit code is the part the harness contract cares
/// about.
pub enum Fail {
    /// Exit 1: a file parsed but its content is invalid.
    Input(String),
    /// Exit 2: the file system said no.
    Io(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Input(_) => 1,
            Fail::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Fail::Input(m) | Fail::Io(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIXWHEEL_LOG", "error"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // malformed invocation.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            eprintln!("error: {}", fail.message());
            ExitCode::from(fail.code())
        }
    }
}

fn run(command: Command) -> Result<(), Fail> {
    match command {
        Command::Simulate { scenario, out, seed, params } => {
            cmd_simulate(&scenario, &out, seed, params.as_deref())
        }
        Command::Train { scenario, out, episodes, seed, params } => {
            cmd_train(&scenario, &out, episodes, seed, params.as_deref())
        }
        Command::LaneDetect { image, params, out } => {
            cmd_lane_detect(&image, params.as_deref(), out.as_deref())
        }
        Command::Plot { csv, out, kind, scenario } => {
            cmd_plot(&csv, &out, kind, scenario.as_deref())
        }
    }
}

fn read_file(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail::Io(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Fail> {
    let text = read_file(path)?;
    let mut sc = Scenario::from_json_str(&text).map_err(|e| Fail::Input(e.to_string()))?;
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    Ok(sc)
}

/// Writes via a temp file in the destination directory, then renames, so the
/// destination is either the old content or the complete new content.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Fail> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io_err = |e: std::io::Error| Fail::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn cmd_simulate(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    params: Option<&Path>,
) -> Result<(), Fail> {
    let sc = load_scenario(scenario_path, seed)?;
    let log = match params {
        None => run_scenario(&sc).map_err(|e| Fail::Input(e.to_string()))?,
        Some(params_path) => {
            let mut cfg = SimConfig::for_scenario(&sc);
            cfg.controller = tuned_controller(cfg.controller, params_path)?;
            let mut world =
                SimWorld::new(&sc, cfg).map_err(|e| Fail::Input(e.to_string()))?;
            world.run().map_err(|e| Fail::Input(e.to_string()))?;
            world.into_log()
        }
    };
    log::info!("{}: {} ticks simulated", sc.name, log.rows.len());
    atomic_write(out, log.to_csv_string().as_bytes())?;

    let max_lateral =
        log.rows.iter().map(|r| r.lat_off.abs()).fold(0.0f64, f64::max);
    let final_lateral = log.rows.last().map(|r| r.lat_off).unwrap_or(0.0);
    let min_obstacle =
        log.rows.iter().filter_map(|r| r.obst).fold(f64::INFINITY, f64::min);
    let max_pitch = log.rows.iter().map(|r| r.pitch.abs()).fold(0.0f64, f64::max);
    println!("max_lateral={max_lateral:.6}");
    println!("final_lateral={final_lateral:.6}");
    println!("min_obstacle_distance={min_obstacle:.6}");
    println!("max_pitch={max_pitch:.6}");
    println!("ise={:.6}", log.ise);
    Ok(())
}

/// Loads a saved training state and grafts its breakpoints onto `base`.
fn tuned_controller(base: ControllerConfig, path: &Path) -> Result<ControllerConfig, Fail> {
    let file: QFile = serde_json::from_str(&read_file(path)?)
        .map_err(|e| Fail::Input(format!("{}: {e}", path.display())))?;
    base.with_tuned_breakpoints(
        file.params.x_l1,
        file.params.x_l3,
        file.params.theta_l1,
        file.params.theta_l3,
    )
    .map_err(|e| Fail::Input(e.to_string()))
}

fn cmd_train(
    scenario_path: &Path,
    out: &Path,
    episodes: u64,
    seed: Option<u64>,
    params: Option<&Path>,
) -> Result<(), Fail> {
    if episodes < 1 {
        return Err(Fail::Input("episodes: must be at least 1".into()));
    }
    let sc = load_scenario(scenario_path, seed)?;
    let base = sc.controller.unwrap_or_default();
    let mut tuner = match params {
        None => QTuner::new(TunerConfig::default(), base, sc.seed),
        Some(params_path) => {
            let file: QFile = serde_json::from_str(&read_file(params_path)?)
                .map_err(|e| Fail::Input(format!("{}: {e}", params_path.display())))?;
            QTuner::from_snapshot(file, base, sc.seed)
        }
    }
    .map_err(|e| Fail::Input(e.to_string()))?;

    for ep in 0..episodes {
        let ise = tuner.train_episode(&sc, ep).map_err(|e| Fail::Input(e.to_string()))?;
        println!("{ep},{ise:.6}");
        log::debug!("episode {ep}: ise {ise:.6}, epsilon {:.4}", tuner.epsilon());
    }

    let snapshot = tuner.snapshot();
    let json = serde_json::to_string_pretty(&snapshot)
        .expect("training state always serializes") + "\n";
    atomic_write(out, json.as_bytes())?;

    let p = snapshot.params;
    println!("x_l1={:.6}", p.x_l1);
    println!("x_l3={:.6}", p.x_l3);
    println!("theta_l1={:.6}", p.theta_l1);
    println!("theta_l3={:.6}", p.theta_l3);
    Ok(())
}

/// Optional overrides for `lane-detect`; anything omitted falls back to the
/// defaults for the image at hand.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LaneParams {
    canny: Option<CannyParams>,
    hough: Option<HoughParams>,
    geometry: Option<LaneGeometry>,
}

fn cmd_lane_detect(
    image_path: &Path,
    params: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Fail> {
    let img = GrayImage::load_pgm(image_path).map_err(|e| match e {
        ImageError::Io(e) => Fail::Io(format!("{}: {e}", image_path.display())),
        other => Fail::Input(other.to_string()),
    })?;

    let overrides: LaneParams = match params {
        None => LaneParams::default(),
        Some(p) => serde_json::from_str(&read_file(p)?)
            .map_err(|e| Fail::Input(format!("{}: {e}", p.display())))?,
    };
    let canny = overrides.canny.unwrap_or_default();
    let hough = overrides.hough.unwrap_or_else(|| HoughParams::for_image_height(img.height));
    let geom = overrides.geometry.unwrap_or_else(|| {
        CameraConfig { img_w: img.width, img_h: img.height, ..CameraConfig::default() }
            .lane_geometry()
    });

    let cx = img.width as f64 / 2.0;
    match lane_estimate(&img, &canny, &hough, &geom) {
        Ok(est) => {
            println!(
                "{:.3},{:.3},{:.3},{:.3}",
                est.lane_center_col - cx,
                est.heading,
                est.vp_u,
                est.vp_v
            );
            if let Some(out_path) = out {
                // Re-run the line stage for the overlay; the pipeline is
                // cheap and this keeps its signature simple.
                let edges = sixwheel::vision::canny_edges(&img, &canny)
                    .map_err(|e| Fail::Input(e.to_string()))?;
                let lines = sixwheel::vision::hough_lines(&edges, &hough);
                let (l, r) =
                    sixwheel::vision::select_boundaries(&lines, img.width, img.height)
                        .map_err(|e| Fail::Input(e.to_string()))?;
                let l = sixwheel::vision::refine_boundary(&edges, &l);
                let r = sixwheel::vision::refine_boundary(&edges, &r);
                let annotated = annotate(&img, &[l, r], est.vp_u, est.vp_v);
                let mut bytes = Vec::new();
                annotated
                    .write_pgm(&mut bytes)
                    .map_err(|e| Fail::Input(e.to_string()))?;
                atomic_write(out_path, &bytes)?;
            }
        }
        Err(VisionError::BoundariesNotFound | VisionError::ParallelLines) => {
            println!("NO_BOUNDARY");
        }
        Err(e) => return Err(Fail::Input(e.to_string())),
    }
    Ok(())
}

/// Copy of the image with the two boundary lines drawn at full intensity and
/// a 3x3 block on the vanishing point.
fn annotate(img: &GrayImage, lines: &[HoughLine], vp_u: f64, vp_v: f64) -> GrayImage {
    let mut out = img.clone();
    for line in lines {
        draw_line(&mut out, line);
    }
    let (u, v) = (vp_u.round() as i64, vp_v.round() as i64);
    for dv in -1..=1 {
        for du in -1..=1 {
            let (x, y) = (u + du, v + dv);
            if x >= 0 && y >= 0 && (x as usize) < out.width && (y as usize) < out.height {
                out.set(x as usize, y as usize, 255.0);
            }
        }
    }
    out
}

/// Rasterizes rho = u cos(theta) + v sin(theta), stepping along whichever
/// image axis the line is closest to.
fn draw_line(img: &mut GrayImage, line: &HoughLine) {
    let (s, c) = line.theta_deg.to_radians().sin_cos();
    if s.abs() >= c.abs() {
        for u in 0..img.width {
            let v = (line.rho - u as f64 * c) / s;
            let v = v.round();
            if v >= 0.0 && (v as usize) < img.height {
                img.set(u, v as usize, 255.0);
            }
        }
    } else {
        for v in 0..img.height {
            let u = (line.rho - v as f64 * s) / c;
            let u = u.round();
            if u >= 0.0 && (u as usize) < img.width {
                img.set(u as usize, v, 255.0);
            }
        }
    }
}

fn cmd_plot(
    csv_path: &Path,
    out: &Path,
    kind: PlotKind,
    scenario: Option<&Path>,
) -> Result<(), Fail> {
    let text = read_file(csv_path)?;
    let overlay = match scenario {
        Some(p) => {
            let sc = load_scenario(p, None)?;
            let path = sc.build_path().map_err(|e| Fail::Input(e.to_string()))?;
            Some(path.points().iter().map(|p| (p.x, p.y)).collect::<Vec<_>>())
        }
        None => None,
    };
    let svg = plot::render(kind, &text, overlay.as_deref())?;
    atomic_write(out, svg.as_bytes())
}

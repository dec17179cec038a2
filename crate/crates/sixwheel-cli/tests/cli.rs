use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sixwheel::image::GrayImage;
use sixwheel::sim::{analytic_vanishing_point, render_lane_camera, CameraConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sixwheel"))
}

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR")))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sixwheel binary")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

#[test]
fn simulate_writes_csv_and_a_key_value_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("run.csv");
    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path("straight").to_str().unwrap(),
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_csv).unwrap();
    assert!(csv.starts_with("t,x,y,heading,lat_off,head_off,src,vl,vr,gov,obst,pitch,pitch_est,arm\n"));
    let text = stdout(&out);
    for key in ["max_lateral=", "final_lateral=", "min_obstacle_distance=", "max_pitch=", "ise="] {
        assert!(text.contains(key), "summary missing {key}:\n{text}");
    }
}

#[test]
fn simulate_missing_scenario_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        dir.path().join("nope.json").to_str().unwrap(),
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_rejects_a_bad_scenario_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name":"bad","path":{"points":[[0,0],[10,0]]},"duration_s":-5,"seed":1}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duration_s"), "stderr does not name the field: {err}");
}

#[test]
fn the_seed_flag_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_path("campus_loop");
    let run_with = |args: &[&str], out: &Path| {
        let mut all = vec!["simulate", "--scenario", sc.to_str().unwrap(), "--out"];
        all.push(out.to_str().unwrap());
        all.extend_from_slice(args);
        assert_eq!(code(&run(&all)), 0);
        std::fs::read(out).unwrap()
    };
    let a = run_with(&[], &dir.path().join("a.csv"));
    let b = run_with(&["--seed", "99"], &dir.path().join("b.csv"));
    let c = run_with(&["--seed", "99"], &dir.path().join("c.csv"));
    assert_ne!(a, b, "seed override changed nothing");
    assert_eq!(b, c, "same seed must reproduce the same bytes");
}

#[test]
fn train_with_frozen_exploration_returns_the_input_params() {
    let dir = tempfile::tempdir().unwrap();
    // Default controller breakpoints with a zero Q table and epsilon pinned
    // to zero: one episode must come back with the parameters untouched.
    let snapshot = serde_json::json!({
        "params": { "x_l1": -10.0, "x_l3": 10.0, "theta_l1": -1.0, "theta_l3": 1.0 },
        "q": vec![vec![0.0; 9]; 25],
        "config": {
            "alpha": 0.3, "gamma": 0.9,
            "epsilon": 0.0, "epsilon_decay": 0.99,
            "n_lat_bins": 5, "n_head_bins": 5,
            "delta_x": 0.5, "delta_theta": 0.05,
            "reward_gain": 1.0, "x_sat": 0.15, "theta_sat": 30.0
        }
    });
    let params_in = dir.path().join("in.json");
    std::fs::write(&params_in, snapshot.to_string()).unwrap();
    let out_json = dir.path().join("learned.json");
    let out = run(&[
        "train",
        "--scenario",
        scenario_path("s_curve").to_str().unwrap(),
        "--episodes",
        "1",
        "--params",
        params_in.to_str().unwrap(),
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().starts_with("0,"), "missing episode line: {text}");
    for key in ["x_l1=-10.000000", "x_l3=10.000000", "theta_l1=-1.000000", "theta_l3=1.000000"] {
        assert!(text.contains(key), "params changed despite frozen exploration:\n{text}");
    }
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(saved["params"]["x_l1"], serde_json::json!(-10.0));
}

#[test]
fn train_never_leaves_a_partial_file_on_an_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let out_json = dir.path().join("no-such-dir").join("learned.json");
    let out = run(&[
        "train",
        "--scenario",
        scenario_path("s_curve").to_str().unwrap(),
        "--episodes",
        "1",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!out_json.exists());
}

#[test]
fn train_requires_at_least_one_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--scenario",
        scenario_path("s_curve").to_str().unwrap(),
        "--episodes",
        "0",
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("episodes"));
}

fn quiet_camera() -> CameraConfig {
    CameraConfig { sigma_noise: 0.0, ..CameraConfig::default() }
}

fn save_render(dir: &Path, name: &str, lateral: f64, heading: f64) -> PathBuf {
    let cam = quiet_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let img = render_lane_camera(&cam, lateral, heading, &mut rng);
    let path = dir.join(name);
    img.save_pgm(&path).unwrap();
    path
}

const FINE_HOUGH: &str = r#"{"hough":{"rho_res":0.5,"theta_res":0.5,"vote_threshold":24}}"#;

fn lane_detect_line(image: &Path, params: &Path) -> Vec<f64> {
    let out = run(&["lane-detect", image.to_str().unwrap(), "--params", params.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let line = text.lines().next().expect("no output line");
    assert_ne!(line, "NO_BOUNDARY", "detector found nothing");
    line.split(',').map(|v| v.parse().expect("numeric field")).collect()
}

#[test]
fn lane_detect_recovers_the_analytic_vanishing_point() {
    let dir = tempfile::tempdir().unwrap();
    let image = save_render(dir.path(), "lane.pgm", 0.1, 3.0);
    let params = dir.path().join("params.json");
    std::fs::write(&params, FINE_HOUGH).unwrap();
    let fields = lane_detect_line(&image, &params);
    assert_eq!(fields.len(), 4);
    let (vp_u, vp_v) = analytic_vanishing_point(&quiet_camera(), 3.0);
    assert!((fields[2] - vp_u).abs() <= 2.0, "vp_u {} vs analytic {vp_u}", fields[2]);
    assert!((fields[3] - vp_v).abs() <= 2.0, "vp_v {} vs analytic {vp_v}", fields[3]);
    assert!((fields[1] - 3.0).abs() <= 0.5, "heading {} vs true 3.0", fields[1]);
}

#[test]
fn lane_detect_mirrored_image_negates_the_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    std::fs::write(&params, FINE_HOUGH).unwrap();
    let image = save_render(dir.path(), "a.pgm", 0.12, 4.0);
    let original = GrayImage::load_pgm(&image).unwrap();
    let mut mirrored = GrayImage::new(original.width, original.height);
    for y in 0..original.height {
        for x in 0..original.width {
            mirrored.set(original.width - 1 - x, y, original.get(x, y));
        }
    }
    let mirrored_path = dir.path().join("b.pgm");
    mirrored.save_pgm(&mirrored_path).unwrap();
    let a = lane_detect_line(&image, &params);
    let b = lane_detect_line(&mirrored_path, &params);
    // Each painted boundary is ~7 px wide at the bottom row and either of
    // its edges can win the vote, so the negation holds to half a stripe
    // width; a sign bug would miss by the full lane shift (~56 px).
    assert!((a[0] + b[0]).abs() <= 5.0, "lateral_px {} vs {}", a[0], b[0]);
    assert!((a[1] + b[1]).abs() <= 1.0, "heading {} vs {}", a[1], b[1]);
}

#[test]
fn lane_detect_blank_image_prints_the_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = GrayImage::new(64, 48);
    img.fill(20.0);
    let path = dir.path().join("blank.pgm");
    img.save_pgm(&path).unwrap();
    let out = run(&["lane-detect", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "NO_BOUNDARY");
}

#[test]
fn lane_detect_rejects_a_malformed_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.pgm");
    std::fs::write(&path, b"P5\n10 10\n255\nshort").unwrap();
    let out = run(&["lane-detect", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn lane_detect_annotates_a_copy_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let image = save_render(dir.path(), "lane.pgm", 0.0, 0.0);
    let params = dir.path().join("params.json");
    std::fs::write(&params, FINE_HOUGH).unwrap();
    let annotated = dir.path().join("annotated.pgm");
    let out = run(&[
        "lane-detect",
        image.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--out",
        annotated.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let fields: Vec<f64> =
        stdout(&out).lines().next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let img = GrayImage::load_pgm(&annotated).unwrap();
    assert_eq!((img.width, img.height), (200, 120));
    let (u, v) = (fields[2].round() as usize, fields[3].round() as usize);
    assert_eq!(img.get(u, v), 255.0, "vanishing point block not painted");
}

fn simulate_to(dir: &Path, scenario: &str) -> PathBuf {
    let csv = dir.join(format!("{scenario}.csv"));
    let out = run(&[
        "simulate",
        "--scenario",
        scenario_path(scenario).to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    csv
}

#[test]
fn plot_trajectory_builds_a_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_to(dir.path(), "straight");
    let svg_path = dir.path().join("run.svg");
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        svg_path.to_str().unwrap(),
        "--kind",
        "trajectory",
        "--scenario",
        scenario_path("straight").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg "));
    assert!(svg.trim_end().ends_with("</svg>"));
    // Reference path plus trace: two polylines, each with real points.
    let polylines: Vec<&str> =
        svg.match_indices("<polyline").map(|(i, _)| &svg[i..svg[i..].find("/>").unwrap() + i]).collect();
    assert_eq!(polylines.len(), 2);
    // The straight reference path has two waypoints; the driven trace logs
    // one point per tick.
    let n_points = |p: &str| {
        p.split("points=\"").nth(1).unwrap().trim_end_matches('"').split(' ').count()
    };
    assert_eq!(n_points(polylines[0]), 2);
    assert!(n_points(polylines[1]) > 100, "trace polyline nearly empty");
}

fn attr_f64(tag: &str, attr: &str) -> f64 {
    let start = tag.find(&format!("{attr}=\"")).unwrap() + attr.len() + 2;
    let end = start + tag[start..].find('"').unwrap();
    tag[start..end].parse().unwrap()
}

#[test]
fn plot_speed_touches_zero_on_the_obstacle_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_to(dir.path(), "obstacle");
    let svg_path = dir.path().join("speed.svg");
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        svg_path.to_str().unwrap(),
        "--kind",
        "speed",
    ]);
    assert_eq!(code(&out), 0);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    let zero_tag_at = svg.find("class=\"zero-line\"").expect("zero baseline missing");
    let zero_tag = &svg[svg[..zero_tag_at].rfind("<line").unwrap()..];
    let zero_tag = &zero_tag[..zero_tag.find("/>").unwrap()];
    let zero_y = attr_f64(zero_tag, "y1");

    let poly_at = svg.find("<polyline").unwrap();
    let poly = &svg[poly_at..poly_at + svg[poly_at..].find("/>").unwrap()];
    let pts = poly.split("points=\"").nth(1).unwrap().trim_end_matches('"');
    let max_y = pts
        .split(' ')
        .filter_map(|pair| pair.split(',').nth(1))
        .map(|v| v.parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        (max_y - zero_y).abs() <= 0.011,
        "speed polyline bottoms out at {max_y}, zero line at {zero_y}"
    );
}

#[test]
fn plot_rejects_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "t,x,y,heading,lat_off,head_off,src,vl,vr,gov,obst,pitch,pitch_est,arm\n")
        .unwrap();
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("x.svg").to_str().unwrap(),
        "--kind",
        "error",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no data rows"));
}

#[test]
fn plot_rejects_an_unknown_kind() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_to(dir.path(), "straight");
    let out = run(&[
        "plot",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("x.svg").to_str().unwrap(),
        "--kind",
        "sonogram",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn every_subcommand_documents_its_flags() {
    for (sub, flags) in [
        ("simulate", &["--scenario", "--out", "--seed", "--params"][..]),
        ("train", &["--scenario", "--out", "--episodes", "--seed", "--params"][..]),
        ("lane-detect", &["--params", "--out"][..]),
        ("plot", &["--csv", "--out", "--kind", "--scenario"][..]),
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{sub} --help missing {flag}:\n{text}");
        }
    }
    let out = run(&["train", "--help"]);
    assert!(stdout(&out).contains("200"), "train --help does not show the episode default");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCENARIO: &str = r#"
seed = 3
mode = "aligned"
confidence_jitter = 0.0
speed_mm_s = 40

[grid_b]
origin = [95.0, 95.0, 20.0]
size = [200.0, 200.0, 400.0]

[[legs]]
id = "floor"
face = "z_min"
waypoints = [[25.0, 25.0], [175.0, 25.0], [175.0, 175.0], [25.0, 175.0]]
frames = 60

[[legs]]
id = "wall"
face = "x_max"
waypoints = [[25.0, 50.0], [175.0, 50.0], [175.0, 350.0]]
frames = 60
closed = false
"#;

const GRID_B: &str = "95,95,20,200,200,400";
const CAMERAS: [&str; 5] = ["cam0", "cam1", "cam2", "cam3", "top"];

fn gridscope(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gridscope"));
    cmd.args(args).env_remove("GRIDSCOPE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gridscope(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("scenario.toml"), SCENARIO).unwrap();
        Run { dir }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn simulate(&self) {
        ok(&["simulate", "--scenario", s(&self.p("scenario.toml")), "--out-dir", s(&self.p("sim"))]);
        ok(&["calibrate", "--picks", s(&self.p("sim/picks.json")), "-o", s(&self.p("rig.calib"))]);
    }

    fn detection_args(&self) -> Vec<String> {
        CAMERAS
            .iter()
            .flat_map(|c| ["--detections".to_string(), s(&self.p(&format!("sim/detections_{c}.csv"))).to_string()])
            .collect()
    }

    fn reconstruct(&self, extra: &[&str]) -> Output {
        let calib = self.p("rig.calib");
        let track = self.p("track.csv");
        let report = self.p("stats.json");
        let mut args = vec!["reconstruct", "--calibration", s(&calib), "-o", s(&track), "--report", s(&report)];
        let dets = self.detection_args();
        args.extend(dets.iter().map(String::as_str));
        args.extend(extra);
        gridscope(&args, &[])
    }
}

#[test]
fn noiseless_pipeline_scores_zero() {
    let r = Run::new();
    r.simulate();
    assert!(r.reconstruct(&[]).status.success());
    let stats: Value = serde_json::from_str(&fs::read_to_string(r.p("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["points"], 120);
    assert_eq!(stats["plot_rate"], 1.0);

    let out = ok(&[
        "evaluate",
        "--track",
        s(&r.p("track.csv")),
        "--segments",
        s(&r.p("sim/segments.csv")),
        "--grid-b",
        GRID_B,
        "--stats",
        s(&r.p("stats.json")),
        "--json",
    ]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["overall_mm"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["plot_rate"], 1.0);
    assert_eq!(v["segments"].as_array().unwrap().len(), 2);
}

#[test]
fn table_and_json_agree() {
    let r = Run::new();
    r.simulate();
    assert!(r.reconstruct(&[]).status.success());
    let (track, segs, report) = (r.p("track.csv"), r.p("sim/segments.csv"), r.p("eval.json"));
    let table = ok(&["evaluate", "--track", s(&track), "--segments", s(&segs), "--grid-b", GRID_B, "--report", s(&report)]);
    assert!(table.contains("overall accuracy"));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["segments"][0]["segment_id"], "floor");
    assert!(table.contains(&format!("{:.3} mm", v["overall_mm"].as_f64().unwrap())));
}

#[test]
fn simulate_is_deterministic_and_seed_overrides() {
    let r = Run::new();
    let sc = r.p("scenario.toml");
    for (dir, seed) in [("a", None), ("b", None), ("c", Some("99"))] {
        let out = r.p(dir);
        let mut args = vec!["simulate", "--scenario", s(&sc), "--out-dir", s(&out)];
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        ok(&args);
    }
    for f in ["picks.json", "truth.csv", "segments.csv", "detections_cam0.csv", "detections_top.csv", "manifest.json"] {
        assert_eq!(fs::read(r.p("a").join(f)).unwrap(), fs::read(r.p("b").join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(r.p("c/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn thread_cap_does_not_change_output() {
    let r = Run::new();
    r.simulate();
    let mut tracks = Vec::new();
    for n in ["1", "4"] {
        let out = r.p(&format!("track{n}.csv"));
        let calib = r.p("rig.calib");
        let mut args = vec!["reconstruct", "--calibration", s(&calib), "-o", s(&out)];
        let dets = r.detection_args();
        args.extend(dets.iter().map(String::as_str));
        let o = gridscope(&args, &[("GRIDSCOPE_THREADS", n)]);
        assert!(o.status.success());
        tracks.push(fs::read(&out).unwrap());
    }
    assert_eq!(tracks[0], tracks[1]);
    let o = gridscope(&["simulate", "--help"], &[("GRIDSCOPE_THREADS", "zero")]);
    assert_eq!(code(&o), 0, "help never touches the pool");
    let o = gridscope(&["simulate", "--scenario", "x"], &[("GRIDSCOPE_THREADS", "0")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_values_apply_and_flags_win() {
    let r = Run::new();
    r.simulate();
    let dets: Vec<String> = CAMERAS.iter().map(|c| format!("\"sim/detections_{c}.csv\"")).collect();
    let cfg = format!(
        "calibration = \"rig.calib\"\ndetections = [{}]\noutput = \"from_config.csv\"\nz_threshold_mm = 30.0\n",
        dets.join(", ")
    );
    fs::write(r.p("run.toml"), cfg).unwrap();
    ok(&["reconstruct", "--config", s(&r.p("run.toml"))]);
    assert!(r.p("from_config.csv").is_file(), "config paths resolve next to the config");
    ok(&["reconstruct", "--config", s(&r.p("run.toml")), "-o", s(&r.p("from_flag.csv"))]);
    assert!(r.p("from_flag.csv").is_file());
    assert_eq!(fs::read(r.p("from_config.csv")).unwrap(), fs::read(r.p("from_flag.csv")).unwrap());

    fs::write(r.p("bad.toml"), "z_threshold = 3\n").unwrap();
    let o = gridscope(&["reconstruct", "--config", s(&r.p("bad.toml"))], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validation_failures_exit_2() {
    let r = Run::new();
    r.simulate();
    let o = r.reconstruct(&[]);
    assert!(o.status.success());

    fs::remove_file(r.p("rig.calib")).unwrap();
    let o = r.reconstruct(&[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibration"));

    let picks = fs::read_to_string(r.p("sim/picks.json")).unwrap();
    fs::write(r.p("bad_picks.json"), picks.replacen("\"side:0\"", "\"side:7\"", 1)).unwrap();
    let o = gridscope(&["calibrate", "--picks", s(&r.p("bad_picks.json")), "-o", s(&r.p("x.calib"))], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cameras[0].role"), "{}", String::from_utf8_lossy(&o.stderr));

    let o = gridscope(&["evaluate", "--no-such-flag"], &[]);
    assert_eq!(code(&o), 2);
    let o = gridscope(&["evaluate", "--track", "t.csv"], &[]);
    assert_eq!(code(&o), 2);
    let o = gridscope(&["reconstruct", "--pair-strategy", "worst"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_documents_every_flag() {
    let expected: [(&str, &[&str]); 6] = [
        ("calibrate", &["--picks", "--output", "--report", "--json", "--config"]),
        (
            "reconstruct",
            &[
                "--calibration",
                "--detections",
                "--output",
                "--sync-tolerance-ms",
                "--sync-reference",
                "--z-threshold-mm",
                "--pair-strategy",
                "--vertical-correction",
                "--depth-correction",
                "--strict",
                "--report",
                "--json",
            ],
        ),
        (
            "evaluate",
            &["--track", "--segments", "--grid-b", "--calibration", "--px-per-mm", "--stats", "--distance-mode"],
        ),
        ("detmetrics", &["--predictions", "--ground-truth", "--iou-threshold", "--report", "--json"]),
        ("simulate", &["--scenario", "--out-dir", "--seed", "--report", "--json"]),
        ("export", &["--track", "--format", "--output", "--calibration", "--grid-b"]),
    ];
    for (cmd, flags) in expected {
        let help = ok(&[cmd, "--help"]);
        for f in flags {
            let line = help.lines().find(|l| l.contains(f)).unwrap_or_else(|| panic!("{cmd}: {f} missing"));
            // every flag line carries a description after the flag itself
            assert!(line.trim().len() > f.len() + 12, "{cmd}: {f} undocumented: `{line}`");
        }
    }
}

#[test]
fn detmetrics_perfect_detector() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.csv");
    let pr = dir.path().join("pred.csv");
    fs::write(&gt, "frame_id,u_min,v_min,u_max,v_max\nf0,0,0,10,10\nf1,5,5,25,30\n").unwrap();
    fs::write(
        &pr,
        "camera_id,frame_index,frame_id,u_min,v_min,u_max,v_max,confidence\ncam0,0,f0,0,0,10,10,0.9\ncam0,1,f1,5,5,25,30,0.8\n",
    )
    .unwrap();
    let v: Value = serde_json::from_str(&ok(&["detmetrics", "--predictions", s(&pr), "--ground-truth", s(&gt), "--json"])).unwrap();
    for k in ["precision", "recall", "map50", "map50_95", "fitness"] {
        assert_eq!(v[k], 1.0, "{k}");
    }
    fs::write(&gt, "frame_id,u_min,v_min,u_max,v_max\n").unwrap();
    let o = gridscope(&["detmetrics", "--predictions", s(&pr), "--ground-truth", s(&gt)], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let header = "timestamp_ms,x_mm,y_mm,z_mm,cam_a,cam_b,z_disagreement_mm,depth_corrected\n";
    let one = dir.path().join("one.csv");
    fs::write(&one, format!("{header}0,10.000000,20.000000,30.000000,cam0,cam1,0.000000,true\n")).unwrap();
    let ply = ok(&["export", "--track", s(&one), "--format", "ply"]);
    assert!(ply.contains("element vertex 1\n"));
    assert!(ply.ends_with("10.000000 20.000000 30.000000\n"));
    let out = dir.path().join("plots/one.svg");
    ok(&["export", "--track", s(&one), "-o", s(&out)]);
    let svg = fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("panel-yz"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, header).unwrap();
    let o = gridscope(&["export", "--track", s(&empty), "--format", "svg"], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
    let o = gridscope(&["export", "--track", s(&one), "--format", "obj"], &[]);
    assert_eq!(code(&o), 2);
}

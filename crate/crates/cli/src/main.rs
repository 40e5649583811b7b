//! `gridscope` command-line front end.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gridscope::calibration::{calibrate, load_calibration, save_calibration, MarkerPicks};
use gridscope::detio::{parse_detections, ParseMode, DEFAULT_SYNC_TOLERANCE_MS};
use gridscope::detmetrics::{evaluate_detections, parse_ground_truth, parse_predictions};
use gridscope::evaluate::{evaluate, parse_segments};
use gridscope::export::export_track;
use gridscope::fusion::{parse_track, reconstruct, write_track};
use gridscope::numfmt::json_pretty;
use gridscope::synthrig::write_outputs;
use gridscope::{
    apply_homography, generate_scenario, Calibration, DistanceMode, ExportFormat, FusionConfig,
    FusionStats, GridBox, PairStrategy, SimScenario, SyncReference, WorldPoint3D,
};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Validation(String),
    /// Anything else: exit code 1.
    Internal(String),
}

impl From<gridscope::Error> for CliError {
    fn from(e: gridscope::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Reads an input file. A missing or unreadable input is the caller's
/// mistake, so it counts as a validation error.
pub(crate) fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

#[derive(Parser, Debug)]
#[command(name = "gridscope", version, about = "Reconstruct and score 3D tracks from a calibrated multi-camera grid rig")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a calibration file from marker picks.
    Calibrate(CalibrateArgs),
    /// Fuse per-camera detections into a 3D track.
    Reconstruct(ReconstructArgs),
    /// Score a track against the grid faces it should lie on.
    Evaluate(EvaluateArgs),
    /// Detection precision, recall and mAP against ground-truth boxes.
    Detmetrics(DetmetricsArgs),
    /// Generate a synthetic rig, path and detections from a scenario file.
    Simulate(SimulateArgs),
    /// Write a track as SVG projections, a PLY point cloud or CSV.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Also write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Print the JSON report on stdout instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Marker picks (JSON) including the rig dimensions.
    #[arg(long, value_name = "FILE")]
    picks: Option<PathBuf>,
    /// Calibration file to write.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Calibration file produced by `calibrate`.
    #[arg(long, value_name = "FILE")]
    calibration: Option<PathBuf>,
    /// Detection CSV; repeat for each camera.
    #[arg(long = "detections", value_name = "FILE")]
    detections: Vec<PathBuf>,
    /// Track CSV to write.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Maximum timestamp offset when grouping frames [default: 25].
    #[arg(long, value_name = "MS")]
    sync_tolerance_ms: Option<i64>,
    /// `earliest`, `union`, or a camera id [default: earliest].
    #[arg(long, value_name = "REF")]
    sync_reference: Option<String>,
    /// Reject a pair when its height estimates differ by more than this [default: 30].
    #[arg(long, value_name = "MM")]
    z_threshold_mm: Option<f64>,
    /// `best` or `average_all` [default: best].
    #[arg(long, value_name = "STRATEGY")]
    pair_strategy: Option<String>,
    /// Apply the vertical depth correction [default: true].
    #[arg(long, value_name = "BOOL")]
    vertical_correction: Option<bool>,
    /// Apply the top-camera horizontal depth correction [default: true].
    #[arg(long, value_name = "BOOL")]
    depth_correction: Option<bool>,
    /// Abort on the first malformed detection row instead of skipping it.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Track CSV produced by `reconstruct`.
    #[arg(long, value_name = "FILE")]
    track: Option<PathBuf>,
    /// Segment CSV naming the face each time span should lie on.
    #[arg(long, value_name = "FILE")]
    segments: Option<PathBuf>,
    /// Inner box as `ox,oy,oz,w,d,h` in mm.
    #[arg(long, value_name = "OX,OY,OZ,W,D,H", value_delimiter = ',')]
    grid_b: Option<Vec<f64>>,
    /// Calibration file; supplies px_per_mm when the flag is not given.
    #[arg(long, value_name = "FILE")]
    calibration: Option<PathBuf>,
    /// Model pixels per mm for the px figures [default: calibration value or 1].
    #[arg(long, value_name = "X")]
    px_per_mm: Option<f64>,
    /// Stats JSON from `reconstruct --report`, enables plot rates.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
    /// `plane` or `bounded` [default: plane].
    #[arg(long, value_name = "MODE")]
    distance_mode: Option<String>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct DetmetricsArgs {
    /// Predictions CSV.
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Ground-truth CSV.
    #[arg(long, value_name = "FILE")]
    ground_truth: Option<PathBuf>,
    /// IoU threshold for precision and recall [default: 0.5].
    #[arg(long, value_name = "X")]
    iou_threshold: Option<f64>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario TOML.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Directory for the generated files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Track CSV.
    #[arg(long, value_name = "FILE")]
    track: Option<PathBuf>,
    /// `svg`, `ply` or `csv` [default: svg].
    #[arg(long, value_name = "FORMAT")]
    format: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Calibration file; its grid A outline frames the SVG.
    #[arg(long, value_name = "FILE")]
    calibration: Option<PathBuf>,
    /// Inner box to outline, `ox,oy,oz,w,d,h` in mm.
    #[arg(long, value_name = "OX,OY,OZ,W,D,H", value_delimiter = ',')]
    grid_b: Option<Vec<f64>>,
}

fn required<T>(flag: Option<T>, cfg: Option<T>, name: &str) -> CliResult<T> {
    flag.or(cfg).ok_or_else(|| invalid(format!("missing --{name} (flag or config `{}`)", name.replace('-', "_"))))
}

fn grid_b_from(v: &[f64]) -> CliResult<GridBox> {
    let [ox, oy, oz, w, d, h] = v else {
        return Err(invalid(format!("grid_b needs 6 numbers (ox,oy,oz,w,d,h), got {}", v.len())));
    };
    Ok(GridBox::new(WorldPoint3D::new(*ox, *oy, *oz), *w, *d, *h)?)
}

fn emit(report: &ReportArgs, cfg_report: Option<PathBuf>, table: String, json: String) -> CliResult {
    if report.json {
        print!("{json}");
    } else {
        print!("{table}");
    }
    if let Some(path) = report.report.clone().or(cfg_report) {
        write_output(&path, &json)?;
    }
    Ok(())
}

fn load_calib(path: &Path) -> CliResult<Calibration> {
    if !path.is_file() {
        return Err(invalid(format!("calibration file {} does not exist", path.display())));
    }
    Ok(load_calibration(path)?)
}

fn cmd_calibrate(a: CalibrateArgs, cfg: RunConfig) -> CliResult {
    let picks_path = required(a.picks, cfg.picks, "picks")?;
    let output = required(a.output, cfg.output, "output")?;
    let picks = MarkerPicks::parse(&read_input(&picks_path)?)?;
    let calib = calibrate(&picks)?;
    save_calibration(&output, &calib).map_err(|e| CliError::Internal(e.to_string()))?;

    let mut table = format!("{:<8} {:<7} {:>5} {:>10} {:>10} {:>12}\n", "camera", "role", "areas", "mde_h", "mde_v", "corner_err");
    let mut cams = Vec::new();
    let mut worst = 0.0f64;
    for p in &calib.profiles {
        let mut err = 0.0f64;
        for s in &p.sub_areas {
            let (w, h) = (s.canonical_width, s.canonical_height);
            let target = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
            for (c, (tu, tv)) in s.src.corners().iter().zip(target) {
                let m = apply_homography(&s.homography, *c)?;
                err = err.max((m.a - tu).hypot(m.b - tv));
            }
        }
        worst = worst.max(err);
        table += &format!(
            "{:<8} {:<7} {:>5} {:>10.4} {:>10.4} {:>12.3e}\n",
            p.camera_id,
            p.role.to_string(),
            p.sub_areas.len(),
            p.mde_h,
            p.mde_v,
            err
        );
        cams.push(json!({
            "camera_id": p.camera_id,
            "role": p.role.to_string(),
            "sub_areas": p.sub_areas.len(),
            "mde_h": p.mde_h,
            "mde_v": p.mde_v,
            "max_corner_error_px": err,
        }));
    }
    table += &format!("wrote {}\n", output.display());
    let json = json_pretty(&json!({
        "calibration": output.display().to_string(),
        "cameras": cams,
        "max_corner_error_px": worst,
    }));
    emit(&a.report, cfg.report, table, json)
}

fn parse_sync(s: &str) -> SyncReference {
    match s {
        "earliest" => SyncReference::EarliestCamera,
        "union" => SyncReference::Union,
        id => SyncReference::Camera(id.to_string()),
    }
}

fn cmd_reconstruct(a: ReconstructArgs, cfg: RunConfig) -> CliResult {
    let calib = load_calib(&required(a.calibration, cfg.calibration, "calibration")?)?;
    let det_paths = if a.detections.is_empty() { cfg.detections.unwrap_or_default() } else { a.detections };
    if det_paths.is_empty() {
        return Err(invalid("missing --detections (flag or config `detections`)"));
    }
    let output = required(a.output, cfg.output, "output")?;
    let tolerance = a.sync_tolerance_ms.or(cfg.sync_tolerance_ms).unwrap_or(DEFAULT_SYNC_TOLERANCE_MS);
    if tolerance < 0 {
        return Err(invalid(format!("sync_tolerance_ms must be >= 0, got {tolerance}")));
    }
    let sync = parse_sync(a.sync_reference.or(cfg.sync_reference).as_deref().unwrap_or("earliest"));
    let mut fc = FusionConfig::default();
    if let Some(z) = a.z_threshold_mm.or(cfg.z_threshold_mm) {
        if !(z > 0.0 && z.is_finite()) {
            return Err(invalid(format!("z_threshold_mm must be positive, got {z}")));
        }
        fc.z_threshold_mm = z;
    }
    if let Some(s) = a.pair_strategy.or(cfg.pair_strategy) {
        fc.pair_strategy = s.parse::<PairStrategy>().map_err(invalid)?;
    }
    if let Some(v) = a.vertical_correction.or(cfg.vertical_correction) {
        fc.vertical_correction = v;
    }
    if let Some(v) = a.depth_correction.or(cfg.depth_correction) {
        fc.depth_correction = v;
    }
    let mode = if a.strict || cfg.strict.unwrap_or(false) { ParseMode::Strict } else { ParseMode::Lenient };

    let mut dets = Vec::new();
    let mut skipped = 0usize;
    for p in &det_paths {
        let text = read_input(p)?;
        let parsed = parse_detections(text.as_bytes(), mode).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        for e in &parsed.skipped {
            eprintln!("warning: {}: skipped row: {e}", p.display());
        }
        skipped += parsed.skipped.len();
        dets.extend(parsed.detections);
    }

    let (track, stats) = reconstruct(&calib, &dets, tolerance, &sync, &fc);
    let mut buf = Vec::new();
    write_track(&mut buf, &track)?;
    write_output(&output, &String::from_utf8(buf).expect("ascii track"))?;

    let rate = gridscope::evaluate::plot_rate(&stats).ok();
    let table = stats_table(&stats, rate, skipped, &output);
    let json = json_pretty(&json!({
        "track": output.display().to_string(),
        "points": track.len(),
        "skipped_rows": skipped,
        "plot_rate": rate,
        "stats": stats,
    }));
    emit(&a.report, cfg.report, table, json)
}

fn stats_table(s: &FusionStats, rate: Option<f64>, skipped: usize, output: &Path) -> String {
    let rows = [
        ("bundles", s.bundles_total),
        ("with side detection", s.with_any_side_detection),
        ("with two side detections", s.with_two_side_detections),
        ("with adjacent pair", s.with_adjacent_pair),
        ("plotted", s.plotted),
        ("rejected (z disagreement)", s.rejected_by_z),
        ("rejected (outside area)", s.rejected_outside),
        ("missing top camera", s.missing_top),
    ];
    let mut t = String::new();
    for (k, v) in rows {
        t += &format!("{k:<26} {v:>8}\n");
    }
    t += &format!("{:<26} {:>8}\n", "skipped csv rows", skipped);
    match rate {
        Some(r) => t += &format!("{:<26} {:>8.4}\n", "plot rate", r),
        None => t += &format!("{:<26} {:>8}\n", "plot rate", "n/a"),
    }
    t += &format!("wrote {}\n", output.display());
    t
}

fn read_stats(path: &Path) -> CliResult<FusionStats> {
    let v: serde_json::Value = serde_json::from_str(&read_input(path)?)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    // accept a bare stats object or a `reconstruct` report
    let inner = v.get("stats").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(a: EvaluateArgs, cfg: RunConfig) -> CliResult {
    let track_path = required(a.track, cfg.track, "track")?;
    let seg_path = required(a.segments, cfg.segments, "segments")?;
    let grid_b = grid_b_from(&required(a.grid_b, cfg.grid_b.map(|g| g.to_vec()), "grid-b")?)?;
    let px_per_mm = match (a.px_per_mm.or(cfg.px_per_mm), a.calibration.or(cfg.calibration)) {
        (Some(v), _) => v,
        (None, Some(c)) => load_calib(&c)?.rig.px_per_mm,
        (None, None) => 1.0,
    };
    if !(px_per_mm > 0.0 && px_per_mm.is_finite()) {
        return Err(invalid(format!("px_per_mm must be positive, got {px_per_mm}")));
    }
    let mode = match a.distance_mode.or(cfg.distance_mode).as_deref().unwrap_or("plane") {
        "plane" => DistanceMode::Plane,
        "bounded" => DistanceMode::Bounded,
        other => return Err(invalid(format!("unknown distance mode `{other}` (plane | bounded)"))),
    };
    let stats = a.stats.or(cfg.stats).map(|p| read_stats(&p)).transpose()?;
    let track = parse_track(read_input(&track_path)?.as_bytes())?;
    let segments = parse_segments(read_input(&seg_path)?.as_bytes())?;
    let r = evaluate(&track, &segments, &grid_b, px_per_mm, mode, stats)?;
    emit(&a.report, cfg.report, r.to_table(), r.to_json())
}

fn cmd_detmetrics(a: DetmetricsArgs, cfg: RunConfig) -> CliResult {
    let preds_path = required(a.predictions, cfg.predictions, "predictions")?;
    let gt_path = required(a.ground_truth, cfg.ground_truth, "ground-truth")?;
    let iou = a.iou_threshold.or(cfg.iou_threshold).unwrap_or(0.5);
    let preds = parse_predictions(read_input(&preds_path)?.as_bytes())?;
    let gts = parse_ground_truth(read_input(&gt_path)?.as_bytes())?;
    let r = evaluate_detections(&preds, &gts, iou)?;
    emit(&a.report, cfg.report, r.to_table(), r.to_json())
}

fn cmd_simulate(a: SimulateArgs, cfg: RunConfig) -> CliResult {
    let scenario_path = required(a.scenario, cfg.scenario, "scenario")?;
    let out_dir = required(a.out_dir, cfg.out_dir, "out-dir")?;
    let mut scenario = SimScenario::from_toml(&read_input(&scenario_path)?)?;
    if let Some(seed) = a.seed.or(cfg.seed) {
        scenario.seed = seed;
    }
    let g = generate_scenario(&scenario)?;
    let written = write_outputs(&g, &out_dir).map_err(|e| CliError::Internal(e.to_string()))?;

    let mut table = format!("seed {}  frames {}\n", scenario.seed, g.truth.len());
    let mut cams = Vec::new();
    for (id, dets) in &g.detections {
        table += &format!("{id:<8} {:>8} detections\n", dets.len());
        cams.push(json!({"camera_id": id, "detections": dets.len()}));
    }
    for p in &written {
        table += &format!("wrote {}\n", p.display());
    }
    let json = json_pretty(&json!({
        "seed": scenario.seed,
        "frames": g.truth.len(),
        "cameras": cams,
        "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }));
    emit(&a.report, cfg.report, table, json)
}

fn cmd_export(a: ExportArgs, cfg: RunConfig) -> CliResult {
    let track_path = required(a.track, cfg.track, "track")?;
    let format: ExportFormat = a.format.or(cfg.format).as_deref().unwrap_or("svg").parse().map_err(invalid)?;
    let grid_a = match a.calibration.or(cfg.calibration) {
        Some(p) => load_calib(&p)?.rig.grid_a,
        None => GridBox::grid_a_default(),
    };
    let grid_b = a.grid_b.or(cfg.grid_b.map(|g| g.to_vec())).map(|v| grid_b_from(&v)).transpose()?;
    let track = parse_track(read_input(&track_path)?.as_bytes())?;
    let text = export_track(&track, format, &grid_a, grid_b.as_ref())?;
    match a.output.or(cfg.output) {
        Some(p) => write_output(&p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn init_threads() -> CliResult {
    let Ok(v) = std::env::var("GRIDSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("GRIDSCOPE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> CliResult {
    init_threads()?;
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, cfg),
        Command::Reconstruct(a) => cmd_reconstruct(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Detmetrics(a) => cmd_detmetrics(a, cfg),
        Command::Simulate(a) => cmd_simulate(a, cfg),
        Command::Export(a) => cmd_export(a, cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}

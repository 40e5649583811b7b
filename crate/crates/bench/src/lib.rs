//! Shared fixtures for the benchmarks in `benches/`.

use gridscope::detmetrics::{GroundTruthBox, Prediction};
use gridscope::{calibrate, generate_scenario, BBox, Calibration, GeneratedScenario, SimScenario};

/// A floor-and-wall tour with mild noise and dropout.
pub fn tour(frames_per_leg: u64, pinhole: bool) -> SimScenario {
    let mode = if pinhole { "pinhole" } else { "aligned" };
    let text = format!(
        r#"
seed = 17
mode = "{mode}"
noise_px = 0.5
dropout = 0.05
timestamp_jitter_ms = 3

[grid_b]
origin = [95.0, 95.0, 20.0]
size = [200.0, 200.0, 400.0]

[[legs]]
id = "floor"
face = "z_min"
waypoints = [[25.0, 25.0], [175.0, 25.0], [175.0, 175.0], [25.0, 175.0]]
frames = {frames_per_leg}

[[legs]]
id = "wall"
face = "y_min"
waypoints = [[25.0, 50.0], [175.0, 50.0], [175.0, 350.0], [25.0, 350.0]]
frames = {frames_per_leg}
"#
    );
    SimScenario::from_toml(&text).expect("fixture scenario is valid")
}

pub fn rig(frames_per_leg: u64, pinhole: bool) -> (GeneratedScenario, Calibration) {
    let g = generate_scenario(&tour(frames_per_leg, pinhole)).expect("fixture generates");
    let c = calibrate(&g.picks).expect("fixture calibrates");
    (g, c)
}

/// `n` frames with one ground-truth box each and a jittered prediction
/// plus a distractor per frame. Deterministic without an RNG.
pub fn detection_set(n: usize) -> (Vec<Prediction>, Vec<GroundTruthBox>) {
    let mut preds = Vec::with_capacity(2 * n);
    let mut gts = Vec::with_capacity(n);
    for i in 0..n {
        let frame = format!("f{i}");
        let u = (i * 37 % 600) as f64;
        let v = (i * 53 % 400) as f64;
        gts.push(GroundTruthBox { frame_id: frame.clone(), bbox: BBox::new(u, v, u + 30.0, v + 30.0).unwrap() });
        let shift = (i % 7) as f64;
        preds.push(Prediction {
            camera_id: "cam0".into(),
            frame_index: i as u64,
            frame_id: frame.clone(),
            bbox: BBox::new(u + shift, v, u + 30.0 + shift, v + 30.0).unwrap(),
            confidence: 0.5 + (i % 50) as f64 / 100.0,
        });
        preds.push(Prediction {
            camera_id: "cam0".into(),
            frame_index: i as u64,
            frame_id: frame,
            bbox: BBox::new(u + 200.0, v, u + 230.0, v + 30.0).unwrap(),
            confidence: (i % 40) as f64 / 100.0,
        });
    }
    (preds, gts)
}

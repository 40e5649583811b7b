#![allow(dead_code)]

use gridscope::calibration::calibrate;
use gridscope::detmetrics::{iou, GroundTruthBox, Prediction};
use gridscope::evaluate::Face;
use gridscope::synthrig::{
    CameraSpec, GridBSpec, LegSpec, ProjectionMode, RigSpec, SimScenario,
};
use gridscope::{Calibration, GeneratedScenario};

pub fn base_scenario(mode: ProjectionMode, seed: u64) -> SimScenario {
    SimScenario {
        seed,
        frame_rate: 20.0,
        mode,
        noise_px: 0.0,
        dropout: 0.0,
        top_dropout: None,
        confidence_jitter: 0.0,
        timestamp_jitter_ms: 0,
        speed_mm_s: 40.0,
        bbox_half_px: 15.0,
        rig: RigSpec::default(),
        cameras: CameraSpec::default(),
        grid_b: GridBSpec {
            origin: [95.0, 95.0, 0.0],
            size: [200.0, 200.0, 400.0],
        },
        legs: vec![],
    }
}

fn square(w: f64, h: f64) -> Vec<[f64; 2]> {
    vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
}

/// Legs on four Grid B faces (floor, two walls, top), `frames` in total.
pub fn box_tour(mode: ProjectionMode, seed: u64, frames: u64) -> SimScenario {
    let mut s = base_scenario(mode, seed);
    let q = frames / 4;
    s.legs = vec![
        LegSpec { id: "floor".into(), face: Face::ZMin, waypoints: square(200.0, 200.0), frames: q, closed: true },
        LegSpec { id: "wall_x".into(), face: Face::XMax, waypoints: square(200.0, 400.0), frames: q, closed: true },
        LegSpec { id: "wall_y".into(), face: Face::YMin, waypoints: square(200.0, 400.0), frames: q, closed: true },
        LegSpec { id: "roof".into(), face: Face::ZMax, waypoints: square(200.0, 200.0), frames: frames - 3 * q, closed: true },
    ];
    s
}

/// Grid B = Grid A, zig-zag raster over the far face of cam0 (`y = D`).
pub fn face_f_sweep(frames: u64) -> SimScenario {
    let mut s = base_scenario(ProjectionMode::Pinhole, 11);
    s.grid_b = GridBSpec { origin: [0.0, 0.0, 0.0], size: [390.0, 390.0, 850.0] };
    let columns = 13;
    let mut waypoints = Vec::new();
    for k in 0..columns {
        let x = 390.0 * k as f64 / (columns - 1) as f64;
        let (z0, z1) = if k % 2 == 0 { (0.0, 850.0) } else { (850.0, 0.0) };
        waypoints.push([x, z0]);
        waypoints.push([x, z1]);
    }
    let length = columns as f64 * 850.0 + 390.0;
    s.speed_mm_s = length * s.frame_rate / (frames - 1) as f64;
    s.legs = vec![LegSpec { id: "face_f".into(), face: Face::YMax, waypoints, frames, closed: false }];
    s
}

pub fn calibrated(g: &GeneratedScenario) -> Calibration {
    calibrate(&g.picks).expect("simulated picks calibrate")
}

/// Per prediction: matched or not, from the lexicographically best
/// assignment in confidence order (brute force over every assignment).
pub fn oracle_matches(preds: &[Prediction], gts: &[GroundTruthBox], thr: f64) -> Vec<bool> {
    let mut hit = vec![false; preds.len()];
    let mut frames: Vec<&str> = preds.iter().map(|p| p.frame_id.as_str()).collect();
    frames.sort();
    frames.dedup();
    for f in frames {
        let mut ps: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].frame_id == f).collect();
        ps.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
        let gs: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].frame_id == f).collect();
        // each prediction picks a gt slot or none (= gs.len())
        let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
        let total = (gs.len() + 1).pow(ps.len() as u32);
        for code in 0..total {
            let mut c = code;
            let choice: Vec<usize> = ps.iter().map(|_| { let k = c % (gs.len() + 1); c /= gs.len() + 1; k }).collect();
            let mut used = vec![false; gs.len()];
            let mut key = Vec::new();
            let mut valid = true;
            for (pi, &k) in ps.iter().zip(&choice) {
                if k == gs.len() {
                    key.push(0.0);
                    continue;
                }
                let v = iou(&preds[*pi].bbox, &gts[gs[k]].bbox);
                if used[k] || v < thr {
                    valid = false;
                    break;
                }
                used[k] = true;
                key.push(v);
            }
            if valid && best.as_ref().is_none_or(|(bk, _)| key > *bk) {
                best = Some((key, choice));
            }
        }
        let (_, choice) = best.expect("empty assignment is valid");
        for (pi, k) in ps.iter().zip(choice) {
            hit[*pi] = k < gs.len();
        }
    }
    hit
}

/// 101-point interpolated AP from the full precision/recall staircase.
pub fn oracle_ap(preds: &[Prediction], gts: &[GroundTruthBox], thr: f64) -> f64 {
    let hit = oracle_matches(preds, gts, thr);
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut stairs = Vec::new(); // (tp, rank)
    let mut tp = 0;
    for (k, &i) in order.iter().enumerate() {
        tp += hit[i] as usize;
        stairs.push((tp, k + 1));
    }
    let n = gts.len();
    let mut sum = 0.0;
    for r in 0..=100usize {
        let p = stairs
            .iter()
            .filter(|(tp, _)| tp * 100 >= r * n)
            .map(|&(tp, k)| tp as f64 / k as f64)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 101.0
}


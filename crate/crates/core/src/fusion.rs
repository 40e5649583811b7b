//! Adjacent side-camera pairs → world-coordinate track points.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, CameraProfile, CameraRole};
use crate::depthfix::{
    compute_def, correct_side_point, vertical_offset_fraction, DepthCorrection, DepthObservation,
};
use crate::detio::{
    bbox_center, primary_per_frame, synchronize, Detection, FrameBundle, ParseMode, SyncReference,
};
use crate::error::{Error, Result};
use crate::geom::{Axis, WorldPoint3D};
use crate::numfmt::fixed6;

pub const TRACK_HEADER: [&str; 8] = [
    "timestamp_ms",
    "x_mm",
    "y_mm",
    "z_mm",
    "cam_a",
    "cam_b",
    "z_disagreement_mm",
    "depth_corrected",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrackPoint {
    pub timestamp_ms: i64,
    pub position: WorldPoint3D,
    pub pair: (String, String),
    pub z_disagreement_mm: f64,
    pub depth_corrected: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    /// Highest combined detection confidence; ties go to the lowest pair.
    #[default]
    Best,
    /// Mean over every eligible pair that passes the z check.
    AverageAll,
}

impl std::str::FromStr for PairStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "best" => Ok(PairStrategy::Best),
            "average_all" => Ok(PairStrategy::AverageAll),
            _ => Err(format!("unknown pair strategy `{s}` (best | average_all)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub z_threshold_mm: f64,
    pub pair_strategy: PairStrategy,
    /// Apply the top-camera depth correction at all.
    pub depth_correction: bool,
    pub vertical_correction: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            z_threshold_mm: 30.0,
            pair_strategy: PairStrategy::Best,
            depth_correction: true,
            vertical_correction: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    pub bundles_total: u64,
    pub with_any_side_detection: u64,
    pub with_two_side_detections: u64,
    pub with_adjacent_pair: u64,
    pub plotted: u64,
    pub rejected_by_z: u64,
    pub rejected_outside: u64,
    pub missing_top: u64,
}

/// Adjacent pairs `(i, i+1 mod 4)` whose cameras are both present, in pair
/// index order.
pub fn adjacent_pairs(present: [bool; 4]) -> Vec<(u8, u8)> {
    (0..4u8)
        .filter(|&i| present[i as usize] && present[((i + 1) % 4) as usize])
        .map(|i| (i, (i + 1) % 4))
        .collect()
}

fn side_presence(bundle: &FrameBundle, calib: &Calibration) -> [bool; 4] {
    let mut present = [false; 4];
    for id in bundle.per_camera.keys() {
        if let Some(CameraRole::Side(i)) = calib.profile(id).map(|p| p.role) {
            present[i as usize] = true;
        }
    }
    present
}

/// Eligible adjacent side-camera pairs present in `bundle`.
pub fn eligible_pairs(bundle: &FrameBundle, calib: &Calibration) -> Vec<(u8, u8)> {
    adjacent_pairs(side_presence(bundle, calib))
}

struct SideReading {
    horizontal: (Axis, f64),
    vertical: (Axis, f64),
    corrected: bool,
}

fn top_estimate(bundle: &FrameBundle, calib: &Calibration) -> Option<WorldPoint3D> {
    let top = calib.by_role(CameraRole::Top)?;
    let det = bundle.get(&top.camera_id)?;
    let (mg, _) = top.to_model_grid(bbox_center(det)).ok()?;
    let ppm = calib.rig.px_per_mm;
    let mut p = WorldPoint3D::default();
    p.set(top.axis_map.a.axis, top.axis_map.a.to_world(mg.a / ppm));
    p.set(top.axis_map.b.axis, top.axis_map.b.to_world(mg.b / ppm));
    Some(p)
}

fn read_side(
    profile: &CameraProfile,
    det: &Detection,
    calib: &Calibration,
    top: Option<&WorldPoint3D>,
    config: &FusionConfig,
) -> Result<SideReading> {
    let (mut mg, _) = profile.to_model_grid(bbox_center(det))?;
    let face = calib.face_extent(profile);
    let ppm = calib.rig.px_per_mm;
    let mut correction = DepthCorrection::default();
    if let (true, Some(top)) = (config.depth_correction, top) {
        let obs = DepthObservation::from_top_estimate(&profile.axis_map, &face, ppm, top)?;
        let frac = if config.vertical_correction {
            vertical_offset_fraction(&face, mg.b, compute_def(profile.mde_v, &obs)?)
        } else {
            0.0
        };
        (mg, correction) = correct_side_point(profile, &face, mg, &obs, frac)?;
    }
    let m = &profile.axis_map;
    Ok(SideReading {
        horizontal: (m.a.axis, m.a.to_world(mg.a / ppm)),
        vertical: (m.b.axis, m.b.to_world(mg.b / ppm)),
        corrected: correction.applied,
    })
}

/// Reconstructs one world point from the side cameras `pair`.
pub fn reconstruct_point(
    bundle: &FrameBundle,
    pair: (u8, u8),
    calib: &Calibration,
    config: &FusionConfig,
) -> Result<TrackPoint> {
    let top = top_estimate(bundle, calib);
    reconstruct_with_top(bundle, pair, calib, config, top.as_ref())
}

fn reconstruct_with_top(
    bundle: &FrameBundle,
    pair: (u8, u8),
    calib: &Calibration,
    config: &FusionConfig,
    top: Option<&WorldPoint3D>,
) -> Result<TrackPoint> {
    let side = |i: u8| {
        calib
            .by_role(CameraRole::Side(i))
            .ok_or_else(|| Error::config("calibration", format!("no profile for side camera {i}")))
    };
    let (pa, pb) = (side(pair.0)?, side(pair.1)?);
    if (pair.0 + 4 - pair.1).is_multiple_of(2) {
        return Err(Error::NotAdjacent(pa.camera_id.clone(), pb.camera_id.clone()));
    }
    let missing = |p: &CameraProfile| Error::config("bundle", format!("no detection for `{}`", p.camera_id));
    let da = bundle.get(&pa.camera_id).ok_or_else(|| missing(pa))?;
    let db = bundle.get(&pb.camera_id).ok_or_else(|| missing(pb))?;

    let ra = read_side(pa, da, calib, top, config)?;
    let rb = read_side(pb, db, calib, top, config)?;
    if ra.horizontal.0 == rb.horizontal.0
        || ra.vertical.0 != rb.vertical.0
        || ra.horizontal.0 == ra.vertical.0
        || rb.horizontal.0 == rb.vertical.0
    {
        return Err(Error::NotAdjacent(pa.camera_id.clone(), pb.camera_id.clone()));
    }
    let mut position = WorldPoint3D::default();
    position.set(ra.horizontal.0, ra.horizontal.1);
    position.set(rb.horizontal.0, rb.horizontal.1);
    position.set(ra.vertical.0, 0.5 * (ra.vertical.1 + rb.vertical.1));
    let z_disagreement_mm = (ra.vertical.1 - rb.vertical.1).abs();
    if z_disagreement_mm > config.z_threshold_mm {
        return Err(Error::ZDisagreementExceeded {
            disagreement_mm: z_disagreement_mm,
            threshold_mm: config.z_threshold_mm,
        });
    }
    Ok(TrackPoint {
        timestamp_ms: bundle.timestamp_ms,
        position,
        pair: (pa.camera_id.clone(), pb.camera_id.clone()),
        z_disagreement_mm,
        depth_corrected: ra.corrected && rb.corrected,
    })
}

enum Outcome {
    NoSide,
    NoPair { two_side: bool },
    Plotted { point: TrackPoint, two_side: bool, missing_top: bool },
    Rejected { z: bool, two_side: bool, missing_top: bool },
}

fn combined_confidence(bundle: &FrameBundle, calib: &Calibration, pair: (u8, u8)) -> f64 {
    [pair.0, pair.1]
        .iter()
        .filter_map(|&i| calib.by_role(CameraRole::Side(i)))
        .filter_map(|p| bundle.get(&p.camera_id))
        .map(|d| d.confidence)
        .sum()
}

fn process(bundle: &FrameBundle, calib: &Calibration, config: &FusionConfig) -> Outcome {
    let present = side_presence(bundle, calib);
    let n_side = present.iter().filter(|&&p| p).count();
    if n_side == 0 {
        return Outcome::NoSide;
    }
    let two_side = n_side >= 2;
    let mut pairs = adjacent_pairs(present);
    if pairs.is_empty() {
        return Outcome::NoPair { two_side };
    }
    let top = top_estimate(bundle, calib);
    let missing_top = top.is_none();
    // stable sort keeps pair-index order among equal confidences
    pairs.sort_by(|&p, &q| {
        combined_confidence(bundle, calib, q).total_cmp(&combined_confidence(bundle, calib, p))
    });
    let rejected = |e: &Error| Outcome::Rejected {
        z: matches!(e, Error::ZDisagreementExceeded { .. }),
        two_side,
        missing_top,
    };
    match config.pair_strategy {
        PairStrategy::Best => {
            match reconstruct_with_top(bundle, pairs[0], calib, config, top.as_ref()) {
                Ok(point) => Outcome::Plotted {
                    point,
                    two_side,
                    missing_top,
                },
                Err(e) => rejected(&e),
            }
        }
        PairStrategy::AverageAll => {
            let results: Vec<Result<TrackPoint>> = pairs
                .iter()
                .map(|&p| reconstruct_with_top(bundle, p, calib, config, top.as_ref()))
                .collect();
            let ok: Vec<&TrackPoint> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
            if ok.is_empty() {
                let first = results.into_iter().find_map(|r| r.err()).expect("non-empty");
                return rejected(&first);
            }
            let n = ok.len() as f64;
            let mean = |f: fn(&WorldPoint3D) -> f64| ok.iter().map(|t| f(&t.position)).sum::<f64>() / n;
            let point = TrackPoint {
                timestamp_ms: bundle.timestamp_ms,
                position: WorldPoint3D::new(mean(|p| p.x), mean(|p| p.y), mean(|p| p.z)),
                pair: ok[0].pair.clone(),
                z_disagreement_mm: ok.iter().map(|t| t.z_disagreement_mm).fold(0.0, f64::max),
                depth_corrected: ok.iter().all(|t| t.depth_corrected),
            };
            Outcome::Plotted {
                point,
                two_side,
                missing_top,
            }
        }
    }
}

/// At most one track point per bundle, in bundle order.
pub fn build_track(
    bundles: &[FrameBundle],
    calib: &Calibration,
    config: &FusionConfig,
) -> (Vec<TrackPoint>, FusionStats) {
    let outcomes: Vec<Outcome> = bundles
        .par_iter()
        .map(|b| process(b, calib, config))
        .collect();
    let mut stats = FusionStats {
        bundles_total: bundles.len() as u64,
        ..FusionStats::default()
    };
    let mut track = Vec::new();
    for o in outcomes {
        let (two, attempted_top_missing) = match &o {
            Outcome::NoSide => continue,
            Outcome::NoPair { two_side } => (*two_side, None),
            Outcome::Plotted {
                two_side,
                missing_top,
                ..
            }
            | Outcome::Rejected {
                two_side,
                missing_top,
                ..
            } => (*two_side, Some(*missing_top)),
        };
        stats.with_any_side_detection += 1;
        stats.with_two_side_detections += two as u64;
        if let Some(mt) = attempted_top_missing {
            stats.with_adjacent_pair += 1;
            stats.missing_top += mt as u64;
        }
        match o {
            Outcome::Plotted { point, .. } => {
                stats.plotted += 1;
                track.push(point);
            }
            Outcome::Rejected { z: true, .. } => stats.rejected_by_z += 1,
            Outcome::Rejected { z: false, .. } => stats.rejected_outside += 1,
            _ => {}
        }
    }
    (track, stats)
}

/// Primary detection per camera and frame, synchronisation, then
/// [`build_track`].
pub fn reconstruct(
    calib: &Calibration,
    detections: &[Detection],
    tolerance_ms: i64,
    reference: &SyncReference,
    config: &FusionConfig,
) -> (Vec<TrackPoint>, FusionStats) {
    let primary = primary_per_frame(detections);
    let bundles = synchronize(&primary, tolerance_ms, reference);
    build_track(&bundles, calib, config)
}

pub fn write_track<W: Write>(mut out: W, track: &[TrackPoint]) -> Result<()> {
    writeln!(out, "{}", TRACK_HEADER.join(","))?;
    for t in track {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t.timestamp_ms,
            fixed6(t.position.x),
            fixed6(t.position.y),
            fixed6(t.position.z),
            t.pair.0,
            t.pair.1,
            fixed6(t.z_disagreement_mm),
            t.depth_corrected
        )?;
    }
    Ok(())
}

pub fn parse_track<R: Read>(input: R) -> Result<Vec<TrackPoint>> {
    use crate::detio::{field, for_each_row, int, real};
    let h = &TRACK_HEADER;
    let (rows, _) = for_each_row(input, h, ParseMode::Strict, |rec, row| {
        let corrected = match field(rec, 7, row, h)? {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Csv {
                    row,
                    column: h[7].into(),
                    reason: format!("expected true/false, found `{other}`"),
                })
            }
        };
        Ok(TrackPoint {
            timestamp_ms: int(rec, 0, row, h)?,
            position: WorldPoint3D::new(real(rec, 1, row, h)?, real(rec, 2, row, h)?, real(rec, 3, row, h)?),
            pair: (field(rec, 4, row, h)?.to_string(), field(rec, 5, row, h)?.to_string()),
            z_disagreement_mm: real(rec, 6, row, h)?,
            depth_corrected: corrected,
        })
    })?;
    Ok(rows)
}

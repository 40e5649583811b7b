//! Per-frame detection ingest and cross-camera frame synchronisation.
//!
//! Detections CSV columns:
//! `camera_id,frame_index,timestamp_ms,u_min,v_min,u_max,v_max,confidence`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geom::{BBox, PixelPoint};
use crate::numfmt::g17;

pub const DETECTIONS_HEADER: [&str; 8] = [
    "camera_id",
    "frame_index",
    "timestamp_ms",
    "u_min",
    "v_min",
    "u_max",
    "v_max",
    "confidence",
];

/// Half the 50 ms frame interval at 20 fps.
pub const DEFAULT_SYNC_TOLERANCE_MS: i64 = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub camera_id: String,
    pub frame_index: u64,
    pub timestamp_ms: i64,
    pub bbox: BBox,
    pub confidence: f64,
}

pub fn bbox_center(d: &Detection) -> PixelPoint {
    d.bbox.center()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParseMode {
    /// First malformed row aborts.
    Strict,
    /// Malformed rows are skipped and reported.
    #[default]
    Lenient,
}

#[derive(Debug, Default)]
pub struct ParsedDetections {
    pub detections: Vec<Detection>,
    pub skipped: Vec<Error>,
}

fn csv_err(row: usize, column: &str, reason: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn field<'r>(
    rec: &'r csv::StringRecord,
    idx: usize,
    row: usize,
    header: &[&str],
) -> Result<&'r str> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| csv_err(row, header[idx], "missing field"))
}

pub(crate) fn real(
    rec: &csv::StringRecord,
    idx: usize,
    row: usize,
    header: &[&str],
) -> Result<f64> {
    let s = field(rec, idx, row, header)?;
    let v: f64 = s
        .parse()
        .map_err(|_| csv_err(row, header[idx], format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(csv_err(row, header[idx], "value must be finite"));
    }
    Ok(v)
}

pub(crate) fn int<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    row: usize,
    header: &[&str],
) -> Result<T> {
    let s = field(rec, idx, row, header)?;
    s.parse()
        .map_err(|_| csv_err(row, header[idx], format!("`{s}` is not a valid integer")))
}

pub(crate) fn check_header(rec: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = rec.iter().map(str::trim).collect();
    if got != expected {
        return Err(csv_err(
            1,
            "header",
            format!("expected `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub(crate) fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

/// Reads records of a headered CSV, handing each one (with its 1-based
/// line number) to `row_fn`.
pub(crate) fn for_each_row<R: Read, T>(
    input: R,
    header: &[&str],
    mode: ParseMode,
    mut row_fn: impl FnMut(&csv::StringRecord, usize) -> Result<T>,
) -> Result<(Vec<T>, Vec<Error>)> {
    let mut rdr = reader(input);
    let head = rdr
        .headers()
        .map_err(|e| csv_err(1, "header", e.to_string()))?
        .clone();
    check_header(&head, header)?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        let row = rdr.position().line() as usize;
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let row = rec.position().map(|p| p.line() as usize).unwrap_or(row);
                if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
                    continue;
                }
                let parsed = if rec.len() != header.len() {
                    Err(csv_err(
                        row,
                        "*",
                        format!("expected {} fields, found {}", header.len(), rec.len()),
                    ))
                } else {
                    row_fn(&rec, row)
                };
                match (parsed, mode) {
                    (Ok(v), _) => out.push(v),
                    (Err(e), ParseMode::Strict) => return Err(e),
                    (Err(e), ParseMode::Lenient) => skipped.push(e),
                }
            }
            Err(e) => {
                let err = csv_err(row, "*", e.to_string());
                match mode {
                    ParseMode::Strict => return Err(err),
                    ParseMode::Lenient => skipped.push(err),
                }
            }
        }
    }
    Ok((out, skipped))
}

fn detection_row(rec: &csv::StringRecord, row: usize) -> Result<Detection> {
    let h = &DETECTIONS_HEADER;
    let camera_id = field(rec, 0, row, h)?.to_string();
    if camera_id.is_empty() {
        return Err(csv_err(row, "camera_id", "empty camera id"));
    }
    let frame_index: u64 = int(rec, 1, row, h)?;
    let timestamp_ms: i64 = int(rec, 2, row, h)?;
    if timestamp_ms < 0 {
        return Err(csv_err(row, "timestamp_ms", "timestamp must be >= 0"));
    }
    let b = [
        real(rec, 3, row, h)?,
        real(rec, 4, row, h)?,
        real(rec, 5, row, h)?,
        real(rec, 6, row, h)?,
    ];
    if b[0] >= b[2] {
        return Err(csv_err(row, "u_max", "u_min must be < u_max"));
    }
    if b[1] >= b[3] {
        return Err(csv_err(row, "v_max", "v_min must be < v_max"));
    }
    let confidence = real(rec, 7, row, h)?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(csv_err(row, "confidence", "confidence must lie in [0, 1]"));
    }
    Ok(Detection {
        camera_id,
        frame_index,
        timestamp_ms,
        bbox: BBox::new(b[0], b[1], b[2], b[3])?,
        confidence,
    })
}

/// One detection per data row, in input order.
pub fn parse_detections<R: Read>(input: R, mode: ParseMode) -> Result<ParsedDetections> {
    let (detections, skipped) = for_each_row(input, &DETECTIONS_HEADER, mode, detection_row)?;
    Ok(ParsedDetections {
        detections,
        skipped,
    })
}

pub fn write_detections<W: Write>(mut out: W, dets: &[Detection]) -> Result<()> {
    writeln!(out, "{}", DETECTIONS_HEADER.join(","))?;
    for d in dets {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            d.camera_id,
            d.frame_index,
            d.timestamp_ms,
            g17(d.bbox.u_min),
            g17(d.bbox.v_min),
            g17(d.bbox.u_max),
            g17(d.bbox.v_max),
            g17(d.confidence)
        )?;
    }
    Ok(())
}

/// Highest confidence wins; ties go to the larger box, then to the
/// lexicographically smallest `(u_min, v_min, u_max, v_max)`.
pub fn select_primary(dets: &[Detection]) -> Option<&Detection> {
    dets.iter().min_by(|x, y| {
        y.confidence
            .total_cmp(&x.confidence)
            .then(y.bbox.area().total_cmp(&x.bbox.area()))
            .then_with(|| {
                x.bbox
                    .as_array()
                    .iter()
                    .zip(y.bbox.as_array().iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    })
}

/// Reduces to at most one detection per (camera, timestamp); output sorted
/// by camera id then time.
pub fn primary_per_frame(dets: &[Detection]) -> Vec<Detection> {
    let mut groups: BTreeMap<(&str, i64), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups
            .entry((d.camera_id.as_str(), d.timestamp_ms))
            .or_default()
            .push(d.clone());
    }
    groups
        .values()
        .filter_map(|g| select_primary(g).cloned())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub timestamp_ms: i64,
    pub per_camera: BTreeMap<String, Detection>,
}

impl FrameBundle {
    pub fn get(&self, camera_id: &str) -> Option<&Detection> {
        self.per_camera.get(camera_id)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum SyncReference {
    /// Group on this camera's timestamps; falls back to
    /// [`SyncReference::EarliestCamera`] if it has no detections.
    Camera(String),
    /// The camera whose first detection is earliest (ties: smallest id).
    #[default]
    EarliestCamera,
    /// Every detection may anchor a bundle; anchors are taken in time order
    /// from whatever is still unassigned.
    Union,
}

struct CameraTrack<'a> {
    dets: Vec<&'a Detection>,
    used: Vec<bool>,
}

impl<'a> CameraTrack<'a> {
    fn new(mut dets: Vec<&'a Detection>) -> Self {
        dets.sort_by_key(|d| d.timestamp_ms);
        let used = vec![false; dets.len()];
        Self { dets, used }
    }

    /// Nearest unused detection within `tol` of `t`; ties go to the earlier.
    fn take_nearest(&mut self, t: i64, tol: i64) -> Option<&'a Detection> {
        let start = self.dets.partition_point(|d| d.timestamp_ms < t - tol);
        let mut best: Option<(i64, usize)> = None;
        for i in start..self.dets.len() {
            let dt = self.dets[i].timestamp_ms - t;
            if dt > tol {
                break;
            }
            if self.used[i] {
                continue;
            }
            if best.is_none_or(|(b, _)| dt.abs() < b) {
                best = Some((dt.abs(), i));
            }
        }
        best.map(|(_, i)| {
            self.used[i] = true;
            self.dets[i]
        })
    }
}

fn earliest_camera(dets: &[Detection]) -> Option<String> {
    dets.iter()
        .min_by(|a, b| {
            a.timestamp_ms
                .cmp(&b.timestamp_ms)
                .then_with(|| a.camera_id.cmp(&b.camera_id))
        })
        .map(|d| d.camera_id.clone())
}

/// Groups detections (at most one per camera per frame, see
/// [`primary_per_frame`]) into time-ordered bundles.
pub fn synchronize(
    dets: &[Detection],
    tolerance_ms: i64,
    reference: &SyncReference,
) -> Vec<FrameBundle> {
    let tol = tolerance_ms.max(0);
    let mut by_cam: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        by_cam.entry(d.camera_id.as_str()).or_default().push(d);
    }
    let mut tracks: BTreeMap<&str, CameraTrack> = by_cam
        .into_iter()
        .map(|(k, v)| (k, CameraTrack::new(v)))
        .collect();

    let mut bundles = Vec::new();
    match reference {
        SyncReference::Union => {
            let mut order: Vec<(i64, &str, usize)> = tracks
                .iter()
                .flat_map(|(cam, tr)| {
                    tr.dets
                        .iter()
                        .enumerate()
                        .map(move |(i, d)| (d.timestamp_ms, *cam, i))
                })
                .collect();
            order.sort();
            for (t, cam, i) in order {
                let anchor = {
                    let tr = tracks.get_mut(cam).expect("camera present");
                    if tr.used[i] {
                        continue;
                    }
                    tr.used[i] = true;
                    tr.dets[i]
                };
                let mut per_camera = BTreeMap::new();
                per_camera.insert(cam.to_string(), anchor.clone());
                for (other, tr) in tracks.iter_mut() {
                    if *other == cam {
                        continue;
                    }
                    if let Some(d) = tr.take_nearest(t, tol) {
                        per_camera.insert(other.to_string(), d.clone());
                    }
                }
                bundles.push(FrameBundle {
                    timestamp_ms: t,
                    per_camera,
                });
            }
        }
        _ => {
            let ref_id = match reference {
                SyncReference::Camera(id) if tracks.contains_key(id.as_str()) => Some(id.clone()),
                _ => earliest_camera(dets),
            };
            let Some(ref_id) = ref_id else {
                return bundles;
            };
            let ref_dets = tracks
                .remove(ref_id.as_str())
                .map(|t| t.dets)
                .unwrap_or_default();
            for r in ref_dets {
                let mut per_camera = BTreeMap::new();
                per_camera.insert(ref_id.clone(), r.clone());
                for (other, tr) in tracks.iter_mut() {
                    if let Some(d) = tr.take_nearest(r.timestamp_ms, tol) {
                        per_camera.insert(other.to_string(), d.clone());
                    }
                }
                bundles.push(FrameBundle {
                    timestamp_ms: r.timestamp_ms,
                    per_camera,
                });
            }
        }
    }
    bundles
}

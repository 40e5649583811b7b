//! Plotting error against Grid B faces, segment averages and plot rate.

use std::fmt;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calibration::GridBox;
use crate::detio::{field, for_each_row, int, ParseMode};
use crate::error::{Error, Result};
use crate::fusion::{FusionStats, TrackPoint};
use crate::geom::{Axis, WorldPoint3D};
use crate::numfmt::json_pretty;

pub const SEGMENTS_HEADER: [&str; 4] = ["segment_id", "t_start_ms", "t_end_ms", "face"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    pub fn axis(self) -> Axis {
        match self {
            Face::XMin | Face::XMax => Axis::X,
            Face::YMin | Face::YMax => Axis::Y,
            Face::ZMin | Face::ZMax => Axis::Z,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::XMin => "x_min",
            Face::XMax => "x_max",
            Face::YMin => "y_min",
            Face::YMax => "y_max",
            Face::ZMin => "z_min",
            Face::ZMax => "z_max",
        }
    }

    /// Coordinate of the face plane along [`Face::axis`].
    pub fn plane(self, b: &GridBox) -> f64 {
        if self.is_max() {
            b.max(self.axis())
        } else {
            b.min(self.axis())
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Face {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Face::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown face `{s}` (x_min, x_max, y_min, y_max, z_min, z_max)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub id: String,
    pub t_start_ms: i64,
    pub t_end_ms: i64,
    pub face: Face,
}

impl Segment {
    pub fn new(id: impl Into<String>, t_start_ms: i64, t_end_ms: i64, face: Face) -> Result<Self> {
        let id = id.into();
        if t_start_ms >= t_end_ms {
            return Err(Error::config(
                format!("segment `{id}`"),
                format!("t_start_ms {t_start_ms} must be < t_end_ms {t_end_ms}"),
            ));
        }
        Ok(Self { id, t_start_ms, t_end_ms, face })
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.t_start_ms..self.t_end_ms).contains(&t)
    }
}

/// Rejects overlapping windows.
pub fn validate_segments(segments: &[Segment]) -> Result<()> {
    let mut sorted: Vec<&Segment> = segments.iter().collect();
    sorted.sort_by_key(|s| s.t_start_ms);
    for w in sorted.windows(2) {
        if w[1].t_start_ms < w[0].t_end_ms {
            return Err(Error::config(
                "segments",
                format!("`{}` overlaps `{}`", w[0].id, w[1].id),
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceMode {
    /// Perpendicular distance to the infinite face plane.
    #[default]
    Plane,
    /// Euclidean distance to the bounded face rectangle.
    Bounded,
}

/// Unsigned distance from `p` to the infinite plane containing `face`.
pub fn distance_to_face(p: &WorldPoint3D, b: &GridBox, face: Face) -> f64 {
    (p.get(face.axis()) - face.plane(b)).abs()
}

/// Distance to the face rectangle itself (clamped in the two in-plane axes).
pub fn distance_to_face_bounded(p: &WorldPoint3D, b: &GridBox, face: Face) -> f64 {
    let normal = face.axis();
    let mut sq = 0.0;
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let d = if axis == normal {
            p.get(axis) - face.plane(b)
        } else {
            let v = p.get(axis);
            v - v.clamp(b.min(axis), b.max(axis))
        };
        sq += d * d;
    }
    sq.sqrt()
}

pub fn distance_with(mode: DistanceMode, p: &WorldPoint3D, b: &GridBox, face: Face) -> f64 {
    match mode {
        DistanceMode::Plane => distance_to_face(p, b, face),
        DistanceMode::Bounded => distance_to_face_bounded(p, b, face),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentResult {
    pub id: String,
    pub face: Face,
    pub points: usize,
    pub mean_error_mm: f64,
}

pub fn segment_error(track: &[TrackPoint], segment: &Segment, b: &GridBox) -> Result<f64> {
    segment_error_with(track, segment, b, DistanceMode::Plane).map(|r| r.mean_error_mm)
}

pub fn segment_error_with(
    track: &[TrackPoint],
    segment: &Segment,
    b: &GridBox,
    mode: DistanceMode,
) -> Result<SegmentResult> {
    let dists: Vec<f64> = track
        .iter()
        .filter(|t| segment.contains(t.timestamp_ms))
        .map(|t| distance_with(mode, &t.position, b, segment.face))
        .collect();
    if dists.is_empty() {
        return Err(Error::EmptySegment(segment.id.clone()));
    }
    Ok(SegmentResult {
        id: segment.id.clone(),
        face: segment.face,
        points: dists.len(),
        mean_error_mm: dists.iter().sum::<f64>() / dists.len() as f64,
    })
}

/// Unweighted mean of segment means.
pub fn overall_accuracy(segment_errors: &[f64]) -> Result<f64> {
    if segment_errors.is_empty() {
        return Err(Error::NoSegments);
    }
    Ok(segment_errors.iter().sum::<f64>() / segment_errors.len() as f64)
}

/// Mean over every point, so longer segments weigh more.
pub fn overall_accuracy_weighted(results: &[SegmentResult]) -> Result<f64> {
    let n: usize = results.iter().map(|r| r.points).sum();
    if n == 0 {
        return Err(Error::NoSegments);
    }
    Ok(results.iter().map(|r| r.mean_error_mm * r.points as f64).sum::<f64>() / n as f64)
}

/// Plotted bundles over bundles with at least one side detection.
pub fn plot_rate(stats: &FusionStats) -> Result<f64> {
    if stats.with_any_side_detection == 0 {
        return Err(Error::NoDetections);
    }
    Ok(stats.plotted as f64 / stats.with_any_side_detection as f64)
}

/// Plotted bundles over bundles with at least two side detections.
pub fn plot_rate_two_side(stats: &FusionStats) -> Result<f64> {
    if stats.with_two_side_detections == 0 {
        return Err(Error::NoDetections);
    }
    Ok(stats.plotted as f64 / stats.with_two_side_detections as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub segments: Vec<SegmentResult>,
    /// Segments with no track point inside their window.
    pub empty_segments: Vec<String>,
    pub overall_mm: f64,
    pub overall_weighted_mm: f64,
    pub px_per_mm: f64,
    pub distance_mode: DistanceMode,
    pub stats: Option<FusionStats>,
}

impl EvaluationReport {
    pub fn overall_model_px(&self) -> f64 {
        self.overall_mm * self.px_per_mm
    }

    pub fn plot_rate(&self) -> Option<f64> {
        self.stats.as_ref().and_then(|s| plot_rate(s).ok())
    }

    pub fn to_json(&self) -> String {
        let segments: Vec<_> = self
            .segments
            .iter()
            .map(|s| {
                json!({
                    "segment_id": s.id,
                    "face": s.face.name(),
                    "points": s.points,
                    "mean_error_mm": s.mean_error_mm,
                })
            })
            .collect();
        let mut v = json!({
            "distance_mode": match self.distance_mode {
                DistanceMode::Plane => "plane",
                DistanceMode::Bounded => "bounded",
            },
            "segments": segments,
            "empty_segments": self.empty_segments,
            "overall_mm": self.overall_mm,
            "overall_model_px": self.overall_model_px(),
            "overall_point_weighted_mm": self.overall_weighted_mm,
        });
        if let Some(stats) = &self.stats {
            let rate = |r: Result<f64>| r.map(serde_json::Value::from).unwrap_or(serde_json::Value::Null);
            v["plot_rate"] = rate(plot_rate(stats));
            v["plot_rate_two_side"] = rate(plot_rate_two_side(stats));
            v["fusion_stats"] = serde_json::to_value(stats).expect("plain struct");
        }
        json_pretty(&v)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:<6} {:>7} {:>14}\n", "segment", "face", "points", "mean_err_mm");
        for r in &self.segments {
            s += &format!("{:<16} {:<6} {:>7} {:>14.3}\n", r.id, r.face.name(), r.points, r.mean_error_mm);
        }
        for id in &self.empty_segments {
            s += &format!("{id:<16} (no track points)\n");
        }
        s += &format!("overall accuracy: {:.3} mm ({:.3} model px)\n", self.overall_mm, self.overall_model_px());
        s += &format!("point-weighted:   {:.3} mm\n", self.overall_weighted_mm);
        if let Some(stats) = &self.stats {
            match plot_rate(stats) {
                Ok(r) => s += &format!("plot rate:        {:.4} ({} / {})\n", r, stats.plotted, stats.with_any_side_detection),
                Err(_) => s += "plot rate:        undefined (no side detections)\n",
            }
            if let Ok(r) = plot_rate_two_side(stats) {
                s += &format!("plot rate (>=2):  {:.4} ({} / {})\n", r, stats.plotted, stats.with_two_side_detections);
            }
        }
        s
    }
}

/// Evaluates every segment; empty segments are listed, not fatal, as long
/// as one segment has points.
pub fn evaluate(
    track: &[TrackPoint],
    segments: &[Segment],
    grid_b: &GridBox,
    px_per_mm: f64,
    mode: DistanceMode,
    stats: Option<FusionStats>,
) -> Result<EvaluationReport> {
    validate_segments(segments)?;
    let results: Vec<Result<SegmentResult>> = segments
        .par_iter()
        .map(|s| segment_error_with(track, s, grid_b, mode))
        .collect();
    let mut ok = Vec::new();
    let mut empty = Vec::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(Error::EmptySegment(id)) => empty.push(id),
            Err(e) => return Err(e),
        }
    }
    let means: Vec<f64> = ok.iter().map(|r| r.mean_error_mm).collect();
    Ok(EvaluationReport {
        overall_mm: overall_accuracy(&means)?,
        overall_weighted_mm: overall_accuracy_weighted(&ok)?,
        segments: ok,
        empty_segments: empty,
        px_per_mm,
        distance_mode: mode,
        stats,
    })
}

pub fn parse_segments<R: Read>(input: R) -> Result<Vec<Segment>> {
    let h = &SEGMENTS_HEADER;
    let (rows, _) = for_each_row(input, h, ParseMode::Strict, |rec, row| {
        let face: Face = field(rec, 3, row, h)?.parse().map_err(|reason| Error::Csv {
            row,
            column: h[3].into(),
            reason,
        })?;
        let (t0, t1) = (int(rec, 1, row, h)?, int(rec, 2, row, h)?);
        if t0 >= t1 {
            return Err(Error::Csv {
                row,
                column: h[2].into(),
                reason: format!("t_end_ms {t1} must exceed t_start_ms {t0}"),
            });
        }
        Ok(Segment {
            id: field(rec, 0, row, h)?.to_string(),
            t_start_ms: t0,
            t_end_ms: t1,
            face,
        })
    })?;
    Ok(rows)
}

pub fn write_segments<W: std::io::Write>(mut out: W, segments: &[Segment]) -> Result<()> {
    writeln!(out, "{}", SEGMENTS_HEADER.join(","))?;
    for s in segments {
        writeln!(out, "{},{},{},{}", s.id, s.t_start_ms, s.t_end_ms, s.face)?;
    }
    Ok(())
}

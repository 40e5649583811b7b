//! Static track exports: SVG orthographic panels, ASCII PLY, CSV.

use std::fmt::Write as _;

use crate::calibration::GridBox;
use crate::error::{Error, Result};
use crate::fusion::{write_track, TrackPoint};
use crate::geom::{Axis, WorldPoint3D};
use crate::numfmt::fixed6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Svg,
    Ply,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "svg" => Ok(ExportFormat::Svg),
            "ply" => Ok(ExportFormat::Ply),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(format!("unknown export format `{s}` (svg | ply | csv)")),
        }
    }
}

/// Panels in drawing order: horizontal axis, vertical axis.
pub const PANELS: [(Axis, Axis); 3] = [(Axis::X, Axis::Y), (Axis::X, Axis::Z), (Axis::Y, Axis::Z)];

const MARGIN: f64 = 20.0;
const LABEL: f64 = 16.0;

fn f3(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Panel-local coordinates of `p` for the panel `(h, v)`; world `v` points up.
pub fn panel_coords(p: &WorldPoint3D, grid_a: &GridBox, (h, v): (Axis, Axis), scale: f64) -> (f64, f64) {
    (
        (p.get(h) - grid_a.min(h)) * scale,
        (grid_a.max(v) - p.get(v)) * scale,
    )
}

fn rect(out: &mut String, x0: f64, y0: f64, b: &GridBox, grid_a: &GridBox, panel: (Axis, Axis), scale: f64, class: &str) {
    // top-left corner in panel space is (min h, max v)
    let mut corner = b.origin;
    corner.set(panel.1, b.max(panel.1));
    let (x, y) = panel_coords(&corner, grid_a, panel, scale);
    let (w, h) = (b.extent(panel.0) * scale, b.extent(panel.1) * scale);
    let _ = writeln!(
        out,
        r#"    <rect class="{class}" x="{}" y="{}" width="{}" height="{}"/>"#,
        f3(x0 + x),
        f3(y0 + y),
        f3(w),
        f3(h)
    );
}

/// Three side-by-side orthographic views (xy, xz, yz) with grid outlines and
/// the track as a polyline. `scale` is SVG units per mm.
pub fn track_svg(track: &[TrackPoint], grid_a: &GridBox, grid_b: Option<&GridBox>, scale: f64) -> Result<String> {
    if track.is_empty() {
        return Err(Error::EmptyTrack);
    }
    let sizes: Vec<(f64, f64)> = PANELS
        .iter()
        .map(|&(h, v)| (grid_a.extent(h) * scale, grid_a.extent(v) * scale))
        .collect();
    let width = sizes.iter().map(|s| s.0).sum::<f64>() + MARGIN * (PANELS.len() as f64 + 1.0);
    let height = sizes.iter().map(|s| s.1).fold(0.0, f64::max) + 2.0 * MARGIN + LABEL;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        f3(width),
        f3(height),
        f3(width),
        f3(height)
    );
    out.push_str("  <style>.grid-a{fill:none;stroke:#555;stroke-width:1}.grid-b{fill:none;stroke:#2a2;stroke-width:1}.track{fill:none;stroke:#c22;stroke-width:1}text{font:12px sans-serif}</style>\n");
    let mut x0 = MARGIN;
    for (k, &panel) in PANELS.iter().enumerate() {
        let y0 = MARGIN + LABEL;
        let name = format!("{}{}", panel.0.name(), panel.1.name());
        let _ = writeln!(out, r#"  <g id="panel-{name}">"#);
        let _ = writeln!(out, r#"    <text x="{}" y="{}">{name}</text>"#, f3(x0), f3(MARGIN + LABEL - 4.0));
        rect(&mut out, x0, y0, grid_a, grid_a, panel, scale, "grid-a");
        if let Some(b) = grid_b {
            rect(&mut out, x0, y0, b, grid_a, panel, scale, "grid-b");
        }
        let pts: Vec<String> = track
            .iter()
            .map(|t| {
                let (x, y) = panel_coords(&t.position, grid_a, panel, scale);
                format!("{},{}", f3(x0 + x), f3(y0 + y))
            })
            .collect();
        let _ = writeln!(out, r#"    <polyline class="track" points="{}"/>"#, pts.join(" "));
        out.push_str("  </g>\n");
        x0 += sizes[k].0 + MARGIN;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// ASCII PLY point cloud, one vertex per track point.
pub fn track_ply(track: &[TrackPoint]) -> Result<String> {
    if track.is_empty() {
        return Err(Error::EmptyTrack);
    }
    let mut out = String::from("ply\nformat ascii 1.0\ncomment gridscope track\n");
    let _ = writeln!(out, "element vertex {}", track.len());
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for t in track {
        let p = t.position;
        let _ = writeln!(out, "{} {} {}", fixed6(p.x), fixed6(p.y), fixed6(p.z));
    }
    Ok(out)
}

pub fn track_csv(track: &[TrackPoint]) -> Result<String> {
    let mut buf = Vec::new();
    write_track(&mut buf, track)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn export_track(
    track: &[TrackPoint],
    format: ExportFormat,
    grid_a: &GridBox,
    grid_b: Option<&GridBox>,
) -> Result<String> {
    match format {
        ExportFormat::Svg => track_svg(track, grid_a, grid_b, 1.0),
        ExportFormat::Ply => track_ply(track),
        ExportFormat::Csv => track_csv(track),
    }
}

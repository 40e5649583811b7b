//! Synthetic five-camera rig: marker picks, detections and ground truth.
//!
//! Cameras are `cam0`..`cam3` (side roles 0..3) and `top`. In `aligned`
//! mode each camera is an orthographic view of its Face N; in `pinhole` mode
//! it is a perspective camera centred on its Face N at a configurable
//! distance, with the principal point at the image centre.
//!
//! Randomness comes from one `ChaCha8Rng` seeded with `seed_from_u64(seed)`.
//! The stream is consumed frame by frame; within a frame the cameras are
//! visited in the order `cam0, cam1, cam2, cam3, top`, and each camera always
//! draws, in this order: a dropout uniform in `[0, 1)`, the pixel noise `du`
//! then `dv` from `Normal(0, noise_px)`, a confidence uniform in `[0, 1)`, and
//! a timestamp-jitter integer uniform in `[-J, J]`. A camera drops the frame
//! when its dropout draw is below the dropout probability; its confidence is
//! `1 - confidence_jitter * u`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calibration::{
    AxisMap, CameraPicks, CameraRole, FaceExtent, GridBox, MarkerPicks, RigGeometry, SubAreaPick,
    FORMAT_VERSION,
};
use crate::detio::{field, for_each_row, int, real, write_detections, Detection, ParseMode};
use crate::error::{Error, Result};
use crate::evaluate::{write_segments, Face, Segment};
use crate::geom::{Axis, BBox, PixelPoint, WorldPoint3D};
use crate::numfmt::{g17, json_pretty};

pub const TRUTH_HEADER: [&str; 6] = ["frame_index", "timestamp_ms", "x_mm", "y_mm", "z_mm", "segment_id"];

/// 120° horizontal field of view across 1920 px.
pub const DEFAULT_SIDE_FOCAL_PX: f64 = 554.256_258_422_040_7;
pub const DEFAULT_TOP_FOCAL_PX: f64 = 2000.0;

pub const CAMERA_ORDER: [(&str, CameraRole); 5] = [
    ("cam0", CameraRole::Side(0)),
    ("cam1", CameraRole::Side(1)),
    ("cam2", CameraRole::Side(2)),
    ("cam3", CameraRole::Side(3)),
    ("top", CameraRole::Top),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    #[default]
    Aligned,
    Pinhole,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubAreaLayout {
    /// One sub-area covering the whole face.
    Single,
    /// Four rectangles around a centre one.
    #[default]
    Pinwheel5,
}

/// Sub-area rectangles `[a0, b0, a1, b1]` in face mm (b from the top).
pub fn layout_rects(layout: SubAreaLayout, w: f64, h: f64) -> Vec<[f64; 4]> {
    match layout {
        SubAreaLayout::Single => vec![[0.0, 0.0, w, h]],
        SubAreaLayout::Pinwheel5 => {
            let (m1, m2) = (w / 4.0, h / 4.0);
            vec![
                [0.0, 0.0, w - m1, m2],
                [w - m1, 0.0, w, h - m2],
                [m1, h - m2, w, h],
                [0.0, m2, m1, h],
                [m1, m2, w - m1, h - m2],
            ]
        }
    }
}

// ---- scenario file --------------------------------------------------------

fn default_frame_rate() -> f64 {
    20.0
}
fn default_speed() -> f64 {
    20.0
}
fn default_half() -> f64 {
    15.0
}
fn default_conf_jitter() -> f64 {
    0.05
}
fn default_grid_a() -> [f64; 3] {
    [390.0, 390.0, 850.0]
}
fn one() -> f64 {
    1.0
}
fn twenty() -> u32 {
    20
}
fn default_resolution() -> [u32; 2] {
    [1920, 1080]
}
fn default_side_distance() -> f64 {
    245.0
}
fn default_top_distance() -> f64 {
    2000.0
}
fn default_side_focal() -> f64 {
    DEFAULT_SIDE_FOCAL_PX
}
fn default_top_focal() -> f64 {
    DEFAULT_TOP_FOCAL_PX
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    #[serde(default = "default_grid_a")]
    pub grid_a: [f64; 3],
    #[serde(default = "one")]
    pub px_per_mm: f64,
    #[serde(default = "twenty")]
    pub marker_count: u32,
    #[serde(default)]
    pub layout: SubAreaLayout,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            grid_a: default_grid_a(),
            px_per_mm: 1.0,
            marker_count: 20,
            layout: SubAreaLayout::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    #[serde(default = "default_resolution")]
    pub resolution: [u32; 2],
    /// Image px per mm in aligned mode.
    #[serde(default = "one")]
    pub aligned_px_per_mm: f64,
    #[serde(default = "default_side_distance")]
    pub side_distance_mm: f64,
    /// Height of the side cameras above the grid floor; defaults to half the
    /// grid height.
    #[serde(default)]
    pub side_height_mm: Option<f64>,
    #[serde(default = "default_side_focal")]
    pub focal_px: f64,
    /// Distance of the top camera above the top face.
    #[serde(default = "default_top_distance")]
    pub top_distance_mm: f64,
    #[serde(default = "default_top_focal")]
    pub top_focal_px: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            resolution: default_resolution(),
            aligned_px_per_mm: 1.0,
            side_distance_mm: default_side_distance(),
            side_height_mm: None,
            focal_px: DEFAULT_SIDE_FOCAL_PX,
            top_distance_mm: default_top_distance(),
            top_focal_px: DEFAULT_TOP_FOCAL_PX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBSpec {
    pub origin: [f64; 3],
    pub size: [f64; 3],
}

impl GridBSpec {
    pub fn to_box(&self) -> Result<GridBox> {
        let [x, y, z] = self.origin;
        let [w, d, h] = self.size;
        GridBox::new(WorldPoint3D::new(x, y, z), w, d, h).map_err(|e| Error::config("grid_b", e.to_string()))
    }
}

/// One stretch of path on a single Grid B face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegSpec {
    pub id: String,
    pub face: Face,
    /// Face-local mm `(s, t)` along the face's two in-plane axes, in
    /// `x, y, z` order with the normal axis removed.
    pub waypoints: Vec<[f64; 2]>,
    pub frames: u64,
    /// Closed legs loop back to the first waypoint; open legs go back and
    /// forth.
    #[serde(default = "yes")]
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub seed: u64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub mode: ProjectionMode,
    #[serde(default)]
    pub noise_px: f64,
    #[serde(default)]
    pub dropout: f64,
    /// Top-camera dropout; defaults to `dropout`.
    #[serde(default)]
    pub top_dropout: Option<f64>,
    #[serde(default = "default_conf_jitter")]
    pub confidence_jitter: f64,
    #[serde(default)]
    pub timestamp_jitter_ms: i64,
    #[serde(default = "default_speed")]
    pub speed_mm_s: f64,
    #[serde(default = "default_half")]
    pub bbox_half_px: f64,
    #[serde(default)]
    pub rig: RigSpec,
    #[serde(default)]
    pub cameras: CameraSpec,
    pub grid_b: GridBSpec,
    pub legs: Vec<LegSpec>,
}

fn check(ok: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

/// The two in-plane axes of `face`, in `x, y, z` order.
pub fn face_axes(face: Face) -> (Axis, Axis) {
    match face.axis() {
        Axis::X => (Axis::Y, Axis::Z),
        Axis::Y => (Axis::X, Axis::Z),
        Axis::Z => (Axis::X, Axis::Y),
    }
}

/// World point of face-local `(s, t)` on `face` of `b`.
pub fn face_point(b: &GridBox, face: Face, s: f64, t: f64) -> WorldPoint3D {
    let (ua, va) = face_axes(face);
    let mut p = WorldPoint3D::default();
    p.set(face.axis(), face.plane(b));
    p.set(ua, b.min(ua) + s);
    p.set(va, b.min(va) + t);
    p
}

impl SimScenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SimScenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let at = e
                .span()
                .map(|r| {
                    let line = text[..r.start].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            Error::config("scenario", format!("{msg}{at}"))
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn top_dropout(&self) -> f64 {
        self.top_dropout.unwrap_or(self.dropout)
    }

    pub fn grid_a(&self) -> Result<GridBox> {
        let [w, d, h] = self.rig.grid_a;
        GridBox::new(WorldPoint3D::default(), w, d, h).map_err(|e| Error::config("rig.grid_a", e.to_string()))
    }

    pub fn rig_geometry(&self) -> Result<RigGeometry> {
        let rig = RigGeometry {
            grid_a: self.grid_a()?,
            px_per_mm: self.rig.px_per_mm,
            marker_count: self.rig.marker_count,
        };
        rig.validate().map_err(|e| Error::config("rig", e.to_string()))?;
        Ok(rig)
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.frame_rate
    }

    pub fn total_frames(&self) -> u64 {
        self.legs.iter().map(|l| l.frames).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        check(self.frame_rate > 0.0 && self.frame_rate.is_finite(), "frame_rate", "must be > 0")?;
        check(self.noise_px >= 0.0 && self.noise_px.is_finite(), "noise_px", "must be >= 0")?;
        check(prob(self.dropout), "dropout", "must be in [0, 1]")?;
        check(prob(self.top_dropout()), "top_dropout", "must be in [0, 1]")?;
        check(prob(self.confidence_jitter), "confidence_jitter", "must be in [0, 1]")?;
        check(self.timestamp_jitter_ms >= 0, "timestamp_jitter_ms", "must be >= 0")?;
        check(self.speed_mm_s > 0.0 && self.speed_mm_s.is_finite(), "speed_mm_s", "must be > 0")?;
        check(self.bbox_half_px > 0.0, "bbox_half_px", "must be > 0")?;
        let c = &self.cameras;
        check(c.resolution[0] > 0 && c.resolution[1] > 0, "cameras.resolution", "must be positive")?;
        check(c.aligned_px_per_mm > 0.0, "cameras.aligned_px_per_mm", "must be > 0")?;
        check(c.side_distance_mm > 0.0, "cameras.side_distance_mm", "must be > 0")?;
        check(c.top_distance_mm > 0.0, "cameras.top_distance_mm", "must be > 0")?;
        check(c.focal_px > 0.0, "cameras.focal_px", "must be > 0")?;
        check(c.top_focal_px > 0.0, "cameras.top_focal_px", "must be > 0")?;
        let grid_a = self.rig_geometry()?.grid_a;
        if let Some(hgt) = c.side_height_mm {
            check((0.0..=grid_a.h_mm).contains(&hgt), "cameras.side_height_mm", "must lie within the grid height")?;
        }
        let grid_b = self.grid_b.to_box()?;
        check(grid_a.contains_box(&grid_b), "grid_b", "must lie inside grid_a")?;
        check(!self.legs.is_empty(), "legs", "at least one leg is required")?;
        for (i, leg) in self.legs.iter().enumerate() {
            let f = |name: &str| format!("legs[{i}].{name}");
            check(!leg.id.is_empty(), &f("id"), "must not be empty")?;
            check(leg.frames > 0, &f("frames"), "must be > 0")?;
            check(!leg.waypoints.is_empty(), &f("waypoints"), "at least one waypoint is required")?;
            let (ua, va) = face_axes(leg.face);
            let (eu, ev) = (grid_b.extent(ua), grid_b.extent(va));
            for (k, w) in leg.waypoints.iter().enumerate() {
                check(
                    w.iter().all(|v| v.is_finite())
                        && (0.0..=eu).contains(&w[0])
                        && (0.0..=ev).contains(&w[1]),
                    &format!("legs[{i}].waypoints[{k}]"),
                    format!("({}, {}) is outside the {} face ({eu} x {ev} mm)", w[0], w[1], leg.face),
                )?;
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for leg in &self.legs {
            check(ids.insert(leg.id.as_str()), "legs", format!("duplicate leg id `{}`", leg.id))?;
        }
        Ok(())
    }
}

// ---- cameras --------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SimCamera {
    pub id: String,
    pub role: CameraRole,
    pub mode: ProjectionMode,
    pub resolution: (u32, u32),
    pub axis_map: AxisMap,
    pub position: WorldPoint3D,
    /// Image right, image down and optical axis as world unit vectors.
    pub right: [f64; 3],
    pub down: [f64; 3],
    pub forward: [f64; 3],
    pub focal_px: f64,
    /// Aligned mode: image px per mm and the pixel of MG `(0, 0)`.
    pub aligned_scale: f64,
    pub aligned_origin: PixelPoint,
}

fn unit(axis: Axis, sign: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[axis as usize] = sign;
    v
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl SimCamera {
    pub fn new(id: &str, role: CameraRole, scenario: &SimScenario) -> Result<Self> {
        let grid = scenario.grid_a()?;
        let axis_map = AxisMap::default_for(role, &grid);
        let face = FaceExtent::of(&axis_map, &RigGeometry { grid_a: grid, px_per_mm: 1.0, marker_count: 20 });
        let c = &scenario.cameras;
        let [rw, rh] = c.resolution;
        let (cx, cy) = (rw as f64 / 2.0, rh as f64 / 2.0);
        let (distance, b_center, focal) = match role {
            CameraRole::Top => (c.top_distance_mm, face.height / 2.0, c.top_focal_px),
            CameraRole::Side(_) => {
                let height = c.side_height_mm.unwrap_or(grid.h_mm / 2.0);
                (c.side_distance_mm, grid.h_mm - height, c.focal_px)
            }
        };
        let s = c.aligned_px_per_mm;
        Ok(Self {
            id: id.to_string(),
            role,
            mode: scenario.mode,
            resolution: (rw, rh),
            axis_map,
            position: axis_map.to_world(face.width / 2.0, b_center, -distance),
            right: unit(axis_map.a.axis, axis_map.a.sign),
            down: unit(axis_map.b.axis, axis_map.b.sign),
            forward: unit(axis_map.depth.axis, axis_map.depth.sign),
            focal_px: focal,
            aligned_scale: s,
            aligned_origin: PixelPoint::new(cx - s * face.width / 2.0, cy - s * face.height / 2.0),
        })
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.resolution.0 as f64 / 2.0, self.resolution.1 as f64 / 2.0)
    }

    /// Image position of `p`; not clipped to the sensor.
    pub fn project(&self, p: &WorldPoint3D) -> Result<PixelPoint> {
        match self.mode {
            ProjectionMode::Aligned => {
                let (a, b, _) = self.axis_map.from_world(p);
                let o = self.aligned_origin;
                Ok(PixelPoint::new(o.u + self.aligned_scale * a, o.v + self.aligned_scale * b))
            }
            ProjectionMode::Pinhole => {
                let rel = [p.x - self.position.x, p.y - self.position.y, p.z - self.position.z];
                let depth = dot(rel, self.forward);
                if depth <= 0.0 {
                    return Err(Error::BehindCamera(format!(
                        "({}, {}, {}) is {depth} mm along the optical axis of `{}`",
                        p.x, p.y, p.z, self.id
                    )));
                }
                let pp = self.principal_point();
                Ok(PixelPoint::new(
                    pp.u + self.focal_px * dot(rel, self.right) / depth,
                    pp.v + self.focal_px * dot(rel, self.down) / depth,
                ))
            }
        }
    }

    /// Projection of face-local `(a, b)` mm at `depth` mm behind Face N.
    pub fn project_face(&self, a: f64, b: f64, depth: f64) -> Result<PixelPoint> {
        self.project(&self.axis_map.to_world(a, b, depth))
    }
}

pub fn rig_cameras(scenario: &SimScenario) -> Result<Vec<SimCamera>> {
    CAMERA_ORDER
        .iter()
        .map(|(id, role)| SimCamera::new(id, *role, scenario))
        .collect()
}

fn quad_of(cam: &SimCamera, [a0, b0, a1, b1]: [f64; 4], depth: f64) -> Result<[[f64; 2]; 4]> {
    let mut out = [[0.0; 2]; 4];
    for (k, (a, b)) in [(a0, b0), (a1, b0), (a1, b1), (a0, b1)].into_iter().enumerate() {
        let p = cam.project_face(a, b, depth)?;
        out[k] = [p.u, p.v];
    }
    Ok(out)
}

/// Marker picks the way an operator would click them on rendered frames.
pub fn marker_picks(scenario: &SimScenario, cameras: &[SimCamera]) -> Result<MarkerPicks> {
    let rig = scenario.rig_geometry()?;
    let unit_rig = RigGeometry { px_per_mm: 1.0, ..rig };
    let mut picks = Vec::new();
    for cam in cameras {
        let face = FaceExtent::of(&cam.axis_map, &unit_rig);
        let sub_areas = layout_rects(scenario.rig.layout, face.width, face.height)
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(SubAreaPick {
                    index: i as u32,
                    src_quad: quad_of(cam, r, 0.0)?,
                    mg_origin_mm: [r[0], r[1]],
                    size_mm: [r[2] - r[0], r[3] - r[1]],
                    canonical: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let outline = [0.0, 0.0, face.width, face.height];
        let (n, f) = match cam.role {
            CameraRole::Side(_) => (
                Some(quad_of(cam, outline, 0.0)?),
                Some(quad_of(cam, outline, face.depth)?),
            ),
            CameraRole::Top => (None, None),
        };
        picks.push(CameraPicks {
            id: cam.id.clone(),
            role: cam.role.to_string(),
            resolution: [cam.resolution.0, cam.resolution.1],
            axis_map: None,
            sub_areas,
            face_n_markers: n,
            face_f_markers: f,
        });
    }
    Ok(MarkerPicks {
        format_version: FORMAT_VERSION,
        grid_a: scenario.rig.grid_a,
        px_per_mm: scenario.rig.px_per_mm,
        marker_count: scenario.rig.marker_count,
        mde_aggregation: Default::default(),
        cameras: picks,
    })
}

// ---- path -----------------------------------------------------------------

fn path_point(waypoints: &[[f64; 2]], closed: bool, dist: f64) -> [f64; 2] {
    let mut pts: Vec<[f64; 2]> = waypoints.to_vec();
    if closed && pts.len() > 1 {
        pts.push(pts[0]);
    }
    let lens: Vec<f64> = pts
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lens.iter().sum();
    if total == 0.0 {
        return pts[0];
    }
    let mut s = if closed {
        dist.rem_euclid(total)
    } else {
        let r = dist.rem_euclid(2.0 * total);
        if r > total {
            2.0 * total - r
        } else {
            r
        }
    };
    for (k, &l) in lens.iter().enumerate() {
        if s <= l && l > 0.0 {
            let f = s / l;
            let (p, q) = (pts[k], pts[k + 1]);
            return [p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])];
        }
        s -= l;
    }
    *pts.last().expect("non-empty")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthSample {
    pub frame_index: u64,
    pub timestamp_ms: i64,
    pub position: WorldPoint3D,
    pub segment_id: String,
}

/// Sampled path and the segment windows of its legs.
pub fn sample_path(scenario: &SimScenario) -> Result<(Vec<TruthSample>, Vec<Segment>)> {
    let grid_b = scenario.grid_b.to_box()?;
    let period = scenario.frame_period_ms();
    let stamp = |g: u64| (g as f64 * period).round() as i64;
    let mut truth = Vec::new();
    let mut segments = Vec::new();
    let mut g = 0u64;
    for leg in &scenario.legs {
        let start = g;
        for k in 0..leg.frames {
            let dist = scenario.speed_mm_s * k as f64 / scenario.frame_rate;
            let [s, t] = path_point(&leg.waypoints, leg.closed, dist);
            truth.push(TruthSample {
                frame_index: g,
                timestamp_ms: stamp(g),
                position: face_point(&grid_b, leg.face, s, t),
                segment_id: leg.id.clone(),
            });
            g += 1;
        }
        segments.push(Segment::new(leg.id.clone(), stamp(start), stamp(g), leg.face)?);
    }
    Ok((truth, segments))
}

// ---- generation -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScenario {
    pub scenario: SimScenario,
    pub cameras: Vec<SimCamera>,
    pub picks: MarkerPicks,
    /// Per camera id, in frame order.
    pub detections: BTreeMap<String, Vec<Detection>>,
    pub truth: Vec<TruthSample>,
    pub segments: Vec<Segment>,
}

impl GeneratedScenario {
    pub fn all_detections(&self) -> Vec<Detection> {
        self.detections.values().flatten().cloned().collect()
    }
}

pub fn generate_scenario(scenario: &SimScenario) -> Result<GeneratedScenario> {
    scenario.validate()?;
    let cameras = rig_cameras(scenario)?;
    let picks = marker_picks(scenario, &cameras)?;
    let (truth, segments) = sample_path(scenario)?;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = Normal::new(0.0, scenario.noise_px).map_err(|e| Error::config("noise_px", e.to_string()))?;
    let jitter = scenario.timestamp_jitter_ms;
    let mut detections: BTreeMap<String, Vec<Detection>> =
        cameras.iter().map(|c| (c.id.clone(), Vec::new())).collect();
    for sample in &truth {
        for cam in &cameras {
            let drop_u: f64 = rng.random();
            let du = noise.sample(&mut rng);
            let dv = noise.sample(&mut rng);
            let conf_u: f64 = rng.random();
            let dt: i64 = rng.random_range(-jitter..=jitter);
            let p = match cam.role {
                CameraRole::Top => scenario.top_dropout(),
                CameraRole::Side(_) => scenario.dropout,
            };
            if drop_u < p {
                continue;
            }
            let c = cam.project(&sample.position)?;
            let center = PixelPoint::new(c.u + du, c.v + dv);
            let bbox = BBox::around(center, scenario.bbox_half_px);
            detections.get_mut(&cam.id).expect("camera listed").push(Detection {
                camera_id: cam.id.clone(),
                frame_index: sample.frame_index,
                timestamp_ms: (sample.timestamp_ms + dt).max(0),
                bbox,
                confidence: 1.0 - scenario.confidence_jitter * conf_u,
            });
        }
    }
    Ok(GeneratedScenario {
        scenario: scenario.clone(),
        cameras,
        picks,
        detections,
        truth,
        segments,
    })
}

/// Independent scenarios generated concurrently; each stays single-threaded.
pub fn generate_many(scenarios: &[SimScenario]) -> Vec<Result<GeneratedScenario>> {
    scenarios.par_iter().map(generate_scenario).collect()
}

pub fn write_truth<W: Write>(mut out: W, truth: &[TruthSample]) -> Result<()> {
    writeln!(out, "{}", TRUTH_HEADER.join(","))?;
    for t in truth {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.frame_index,
            t.timestamp_ms,
            g17(t.position.x),
            g17(t.position.y),
            g17(t.position.z),
            t.segment_id
        )?;
    }
    Ok(())
}

pub fn parse_truth<R: Read>(input: R) -> Result<Vec<TruthSample>> {
    let h = &TRUTH_HEADER;
    let (rows, _) = for_each_row(input, h, ParseMode::Strict, |rec, row| {
        Ok(TruthSample {
            frame_index: int(rec, 0, row, h)?,
            timestamp_ms: int(rec, 1, row, h)?,
            position: WorldPoint3D::new(real(rec, 2, row, h)?, real(rec, 3, row, h)?, real(rec, 4, row, h)?),
            segment_id: field(rec, 5, row, h)?.to_string(),
        })
    })?;
    Ok(rows)
}

pub const PICKS_FILE: &str = "picks.json";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn detections_file(camera_id: &str) -> String {
    format!("detections_{camera_id}.csv")
}

/// Writes every output into `dir`; returns the written paths.
pub fn write_outputs(generated: &GeneratedScenario, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put(PICKS_FILE, generated.picks.to_json().into_bytes())?;
    let mut det_files = Vec::new();
    for cam in &generated.cameras {
        let mut buf = Vec::new();
        write_detections(&mut buf, &generated.detections[&cam.id])?;
        let name = detections_file(&cam.id);
        put(&name, buf)?;
        det_files.push(name);
    }
    let mut buf = Vec::new();
    write_truth(&mut buf, &generated.truth)?;
    put(TRUTH_FILE, buf)?;
    let mut buf = Vec::new();
    write_segments(&mut buf, &generated.segments)?;
    put(SEGMENTS_FILE, buf)?;
    let s = &generated.scenario;
    let manifest = json!({
        "seed": s.seed,
        "mode": match s.mode { ProjectionMode::Aligned => "aligned", ProjectionMode::Pinhole => "pinhole" },
        "frames": generated.truth.len(),
        "frame_rate": s.frame_rate,
        "grid_b": {"origin": s.grid_b.origin, "size": s.grid_b.size},
        "picks": PICKS_FILE,
        "detections": det_files,
        "truth": TRUTH_FILE,
        "segments": SEGMENTS_FILE,
    });
    put(MANIFEST_FILE, json_pretty(&manifest).into_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::calibrate;

    fn scenario(mode: ProjectionMode) -> SimScenario {
        SimScenario {
            seed: 1,
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
            grid_b: GridBSpec { origin: [95.0, 95.0, 0.0], size: [200.0, 200.0, 400.0] },
            legs: vec![LegSpec {
                id: "floor".into(),
                face: Face::ZMin,
                waypoints: vec![[0.0, 0.0], [200.0, 0.0], [200.0, 200.0], [0.0, 200.0]],
                frames: 40,
                closed: true,
            }],
        }
    }

    #[test]
    fn aligned_projection_offsets() {
        let s = scenario(ProjectionMode::Aligned);
        let cam = SimCamera::new("cam0", CameraRole::Side(0), &s).unwrap();
        // face-bottom-left pixel: a = 0, b = H
        let origin = cam.project(&WorldPoint3D::new(0.0, 0.0, 0.0)).unwrap();
        for y in [0.0, 123.0, 390.0] {
            let p = cam.project(&WorldPoint3D::new(100.0, y, 200.0)).unwrap();
            assert_eq!((p.u - origin.u, origin.v - p.v), (100.0, 200.0));
        }
    }

    #[test]
    fn pinhole_axis_hits_principal_point() {
        let s = scenario(ProjectionMode::Pinhole);
        for (id, role) in CAMERA_ORDER {
            let cam = SimCamera::new(id, role, &s).unwrap();
            for depth in [0.0, 100.0, 390.0] {
                let (a, b) = match role {
                    CameraRole::Top => (195.0, 195.0),
                    _ => (195.0, 425.0),
                };
                let p = cam.project_face(a, b, depth).unwrap();
                assert!((p.u - 960.0).abs() < 1e-9 && (p.v - 540.0).abs() < 1e-9, "{id} {p:?}");
            }
        }
        let cam = SimCamera::new("cam0", CameraRole::Side(0), &s).unwrap();
        assert!(matches!(
            cam.project(&WorldPoint3D::new(195.0, -300.0, 425.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn camera_bases_are_right_handed() {
        let s = scenario(ProjectionMode::Pinhole);
        for cam in rig_cameras(&s).unwrap() {
            let (r, d, f) = (cam.right, cam.down, cam.forward);
            let cross = [r[1] * d[2] - r[2] * d[1], r[2] * d[0] - r[0] * d[2], r[0] * d[1] - r[1] * d[0]];
            assert_eq!(cross, f, "{}", cam.id);
        }
    }

    #[test]
    fn path_stays_on_face() {
        let s = scenario(ProjectionMode::Aligned);
        let (truth, segs) = sample_path(&s).unwrap();
        assert_eq!(truth.len(), 40);
        assert_eq!(segs[0].t_end_ms, 2000);
        for t in &truth {
            assert_eq!(t.position.z, 0.0);
            assert!((95.0..=295.0).contains(&t.position.x) && (95.0..=295.0).contains(&t.position.y));
        }
        // 40 mm/s at 20 fps: 2 mm per frame along the first edge
        assert_eq!(truth[3].position, WorldPoint3D::new(101.0, 95.0, 0.0));
    }

    #[test]
    fn open_path_reverses() {
        let w = [[0.0, 0.0], [10.0, 0.0]];
        assert_eq!(path_point(&w, false, 4.0), [4.0, 0.0]);
        assert_eq!(path_point(&w, false, 14.0), [6.0, 0.0]);
        assert_eq!(path_point(&w, true, 24.0), [4.0, 0.0]);
    }

    #[test]
    fn generated_picks_calibrate() {
        for mode in [ProjectionMode::Aligned, ProjectionMode::Pinhole] {
            let s = scenario(mode);
            let g = generate_scenario(&s).unwrap();
            let calib = calibrate(&g.picks).unwrap();
            assert_eq!(calib.profiles.len(), 5);
            assert_eq!(g.detections["cam0"].len(), 40);
            let p = calib.by_role(CameraRole::Side(0)).unwrap();
            match mode {
                ProjectionMode::Aligned => assert_eq!((p.mde_h, p.mde_v), (0.0, 0.0)),
                ProjectionMode::Pinhole => assert!(p.mde_h > 0.0 && p.mde_v > 0.0),
            }
        }
    }

    #[test]
    fn toml_round_trip_and_diagnostics() {
        let s = scenario(ProjectionMode::Pinhole);
        assert_eq!(SimScenario::from_toml(&s.to_toml()).unwrap(), s);
        let mut bad = s.clone();
        bad.dropout = 1.5;
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "dropout"));
        let mut bad = s.clone();
        bad.legs[0].waypoints[1] = [250.0, 0.0];
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "legs[0].waypoints[1]"));
        let err = SimScenario::from_toml("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn truth_csv_round_trip() {
        let g = generate_scenario(&scenario(ProjectionMode::Aligned)).unwrap();
        let mut buf = Vec::new();
        write_truth(&mut buf, &g.truth).unwrap();
        assert_eq!(parse_truth(buf.as_slice()).unwrap(), g.truth);
    }
}

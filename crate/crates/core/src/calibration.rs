//! Per-camera transform bundles and their on-disk form.
//!
//! A camera's view of its near face (Face N) is split into marker-bounded
//! sub-areas. Each sub-area is rectified onto a canonical rectangle by a
//! homography, rescaled to its physical size, and placed at its origin in
//! the camera's Model Grid (MG). MG coordinates are model px; at
//! `px_per_mm == 1` one model px is one millimetre on the face.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    apply_homography, apply_scale, compute_homography, point_in_quad, Axis, Homography,
    ModelPoint2D, PixelPoint, Quad, ScaleRatios, WorldPoint3D,
};
use crate::numfmt::json_pretty;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CameraRole {
    Side(u8),
    Top,
}

impl CameraRole {
    pub fn side_index(self) -> Option<u8> {
        match self {
            CameraRole::Side(i) => Some(i),
            CameraRole::Top => None,
        }
    }
}

impl fmt::Display for CameraRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraRole::Side(i) => write!(f, "side:{i}"),
            CameraRole::Top => f.write_str("top"),
        }
    }
}

impl std::str::FromStr for CameraRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "top" {
            return Ok(CameraRole::Top);
        }
        match s.strip_prefix("side:").and_then(|i| i.parse::<u8>().ok()) {
            Some(i) if i < 4 => Ok(CameraRole::Side(i)),
            _ => Err(format!("expected `side:0`..`side:3` or `top`, got `{s}`")),
        }
    }
}

impl Serialize for CameraRole {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CameraRole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box in world millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub origin: WorldPoint3D,
    pub w_mm: f64,
    pub d_mm: f64,
    pub h_mm: f64,
}

impl GridBox {
    pub fn new(origin: WorldPoint3D, w_mm: f64, d_mm: f64, h_mm: f64) -> Result<Self> {
        for (name, v) in [("w_mm", w_mm), ("d_mm", d_mm), ("h_mm", h_mm)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveLength(format!("{name} = {v}")));
            }
        }
        Ok(Self {
            origin,
            w_mm,
            d_mm,
            h_mm,
        })
    }

    /// Grid A default: 390 W × 390 D × 850 H mm at the world origin.
    pub fn grid_a_default() -> Self {
        Self {
            origin: WorldPoint3D::default(),
            w_mm: 390.0,
            d_mm: 390.0,
            h_mm: 850.0,
        }
    }

    pub fn extent(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.w_mm,
            Axis::Y => self.d_mm,
            Axis::Z => self.h_mm,
        }
    }

    pub fn min(&self, axis: Axis) -> f64 {
        self.origin.get(axis)
    }

    pub fn max(&self, axis: Axis) -> f64 {
        self.origin.get(axis) + self.extent(axis)
    }

    pub fn contains_box(&self, other: &GridBox) -> bool {
        [Axis::X, Axis::Y, Axis::Z]
            .iter()
            .all(|&a| other.min(a) >= self.min(a) && other.max(a) <= self.max(a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigGeometry {
    pub grid_a: GridBox,
    pub px_per_mm: f64,
    pub marker_count: u32,
}

impl Default for RigGeometry {
    fn default() -> Self {
        Self {
            grid_a: GridBox::grid_a_default(),
            px_per_mm: 1.0,
            marker_count: 20,
        }
    }
}

impl RigGeometry {
    pub fn validate(&self) -> Result<()> {
        GridBox::new(
            self.grid_a.origin,
            self.grid_a.w_mm,
            self.grid_a.d_mm,
            self.grid_a.h_mm,
        )?;
        if !(self.px_per_mm > 0.0 && self.px_per_mm.is_finite()) {
            return Err(Error::NonPositiveLength(format!(
                "px_per_mm = {}",
                self.px_per_mm
            )));
        }
        Ok(())
    }
}

/// `world[axis] = offset_mm + sign * value_mm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisLink {
    pub axis: Axis,
    pub sign: f64,
    pub offset_mm: f64,
}

impl AxisLink {
    pub const fn new(axis: Axis, sign: f64, offset_mm: f64) -> Self {
        Self {
            axis,
            sign,
            offset_mm,
        }
    }

    pub fn to_world(&self, value_mm: f64) -> f64 {
        self.offset_mm + self.sign * value_mm
    }

    pub fn from_world(&self, world: f64) -> f64 {
        (world - self.offset_mm) * self.sign
    }
}

/// How a camera's MG horizontal (`a`), vertical (`b`), and viewing depth
/// relate to world axes. Depth is measured from the camera's Face N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisMap {
    pub a: AxisLink,
    pub b: AxisLink,
    pub depth: AxisLink,
}

impl AxisMap {
    /// Default labelling: the world origin is the corner shared by the Face N
    /// planes of side cameras 3 and 0; side cameras go counter-clockwise
    /// seen from above; MG origins are the top-left corner of each view.
    pub fn default_for(role: CameraRole, grid: &GridBox) -> AxisMap {
        let (w, d, h) = (grid.w_mm, grid.d_mm, grid.h_mm);
        let (ox, oy, oz) = (grid.origin.x, grid.origin.y, grid.origin.z);
        let down = AxisLink::new(Axis::Z, -1.0, oz + h);
        match role {
            CameraRole::Side(0) => AxisMap {
                a: AxisLink::new(Axis::X, 1.0, ox),
                b: down,
                depth: AxisLink::new(Axis::Y, 1.0, oy),
            },
            CameraRole::Side(1) => AxisMap {
                a: AxisLink::new(Axis::Y, 1.0, oy),
                b: down,
                depth: AxisLink::new(Axis::X, -1.0, ox + w),
            },
            CameraRole::Side(2) => AxisMap {
                a: AxisLink::new(Axis::X, -1.0, ox + w),
                b: down,
                depth: AxisLink::new(Axis::Y, -1.0, oy + d),
            },
            CameraRole::Side(_) => AxisMap {
                a: AxisLink::new(Axis::Y, -1.0, oy + d),
                b: down,
                depth: AxisLink::new(Axis::X, 1.0, ox),
            },
            CameraRole::Top => AxisMap {
                a: AxisLink::new(Axis::X, 1.0, ox),
                b: AxisLink::new(Axis::Y, -1.0, oy + d),
                depth: AxisLink::new(Axis::Z, -1.0, oz + h),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [self.a.axis, self.b.axis, self.depth.axis];
        if axes[0] == axes[1] || axes[0] == axes[2] || axes[1] == axes[2] {
            return Err(Error::config("axis_map", "a, b and depth must use distinct axes"));
        }
        for (name, l) in [("a", self.a), ("b", self.b), ("depth", self.depth)] {
            if l.sign != 1.0 && l.sign != -1.0 {
                return Err(Error::config(
                    format!("axis_map.{name}.sign"),
                    "sign must be 1 or -1",
                ));
            }
        }
        Ok(())
    }

    pub fn to_world(&self, a_mm: f64, b_mm: f64, depth_mm: f64) -> WorldPoint3D {
        let mut p = WorldPoint3D::default();
        p.set(self.a.axis, self.a.to_world(a_mm));
        p.set(self.b.axis, self.b.to_world(b_mm));
        p.set(self.depth.axis, self.depth.to_world(depth_mm));
        p
    }

    /// Inverse of [`AxisMap::to_world`]: `(a_mm, b_mm, depth_mm)`.
    pub fn from_world(&self, p: &WorldPoint3D) -> (f64, f64, f64) {
        (
            self.a.from_world(p.get(self.a.axis)),
            self.b.from_world(p.get(self.b.axis)),
            self.depth.from_world(p.get(self.depth.axis)),
        )
    }
}

/// Face dimensions as seen by one camera, in model px.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceExtent {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

impl FaceExtent {
    pub fn of(axis_map: &AxisMap, rig: &RigGeometry) -> Self {
        let s = rig.px_per_mm;
        Self {
            width: rig.grid_a.extent(axis_map.a.axis) * s,
            height: rig.grid_a.extent(axis_map.b.axis) * s,
            depth: rig.grid_a.extent(axis_map.depth.axis) * s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubArea {
    pub index: u32,
    pub src: Quad,
    pub canonical_width: f64,
    pub canonical_height: f64,
    pub mg_origin: ModelPoint2D,
    pub homography: Homography,
    pub scale: ScaleRatios,
}

impl SubArea {
    fn canonical_quad(w: f64, h: f64) -> Result<Quad> {
        Quad::rect(0.0, 0.0, w, h)
    }

    /// Maps an image point (assumed inside `src`) into the MG frame.
    pub fn map(&self, p: PixelPoint) -> Result<ModelPoint2D> {
        let local = apply_homography(&self.homography, p)?;
        let shifted = ModelPoint2D::new(self.mg_origin.a + local.a, self.mg_origin.b + local.b);
        Ok(apply_scale(self.scale, shifted, self.mg_origin))
    }

    /// MG size after scaling.
    pub fn mg_size(&self) -> (f64, f64) {
        (
            self.canonical_width * self.scale.rx,
            self.canonical_height * self.scale.ry,
        )
    }
}

/// `rx = required_w / mapped_w`, `ry = required_h / mapped_h`.
pub fn compute_scale_ratios(mapped: (f64, f64), required: (f64, f64)) -> Result<ScaleRatios> {
    for (name, v) in [
        ("mapped width", mapped.0),
        ("mapped height", mapped.1),
        ("required width", required.0),
        ("required height", required.1),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveLength(format!("{name} = {v}")));
        }
    }
    ScaleRatios::new(required.0 / mapped.0, required.1 / mapped.1)
}

/// Rectifies `marker_quad` onto a `canonical` rectangle and scales it to
/// `required` MG size.
pub fn build_sub_area(
    index: u32,
    marker_quad: &Quad,
    canonical: (f64, f64),
    required: (f64, f64),
    mg_origin: ModelPoint2D,
) -> Result<SubArea> {
    let scale = compute_scale_ratios(canonical, required)?;
    let dst = SubArea::canonical_quad(canonical.0, canonical.1)?;
    let homography = compute_homography(marker_quad, &dst)?;
    Ok(SubArea {
        index,
        src: *marker_quad,
        canonical_width: canonical.0,
        canonical_height: canonical.1,
        mg_origin,
        homography,
        scale,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraProfile {
    pub camera_id: String,
    pub role: CameraRole,
    pub resolution: (u32, u32),
    pub sub_areas: Vec<SubArea>,
    pub mde_h: f64,
    pub mde_v: f64,
    pub axis_map: AxisMap,
}

impl CameraProfile {
    /// Sorts sub-areas by index and checks profile invariants.
    pub fn new(
        camera_id: impl Into<String>,
        role: CameraRole,
        resolution: (u32, u32),
        mut sub_areas: Vec<SubArea>,
        axis_map: AxisMap,
    ) -> Result<Self> {
        sub_areas.sort_by_key(|s| s.index);
        let p = Self {
            camera_id: camera_id.into(),
            role,
            resolution,
            sub_areas,
            mde_h: 0.0,
            mde_v: 0.0,
            axis_map,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let loc = format!("camera `{}`", self.camera_id);
        if self.sub_areas.is_empty() {
            return Err(Error::format(loc, "at least one sub-area is required"));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(Error::format(loc, "resolution must be positive"));
        }
        if !(self.mde_h >= 0.0 && self.mde_v >= 0.0) {
            return Err(Error::format(loc, "mde_h and mde_v must be >= 0"));
        }
        if self.sub_areas.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(Error::format(loc, "duplicate sub-area index"));
        }
        self.axis_map.validate()
    }

    /// Locates the sub-area containing `p` (lowest index wins on shared
    /// boundaries) and returns its MG coordinates plus that index.
    pub fn to_model_grid(&self, p: PixelPoint) -> Result<(ModelPoint2D, u32)> {
        let sa = self
            .sub_areas
            .iter()
            .find(|sa| point_in_quad(&sa.src, p))
            .ok_or_else(|| Error::OutsideCalibratedArea {
                camera: self.camera_id.clone(),
                u: p.u,
                v: p.v,
            })?;
        Ok((sa.map(p)?, sa.index))
    }
}

/// Free-function form of [`CameraProfile::to_model_grid`].
pub fn to_model_grid(profile: &CameraProfile, p: PixelPoint) -> Result<(ModelPoint2D, u32)> {
    profile.to_model_grid(p)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MdeAggregation {
    #[default]
    Max,
    Mean,
}

/// Largest per-axis MG displacement between matching Face N and Face F
/// marker corners.
pub fn measure_mde(
    profile: &CameraProfile,
    face_n_markers: &Quad,
    face_f_markers: &Quad,
) -> Result<(f64, f64)> {
    measure_mde_with(profile, face_n_markers, face_f_markers, MdeAggregation::Max)
}

pub fn measure_mde_with(
    profile: &CameraProfile,
    face_n_markers: &Quad,
    face_f_markers: &Quad,
    aggregation: MdeAggregation,
) -> Result<(f64, f64)> {
    if profile.role == CameraRole::Top {
        return Err(Error::config(
            format!("cameras[{}]", profile.camera_id),
            "depth error is measured for side cameras only",
        ));
    }
    let mut dh = [0.0; 4];
    let mut dv = [0.0; 4];
    for i in 0..4 {
        let (n, _) = profile.to_model_grid(face_n_markers.corners()[i])?;
        let (f, _) = profile.to_model_grid(face_f_markers.corners()[i])?;
        dh[i] = (n.a - f.a).abs();
        dv[i] = (n.b - f.b).abs();
    }
    Ok(match aggregation {
        MdeAggregation::Max => (
            dh.iter().copied().fold(0.0, f64::max),
            dv.iter().copied().fold(0.0, f64::max),
        ),
        MdeAggregation::Mean => (dh.iter().sum::<f64>() / 4.0, dv.iter().sum::<f64>() / 4.0),
    })
}

/// A loaded calibration: rig geometry plus every camera profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub rig: RigGeometry,
    pub profiles: Vec<CameraProfile>,
}

impl Calibration {
    pub fn new(rig: RigGeometry, profiles: Vec<CameraProfile>) -> Result<Self> {
        rig.validate()?;
        let mut seen_roles = std::collections::BTreeSet::new();
        let mut seen_ids = std::collections::BTreeSet::new();
        for p in &profiles {
            p.validate()?;
            if !seen_roles.insert(p.role) {
                return Err(Error::format(
                    format!("camera `{}`", p.camera_id),
                    format!("role {} assigned twice", p.role),
                ));
            }
            if !seen_ids.insert(p.camera_id.clone()) {
                return Err(Error::format(
                    format!("camera `{}`", p.camera_id),
                    "duplicate camera id",
                ));
            }
        }
        Ok(Self { rig, profiles })
    }

    pub fn profile(&self, camera_id: &str) -> Option<&CameraProfile> {
        self.profiles.iter().find(|p| p.camera_id == camera_id)
    }

    pub fn by_role(&self, role: CameraRole) -> Option<&CameraProfile> {
        self.profiles.iter().find(|p| p.role == role)
    }

    pub fn face_extent(&self, profile: &CameraProfile) -> FaceExtent {
        FaceExtent::of(&profile.axis_map, &self.rig)
    }
}

// ---- file format ----------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct GridDims {
    pub w_mm: f64,
    pub d_mm: f64,
    pub h_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_mm: Option<[f64; 3]>,
}

impl GridDims {
    pub(crate) fn to_box(&self) -> Result<GridBox> {
        let o = self.origin_mm.unwrap_or([0.0; 3]);
        GridBox::new(WorldPoint3D::new(o[0], o[1], o[2]), self.w_mm, self.d_mm, self.h_mm)
    }

    pub(crate) fn from_box(b: &GridBox) -> Self {
        let o = b.origin;
        Self {
            w_mm: b.w_mm,
            d_mm: b.d_mm,
            h_mm: b.h_mm,
            origin_mm: (o != WorldPoint3D::default()).then_some([o.x, o.y, o.z]),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibFile {
    format_version: u64,
    grid_a: GridDims,
    #[serde(default = "one")]
    px_per_mm: f64,
    #[serde(default = "twenty")]
    marker_count: u32,
    cameras: Vec<CameraEntry>,
}

fn one() -> f64 {
    1.0
}

fn twenty() -> u32 {
    20
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    id: String,
    role: String,
    resolution: Vec<u32>,
    #[serde(default)]
    mde_h: f64,
    #[serde(default)]
    mde_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis_map: Option<AxisMap>,
    sub_areas: Vec<SubAreaEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubAreaEntry {
    index: u32,
    src_quad: Vec<Vec<f64>>,
    canonical: Vec<f64>,
    mg_origin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    homography: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Vec<f64>>,
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::format(
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

pub(crate) fn fixed<const N: usize>(v: &[f64], path: &str, what: &str) -> Result<[f64; N]> {
    <[f64; N]>::try_from(v).map_err(|_| {
        Error::format(path, format!("expected {N} {what}, found {}", v.len()))
    })
}

pub(crate) fn quad_from(rows: &[Vec<f64>], path: &str) -> Result<Quad> {
    if rows.len() != 4 {
        return Err(Error::format(
            path,
            format!("expected 4 corners, found {}", rows.len()),
        ));
    }
    let mut pts = [[0.0; 2]; 4];
    for (i, r) in rows.iter().enumerate() {
        pts[i] = fixed::<2>(r, &format!("{path}[{i}]"), "coordinates")?;
    }
    Quad::from_array(pts).map_err(|e| Error::format(path, e.to_string()))
}

pub(crate) fn role_from(s: &str, path: &str) -> Result<CameraRole> {
    s.parse().map_err(|e: String| Error::format(path, e))
}

pub(crate) fn resolution_from(v: &[u32], path: &str) -> Result<(u32, u32)> {
    match v {
        [w, h] if *w > 0 && *h > 0 => Ok((*w, *h)),
        _ => Err(Error::format(path, "expected [width, height] with positive entries")),
    }
}

fn sub_area_from(e: &SubAreaEntry, path: &str) -> Result<SubArea> {
    let src = quad_from(&e.src_quad, &format!("{path}.src_quad"))?;
    let [cw, ch] = fixed::<2>(&e.canonical, &format!("{path}.canonical"), "values")?;
    if !(cw > 0.0 && ch > 0.0) {
        return Err(Error::format(format!("{path}.canonical"), "dims must be > 0"));
    }
    let [oa, ob] = fixed::<2>(&e.mg_origin, &format!("{path}.mg_origin"), "values")?;
    let scale = match &e.scale {
        Some(s) => {
            let [rx, ry] = fixed::<2>(s, &format!("{path}.scale"), "values")?;
            ScaleRatios::new(rx, ry).map_err(|err| Error::format(format!("{path}.scale"), err.to_string()))?
        }
        None => ScaleRatios::IDENTITY,
    };
    let homography = match &e.homography {
        Some(rows) => {
            let hp = format!("{path}.homography");
            if rows.len() != 3 {
                return Err(Error::format(hp, format!("expected 3 rows, found {}", rows.len())));
            }
            let mut m = [[0.0; 3]; 3];
            for (i, r) in rows.iter().enumerate() {
                m[i] = fixed::<3>(r, &format!("{hp}[{i}]"), "entries")?;
            }
            Homography::from_stored(m).map_err(|err| Error::format(hp, err.to_string()))?
        }
        None => compute_homography(&src, &SubArea::canonical_quad(cw, ch)?)
            .map_err(|err| Error::format(format!("{path}.src_quad"), err.to_string()))?,
    };
    Ok(SubArea {
        index: e.index,
        src,
        canonical_width: cw,
        canonical_height: ch,
        mg_origin: ModelPoint2D::new(oa, ob),
        homography,
        scale,
    })
}

/// Parses a `rig.calib` document.
pub fn parse_calibration(text: &str) -> Result<Calibration> {
    let file: CalibFile = parse_json(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let grid_a = file
        .grid_a
        .to_box()
        .map_err(|e| Error::format("grid_a", e.to_string()))?;
    let rig = RigGeometry {
        grid_a,
        px_per_mm: file.px_per_mm,
        marker_count: file.marker_count,
    };
    rig.validate()
        .map_err(|e| Error::format("px_per_mm", e.to_string()))?;

    let mut profiles = Vec::with_capacity(file.cameras.len());
    for (ci, cam) in file.cameras.iter().enumerate() {
        let path = format!("cameras[{ci}]");
        let role = role_from(&cam.role, &format!("{path}.role"))?;
        let resolution = resolution_from(&cam.resolution, &format!("{path}.resolution"))?;
        let sub_areas = cam
            .sub_areas
            .iter()
            .enumerate()
            .map(|(si, e)| sub_area_from(e, &format!("{path}.sub_areas[{si}]")))
            .collect::<Result<Vec<_>>>()?;
        let axis_map = cam
            .axis_map
            .unwrap_or_else(|| AxisMap::default_for(role, &rig.grid_a));
        let mut profile = CameraProfile::new(cam.id.clone(), role, resolution, sub_areas, axis_map)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        profile.mde_h = cam.mde_h;
        profile.mde_v = cam.mde_v;
        profile
            .validate()
            .map_err(|e| Error::format(&path, e.to_string()))?;
        profiles.push(profile);
    }
    Calibration::new(rig, profiles)
}

/// Serialises a calibration. Reals carry 17 significant digits, so
/// [`parse_calibration`] reproduces every field bit-exactly.
pub fn calibration_to_string(calib: &Calibration) -> String {
    let file = CalibFile {
        format_version: FORMAT_VERSION,
        grid_a: GridDims::from_box(&calib.rig.grid_a),
        px_per_mm: calib.rig.px_per_mm,
        marker_count: calib.rig.marker_count,
        cameras: calib
            .profiles
            .iter()
            .map(|p| CameraEntry {
                id: p.camera_id.clone(),
                role: p.role.to_string(),
                resolution: vec![p.resolution.0, p.resolution.1],
                mde_h: p.mde_h,
                mde_v: p.mde_v,
                axis_map: Some(p.axis_map),
                sub_areas: p
                    .sub_areas
                    .iter()
                    .map(|s| SubAreaEntry {
                        index: s.index,
                        src_quad: s.src.to_array().iter().map(|c| c.to_vec()).collect(),
                        canonical: vec![s.canonical_width, s.canonical_height],
                        mg_origin: vec![s.mg_origin.a, s.mg_origin.b],
                        homography: Some(
                            s.homography.matrix().iter().map(|r| r.to_vec()).collect(),
                        ),
                        scale: Some(vec![s.scale.rx, s.scale.ry]),
                    })
                    .collect(),
            })
            .collect(),
    };
    let value = serde_json::to_value(&file).expect("calibration serialises");
    json_pretty(&value)
}

pub fn save_calibration(path: &Path, calib: &Calibration) -> Result<()> {
    std::fs::write(path, calibration_to_string(calib))?;
    Ok(())
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    parse_calibration(&std::fs::read_to_string(path)?)
}

// ---- marker picks (calibration inputs) ------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubAreaPick {
    pub index: u32,
    /// Image corners TL, TR, BR, BL.
    pub src_quad: [[f64; 2]; 4],
    /// Sub-area origin inside the face, mm.
    pub mg_origin_mm: [f64; 2],
    /// Physical sub-area size, mm.
    pub size_mm: [f64; 2],
    /// Rectification target; defaults to the quad's mean image side lengths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPicks {
    pub id: String,
    pub role: String,
    pub resolution: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_map: Option<AxisMap>,
    pub sub_areas: Vec<SubAreaPick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_n_markers: Option<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_f_markers: Option<[[f64; 2]; 4]>,
}

/// Hand- or simulator-produced marker picks that `calibrate` turns into a
/// [`Calibration`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerPicks {
    pub format_version: u64,
    pub grid_a: [f64; 3],
    #[serde(default = "one")]
    pub px_per_mm: f64,
    #[serde(default = "twenty")]
    pub marker_count: u32,
    #[serde(default)]
    pub mde_aggregation: MdeAggregation,
    pub cameras: Vec<CameraPicks>,
}

impl MarkerPicks {
    pub fn to_json(&self) -> String {
        json_pretty(&serde_json::to_value(self).expect("picks serialise"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let picks: MarkerPicks = parse_json(text)?;
        if picks.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: picks.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(picks)
    }
}

/// Builds every camera profile from marker picks.
pub fn calibrate(picks: &MarkerPicks) -> Result<Calibration> {
    let [w, d, h] = picks.grid_a;
    let rig = RigGeometry {
        grid_a: GridBox::new(WorldPoint3D::default(), w, d, h)
            .map_err(|e| Error::format("grid_a", e.to_string()))?,
        px_per_mm: picks.px_per_mm,
        marker_count: picks.marker_count,
    };
    rig.validate()
        .map_err(|e| Error::format("px_per_mm", e.to_string()))?;
    let ppm = rig.px_per_mm;

    let mut profiles = Vec::new();
    for (ci, cam) in picks.cameras.iter().enumerate() {
        let path = format!("cameras[{ci}]");
        let role = role_from(&cam.role, &format!("{path}.role"))?;
        let resolution = resolution_from(&cam.resolution, &format!("{path}.resolution"))?;
        let mut sub_areas = Vec::new();
        for (si, s) in cam.sub_areas.iter().enumerate() {
            let sp = format!("{path}.sub_areas[{si}]");
            let quad = Quad::from_array(s.src_quad)
                .map_err(|e| Error::format(format!("{sp}.src_quad"), e.to_string()))?;
            let required = (s.size_mm[0] * ppm, s.size_mm[1] * ppm);
            let canonical = match s.canonical {
                Some([cw, ch]) => (cw, ch),
                None => quad.mean_side_lengths(),
            };
            let origin = ModelPoint2D::new(s.mg_origin_mm[0] * ppm, s.mg_origin_mm[1] * ppm);
            let sa = build_sub_area(s.index, &quad, canonical, required, origin)
                .map_err(|e| Error::format(&sp, e.to_string()))?;
            sub_areas.push(sa);
        }
        let axis_map = cam
            .axis_map
            .unwrap_or_else(|| AxisMap::default_for(role, &rig.grid_a));
        let mut profile = CameraProfile::new(cam.id.clone(), role, resolution, sub_areas, axis_map)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        if let (Some(n), Some(f)) = (cam.face_n_markers, cam.face_f_markers) {
            let n = Quad::from_array(n)
                .map_err(|e| Error::format(format!("{path}.face_n_markers"), e.to_string()))?;
            let f = Quad::from_array(f)
                .map_err(|e| Error::format(format!("{path}.face_f_markers"), e.to_string()))?;
            let (mh, mv) = measure_mde_with(&profile, &n, &f, picks.mde_aggregation)
                .map_err(|e| Error::format(&path, e.to_string()))?;
            profile.mde_h = mh;
            profile.mde_v = mv;
        }
        profiles.push(profile);
    }
    Calibration::new(rig, profiles)
}

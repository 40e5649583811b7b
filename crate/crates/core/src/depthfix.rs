//! Parallax (depth error) correction of side-camera Model-Grid points.
//!
//! A subject further from a side camera appears pulled toward the centre of
//! that camera's view. The shift is zero on Face N and largest on Face F
//! (the camera's MDE); laterally it is zero on the centre axis and largest
//! at Face S. The correction pushes the MG point back outward by
//!
//! ```text
//! DEF   = MDE · NI_top / NF_top
//! adj_h = DEF · IC_ax / SC_ax
//! ```
//!
//! with the top-camera distances `NI_top`, `NF_top`, `IC_ax`, `SC_ax`. The
//! vertical axis uses `adj_v = DEF_v · f`, where `f` is the subject's offset
//! from mid-height as a fraction of the grid half-height seen at the
//! subject's depth (see [`vertical_offset_fraction`]).

use crate::calibration::{AxisMap, CameraProfile, FaceExtent};
use crate::error::{Error, Result};
use crate::geom::{ModelPoint2D, WorldPoint3D};

/// Top-view distances for one side camera, in model px.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthObservation {
    /// Face N → subject.
    pub ni_top: f64,
    /// Face N → Face F.
    pub nf_top: f64,
    /// Subject → centre axis.
    pub ic_ax: f64,
    /// Centre axis → Face S.
    pub sc_ax: f64,
}

impl DepthObservation {
    pub fn new(ni_top: f64, nf_top: f64, ic_ax: f64, sc_ax: f64) -> Result<Self> {
        let obs = Self {
            ni_top,
            nf_top,
            ic_ax,
            sc_ax,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nf_top > 0.0
            && (0.0..=self.nf_top).contains(&self.ni_top)
            && self.sc_ax > 0.0
            && (0.0..=self.sc_ax).contains(&self.ic_ax);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidObservation(format!(
                "need 0 <= ni ({}) <= nf ({}), nf > 0, 0 <= ic ({}) <= sc ({}), sc > 0",
                self.ni_top, self.nf_top, self.ic_ax, self.sc_ax
            )))
        }
    }

    /// Observation for the camera described by `axis_map`/`face`, given a
    /// top-view world estimate of the subject. Distances are clamped to the
    /// grid, since top-view estimates can stray slightly outside it.
    pub fn from_top_estimate(
        axis_map: &AxisMap,
        face: &FaceExtent,
        px_per_mm: f64,
        top: &WorldPoint3D,
    ) -> Result<Self> {
        let depth = axis_map.depth.from_world(top.get(axis_map.depth.axis)) * px_per_mm;
        let lateral = axis_map.a.from_world(top.get(axis_map.a.axis)) * px_per_mm;
        let nf = face.depth;
        let sc = face.width / 2.0;
        Self::new(
            depth.clamp(0.0, nf),
            nf,
            (lateral - sc).abs().min(sc),
            sc,
        )
    }
}

/// `mde · ni_top / nf_top`.
pub fn compute_def(mde: f64, obs: &DepthObservation) -> Result<f64> {
    obs.validate()?;
    if !(mde >= 0.0) {
        return Err(Error::InvalidObservation(format!("mde must be >= 0, got {mde}")));
    }
    Ok(mde * obs.ni_top / obs.nf_top)
}

/// `def · ic_ax / sc_ax`.
pub fn final_adjustment(def: f64, obs: &DepthObservation) -> Result<f64> {
    obs.validate()?;
    Ok(def * obs.ic_ax / obs.sc_ax)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DepthCorrection {
    pub def_h: f64,
    pub def_v: f64,
    pub adj_h: f64,
    pub adj_v: f64,
    pub applied: bool,
}

/// `|b − mid| / (half-height − def_v)`, clamped to `[0, 1]`: the subject's
/// vertical offset relative to the grid half-height as it appears at the
/// subject's depth.
pub fn vertical_offset_fraction(face: &FaceExtent, mg_b: f64, def_v: f64) -> f64 {
    let half = face.height / 2.0;
    let offset = (mg_b - half).abs();
    let apparent = half - def_v;
    if apparent <= 0.0 {
        return if offset > 0.0 { 1.0 } else { 0.0 };
    }
    (offset / apparent).clamp(0.0, 1.0)
}

fn outward(value: f64, center: f64, amount: f64) -> (f64, f64) {
    if value > center {
        (value + amount, amount)
    } else if value < center {
        (value - amount, amount)
    } else {
        (value, 0.0)
    }
}

/// Pushes `mg` away from the face centre by the horizontal and vertical
/// adjustments. `vertical_offset_fraction` of 0 disables the vertical part.
pub fn correct_side_point(
    profile: &CameraProfile,
    face: &FaceExtent,
    mg: ModelPoint2D,
    obs: &DepthObservation,
    vertical_offset_fraction: f64,
) -> Result<(ModelPoint2D, DepthCorrection)> {
    if !(0.0..=1.0).contains(&vertical_offset_fraction) {
        return Err(Error::InvalidObservation(format!(
            "vertical offset fraction {vertical_offset_fraction} outside [0, 1]"
        )));
    }
    let def_h = compute_def(profile.mde_h, obs)?;
    let def_v = compute_def(profile.mde_v, obs)?;
    let adj_h = final_adjustment(def_h, obs)?;
    let adj_v = def_v * vertical_offset_fraction;

    let (a, adj_h) = outward(mg.a, face.width / 2.0, adj_h);
    let (b, adj_v) = outward(mg.b, face.height / 2.0, adj_v);
    Ok((
        ModelPoint2D::new(a, b),
        DepthCorrection {
            def_h,
            def_v,
            adj_h,
            adj_v,
            applied: true,
        },
    ))
}

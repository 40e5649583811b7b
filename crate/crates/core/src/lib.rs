//! Multi-camera position tracking inside a calibrated cuboid rig.
//!
//! Side cameras are rectified onto a per-camera Model Grid, adjacent pairs
//! are fused into world coordinates, and a top camera drives the parallax
//! correction. The simulator in [`synthrig`] produces ground truth for every
//! stage.

pub mod calibration;
pub mod depthfix;
pub mod detio;
pub mod detmetrics;
pub mod error;
pub mod evaluate;
pub mod export;
pub mod fusion;
pub mod geom;
pub mod numfmt;
pub mod synthrig;

pub use calibration::{
    calibrate, load_calibration, save_calibration, AxisMap, Calibration, CameraProfile,
    CameraRole, FaceExtent, GridBox, MarkerPicks, RigGeometry, SubArea,
};
pub use depthfix::{DepthCorrection, DepthObservation};
pub use detio::{Detection, FrameBundle, ParseMode, SyncReference};
pub use detmetrics::{GroundTruthBox, MatchOutcome, Prediction};
pub use error::{Error, Result};
pub use evaluate::{DistanceMode, EvaluationReport, Face, Segment};
pub use export::ExportFormat;
pub use fusion::{build_track, reconstruct, FusionConfig, FusionStats, PairStrategy, TrackPoint};
pub use geom::{
    apply_homography, compute_homography, point_in_quad, Axis, BBox, Homography, ModelPoint2D,
    PixelPoint, Quad, ScaleRatios, WorldPoint3D,
};
pub use synthrig::{generate_scenario, GeneratedScenario, SimCamera, SimScenario};

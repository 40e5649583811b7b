//! Run configuration file. Every field is optional; command-line flags win
//! over whatever is set here.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub picks: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub detections: Option<Vec<PathBuf>>,
    pub segments: Option<PathBuf>,
    pub track: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub sync_tolerance_ms: Option<i64>,
    pub sync_reference: Option<String>,
    pub z_threshold_mm: Option<f64>,
    pub pair_strategy: Option<String>,
    pub vertical_correction: Option<bool>,
    pub depth_correction: Option<bool>,
    pub strict: Option<bool>,
    pub px_per_mm: Option<f64>,
    /// `[origin_x, origin_y, origin_z, w, d, h]` in mm.
    pub grid_b: Option<[f64; 6]>,
    pub distance_mode: Option<String>,
    pub iou_threshold: Option<f64>,
    pub format: Option<String>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = crate::read_input(path)?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Config paths are relative to the config file, not the working directory.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.picks);
        fix(&mut self.calibration);
        fix(&mut self.segments);
        fix(&mut self.track);
        fix(&mut self.stats);
        fix(&mut self.output);
        fix(&mut self.report);
        fix(&mut self.scenario);
        fix(&mut self.predictions);
        fix(&mut self.ground_truth);
        fix(&mut self.out_dir);
        if let Some(list) = &mut self.detections {
            for p in list.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

//! Run configuration, read from TOML. Every key has a default and unknown
//! keys are rejected. `docs/config.toml` lists all keys with their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityConfig;
use crate::error::{Error, Result};
use crate::fusion::DepthBand;
use crate::geometry::{make_layout, NmsParams, SliceLayout};
use crate::kalman::MotionNoise;
use crate::tracker::TrackerConfig;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "PANOTRACK_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanoramaConfig {
    pub width: u32,
    pub height: u32,
    pub embedding_dim: usize,
}

impl Default for PanoramaConfig {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 480,
            embedding_dim: crate::detection::DEFAULT_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub detections: PathBuf,
    /// Detections are given per slice, with a slice index after the frame.
    pub slice_local: bool,
    pub calibration: Option<PathBuf>,
    /// Directory of per-frame clouds named `NNNNNN.bin`.
    pub clouds: Option<PathBuf>,
    pub first_frame: Option<u64>,
    pub last_frame: Option<u64>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            detections: PathBuf::from("detections.txt"),
            slice_local: false,
            calibration: None,
            clouds: None,
            first_frame: None,
            last_frame: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceConfig {
    pub count: usize,
    pub overlap: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            count: 7,
            overlap: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub enabled: bool,
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let band = DepthBand::default();
        Self {
            enabled: true,
            band_lo: band.lo,
            band_hi: band.hi,
        }
    }
}

impl FusionConfig {
    pub fn band(&self) -> Result<DepthBand> {
        DepthBand::new(self.band_lo, self.band_hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_match: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_match: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub tracks: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            tracks: PathBuf::from("tracks.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub panorama: PanoramaConfig,
    pub input: InputConfig,
    pub slices: SliceConfig,
    pub merge: NmsParams,
    pub fusion: FusionConfig,
    pub affinity: AffinityConfig,
    pub motion: MotionNoise,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load `path`, resolving relative paths inside it against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input.detections);
        if let Some(p) = self.input.calibration.as_mut() {
            fix(p);
        }
        if let Some(p) = self.input.clouds.as_mut() {
            fix(p);
        }
        fix(&mut self.output.tracks);
    }

    pub fn validate(&self) -> Result<()> {
        if self.panorama.width == 0 || self.panorama.height == 0 || self.panorama.embedding_dim == 0 {
            return Err(Error::InvalidConfig("panorama sizes must be positive".into()));
        }
        if self.input.slice_local {
            self.layout()?;
        }
        self.fusion.band()?;
        if !(self.eval.iou_match > 0.0 && self.eval.iou_match <= 1.0) {
            return Err(Error::InvalidConfig(format!("iou_match {}", self.eval.iou_match)));
        }
        if let (Some(a), Some(b)) = (self.input.first_frame, self.input.last_frame) {
            if a > b {
                return Err(Error::InvalidConfig(format!("first_frame {a} > last_frame {b}")));
            }
        }
        self.tracker_config().validate()
    }

    pub fn layout(&self) -> Result<SliceLayout> {
        make_layout(self.panorama.width, self.slices.count, self.slices.overlap)
    }

    /// Tracker settings with the affinity and motion sections folded in.
    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            affinity: self.affinity,
            motion_noise: self.motion,
            ..self.tracker
        }
    }
}

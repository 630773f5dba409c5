//! Sequence-level driver: slice merging, LiDAR fusion and tracking over a
//! contiguous frame range.

use std::collections::BTreeMap;

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::fusion::{fuse_detections, Calibration, DepthBand, PointCloud};
use crate::geometry::{nms_merge, NmsParams};
use crate::synthetic::Scenario;
use crate::tracker::{TrackOutput, Tracker, TrackerConfig};

/// Point-cloud source for a sequence.
pub struct Lidar<'a, F> {
    pub calibration: &'a Calibration,
    pub band: DepthBand,
    /// Cloud of a frame; `None` when the frame has no sweep.
    pub cloud: F,
}

/// Run the tracker over `first..=last`. Frames without detections are
/// processed as empty.
pub fn track_frames<F>(
    first: u64,
    last: u64,
    detections: &BTreeMap<u64, Vec<Detection>>,
    mut lidar: Option<Lidar<'_, F>>,
    config: TrackerConfig,
) -> Result<Vec<TrackOutput>>
where
    F: FnMut(u64) -> Result<Option<PointCloud>>,
{
    if first > last {
        return Err(Error::FrameRange(format!("first frame {first} after last {last}")));
    }
    if let Some(f) = detections.keys().find(|f| **f < first || **f > last) {
        return Err(Error::FrameRange(format!(
            "detections at frame {f} outside {first}..={last}"
        )));
    }
    let mut tracker = Tracker::new(config)?;
    let mut out = Vec::new();
    for frame in first..=last {
        let mut dets = detections.get(&frame).cloned().unwrap_or_default();
        if let Some(l) = lidar.as_mut() {
            if let Some(cloud) = (l.cloud)(frame)? {
                dets = fuse_detections(dets, &cloud, l.calibration, l.band)?;
            }
        }
        out.extend(tracker.step(frame, &dets)?);
    }
    Ok(out)
}

/// Suppress duplicates across slices, frame by frame.
pub fn merge_slices(
    per_slice: BTreeMap<u64, Vec<Vec<Detection>>>,
    params: &NmsParams,
) -> Result<BTreeMap<u64, Vec<Detection>>> {
    per_slice
        .into_iter()
        .map(|(frame, slices)| Ok((frame, nms_merge(&slices, params)?)))
        .collect()
}

/// Track a generated scenario; `band = None` disables fusion.
pub fn track_scenario(
    scenario: &Scenario,
    band: Option<DepthBand>,
    config: TrackerConfig,
) -> Result<Vec<TrackOutput>> {
    let last = scenario.spec.n_frames - 1;
    let dets: BTreeMap<u64, Vec<Detection>> = scenario
        .detections
        .iter()
        .enumerate()
        .map(|(f, d)| (f as u64, d.clone()))
        .collect();
    let lidar = band.map(|band| Lidar {
        calibration: &scenario.calibration,
        band,
        cloud: |f: u64| Ok(scenario.clouds.get(f as usize).cloned()),
    });
    track_frames(0, last, &dets, lidar, config)
}

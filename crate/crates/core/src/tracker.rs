//! The online per-frame tracking loop and trajectory lifecycle.

use serde::{Deserialize, Serialize};

use crate::affinity::{affinity_matrix, AffinityConfig};
use crate::association::{gate, solve_matching_with, MatchObjective};
use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::kalman::MotionNoise;
use crate::pano_box::PanoBox;
use crate::trajectory::{TrackState, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Consecutive matches (including the initializing detection) needed to
    /// confirm a tentative trajectory.
    pub confirm_hits: u32,
    /// Frames a confirmed trajectory may go unmatched before removal.
    pub max_misses: u32,
    /// Frames a tentative trajectory may go unmatched before removal.
    pub tentative_max_misses: u32,
    pub objective: MatchObjective,
    #[serde(skip)]
    pub motion_noise: MotionNoise,
    #[serde(skip)]
    pub affinity: AffinityConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            confirm_hits: 3,
            max_misses: 30,
            tentative_max_misses: 0,
            objective: MatchObjective::L2,
            motion_noise: MotionNoise::default(),
            affinity: AffinityConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.confirm_hits < 1 {
            return Err(Error::InvalidConfig("confirm_hits must be at least 1".into()));
        }
        self.affinity.validate()
    }
}

/// A confirmed trajectory's box at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub frame: u64,
    pub id: u64,
    pub bbox: PanoBox,
}

/// Single-entry tentative trajectory for an unmatched detection.
pub fn init_tentative(det: &Detection, id: u64, noise: &MotionNoise) -> Trajectory {
    Trajectory::tentative(det, id, noise)
}

/// Copy of `traj` extended with `det`'s observation.
pub fn extend(traj: &Trajectory, det: &Detection) -> Result<Trajectory> {
    let mut next = traj.clone();
    next.extend(det)?;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    active: Vec<Trajectory>,
    cursor: Option<u64>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            active: Vec::new(),
            cursor: None,
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Tentative and confirmed trajectories, in creation order.
    pub fn trajectories(&self) -> &[Trajectory] {
        &self.active
    }

    pub fn cursor(&self) -> Option<u64> {
        self.cursor
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Process the detections of `frame`, which must directly follow the
    /// previous frame. Returns the confirmed tracks observed at `frame`,
    /// sorted by id.
    pub fn step(&mut self, frame: u64, dets: &[Detection]) -> Result<Vec<TrackOutput>> {
        if let Some(last) = self.cursor {
            if frame != last + 1 {
                return Err(Error::FrameOrder { last, got: frame });
            }
        }
        if let Some(d) = dets.iter().find(|d| d.frame != frame) {
            return Err(Error::FrameOrder {
                last: frame,
                got: d.frame,
            });
        }
        self.cursor = Some(frame);

        let noise = self.config.motion_noise;
        for traj in &mut self.active {
            let (predicted, _) = traj.motion().predict(&noise);
            traj.set_motion(predicted);
        }

        let a = affinity_matrix(&self.active, dets, frame, &self.config.affinity)?;
        let x = solve_matching_with(&a, self.config.objective)?;
        let result = gate(&x, &a, self.config.affinity.gate)?;

        for &(u, v) in &result.pairs {
            let traj = &mut self.active[u];
            let det = &dets[v];
            traj.extend(det)?;
            let corrected = traj.motion().update(&det.bbox, &noise)?;
            traj.set_motion(corrected);
            traj.record_hit();
            if traj.state() == TrackState::Tentative && traj.hits() >= self.config.confirm_hits {
                traj.confirm()?;
            }
        }

        for &u in &result.unmatched_trajs {
            let traj = &mut self.active[u];
            traj.record_miss();
            let limit = match traj.state() {
                TrackState::Tentative => self.config.tentative_max_misses,
                _ => self.config.max_misses,
            };
            if traj.misses() > limit {
                traj.remove()?;
            }
        }

        for &v in &result.unmatched_dets {
            let mut traj = init_tentative(&dets[v], self.next_id, &noise);
            self.next_id += 1;
            if traj.hits() >= self.config.confirm_hits {
                traj.confirm()?;
            }
            self.active.push(traj);
        }

        self.active.retain(|t| t.state() != TrackState::Removed);

        Ok(self
            .active
            .iter()
            .filter(|t| t.state() == TrackState::Confirmed && t.last_frame() == frame)
            .map(|t| TrackOutput {
                frame,
                id: t.id(),
                bbox: t.last_entry().bbox,
            })
            .collect())
    }
}

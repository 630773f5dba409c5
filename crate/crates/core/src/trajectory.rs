use crate::detection::{dot, Detection, Embedding, Location};
use crate::error::{Error, Result};
use crate::kalman::{KalmanState, MotionNoise};
use crate::pano_box::PanoBox;

/// Lifecycle of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Removed,
}

/// One `(appearance, box, location)` observation at a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub frame: u64,
    pub appearance: Embedding,
    pub bbox: PanoBox,
    pub location: Option<Location>,
}

impl From<&Detection> for TrajectoryEntry {
    fn from(det: &Detection) -> Self {
        Self {
            frame: det.frame,
            appearance: det.embedding.clone(),
            bbox: det.bbox,
            location: det.location,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: u64,
    entries: Vec<TrajectoryEntry>,
    state: TrackState,
    motion: KalmanState,
    hits: u32,
    misses: u32,
    // Σ_k e^{k - last} a_k and Σ_k e^{k - last}, where `last` is the newest
    // entry frame. The common factor e^{last - t} cancels at query time.
    decayed_appearance: Vec<f64>,
    decayed_weight: f64,
}

impl Trajectory {
    /// Single-entry tentative trajectory seeded from `det`.
    pub fn tentative(det: &Detection, id: u64, noise: &MotionNoise) -> Self {
        Self {
            id,
            entries: vec![det.into()],
            state: TrackState::Tentative,
            motion: KalmanState::initiate(&det.bbox, noise),
            hits: 1,
            misses: 0,
            decayed_appearance: det.embedding.as_slice().to_vec(),
            decayed_weight: 1.0,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }
    pub fn state(&self) -> TrackState {
        self.state
    }
    pub fn motion(&self) -> &KalmanState {
        &self.motion
    }
    pub fn hits(&self) -> u32 {
        self.hits
    }
    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn last_entry(&self) -> &TrajectoryEntry {
        self.entries.last().expect("trajectory has at least one entry")
    }

    pub fn last_frame(&self) -> u64 {
        self.last_entry().frame
    }

    /// Append the detection's observation tuple.
    pub fn extend(&mut self, det: &Detection) -> Result<()> {
        let last = self.last_frame();
        if det.frame <= last {
            return Err(Error::FrameOrder {
                last,
                got: det.frame,
            });
        }
        if det.embedding.dim() != self.decayed_appearance.len() {
            return Err(Error::InvalidEmbedding(format!(
                "dimension {} does not match trajectory dimension {}",
                det.embedding.dim(),
                self.decayed_appearance.len()
            )));
        }
        let decay = (last as f64 - det.frame as f64).exp();
        for (acc, a) in self.decayed_appearance.iter_mut().zip(det.embedding.as_slice()) {
            *acc = *acc * decay + a;
        }
        self.decayed_weight = self.decayed_weight * decay + 1.0;
        self.entries.push(det.into());
        Ok(())
    }

    /// Exponentially time-weighted mean cosine between the stored
    /// appearances and `emb`. Independent of the query frame because all
    /// weights share the factor `e^{-t}`.
    pub fn weighted_appearance(&self, emb: &Embedding) -> f64 {
        dot(&self.decayed_appearance, emb.as_slice()) / self.decayed_weight
    }

    pub(crate) fn set_motion(&mut self, motion: KalmanState) {
        self.motion = motion;
    }

    pub(crate) fn record_hit(&mut self) {
        self.hits += 1;
        self.misses = 0;
    }

    pub(crate) fn record_miss(&mut self) {
        self.hits = 0;
        self.misses += 1;
    }

    pub fn confirm(&mut self) -> Result<()> {
        self.transition(TrackState::Confirmed)
    }

    pub fn remove(&mut self) -> Result<()> {
        self.transition(TrackState::Removed)
    }

    fn transition(&mut self, to: TrackState) -> Result<()> {
        use TrackState::*;
        match (self.state, to) {
            (Tentative, Confirmed) | (Tentative, Removed) | (Confirmed, Removed) => {
                self.state = to;
                Ok(())
            }
            (from, to) => Err(Error::StateTransition { from, to }),
        }
    }
}

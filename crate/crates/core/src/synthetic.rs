//! Seeded panoramic scenarios with ground truth: constant-velocity targets
//! on the circular column axis, their detections, embeddings and LiDAR
//! point clusters, plus a matching calibration.

use std::f64::consts::PI;

use nalgebra::Matrix3x4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Embedding, Location, DEFAULT_EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::eval::FrameAnnotations;
use crate::fusion::{Calibration, PointCloud};
use crate::geometry::circular_iou;
use crate::pano_box::{wrap_column, PanoBox};

// independent random streams, so toggling noise leaves the motion unchanged
const STREAM_TARGETS: u64 = 1;
const STREAM_EMBEDDINGS: u64 = 2;
const STREAM_DETECTIONS: u64 = 3;
const STREAM_POINTS: u64 = 4;

/// Target depth range, meters.
const DEPTH_RANGE: (f64, f64) = (3.0, 10.0);
/// Depth of injected background points behind each target, meters.
const BACKGROUND_OFFSET: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    /// Zero-based target index.
    pub target: usize,
    pub start: u64,
    /// Number of frames without detections.
    pub gap: u64,
}

impl Occlusion {
    pub fn covers(&self, target: usize, frame: u64) -> bool {
        self.target == target && frame >= self.start && frame < self.start + self.gap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub width: u32,
    pub height: u32,
    pub n_targets: usize,
    pub n_frames: u64,
    /// How many targets cross the seam during the sequence.
    pub seam_crossings: usize,
    /// Largest column speed, pixels per frame.
    pub max_speed: f64,
    pub occlusions: Vec<Occlusion>,
    /// Standard deviation of box position noise, pixels.
    pub box_jitter: f64,
    /// Standard deviation of per-component embedding noise before
    /// renormalization.
    pub embedding_noise: f64,
    pub drop_prob: f64,
    /// Mean number of clutter detections per frame.
    pub clutter_rate: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    /// LiDAR points per target per frame; rounded down to even.
    pub points_per_target: usize,
    /// Extra points per target lying well behind it inside its box.
    pub background_points: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 480,
            n_targets: 10,
            n_frames: 300,
            seam_crossings: 3,
            max_speed: 3.0,
            occlusions: Vec::new(),
            box_jitter: 0.0,
            embedding_noise: 0.0,
            drop_prob: 0.0,
            clutter_rate: 0.0,
            seed: 0,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            points_per_target: 40,
            background_points: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.width < 64 || self.height < 32 {
            return bad(format!("panorama {}x{} too small", self.width, self.height));
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        if self.seam_crossings > self.n_targets {
            return bad(format!(
                "{} seam crossings for {} targets",
                self.seam_crossings, self.n_targets
            ));
        }
        if self.embedding_dim < self.n_targets.max(1) {
            return bad(format!(
                "embedding_dim {} cannot hold {} orthogonal embeddings",
                self.embedding_dim, self.n_targets
            ));
        }
        if !(self.max_speed.is_finite() && self.max_speed >= 0.0) {
            return bad(format!("max_speed {}", self.max_speed));
        }
        for (name, sigma) in [("box_jitter", self.box_jitter), ("embedding_noise", self.embedding_noise)] {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return bad(format!("{name} {sigma}"));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob {} outside [0, 1]", self.drop_prob));
        }
        if !(self.clutter_rate.is_finite() && self.clutter_rate >= 0.0) {
            return bad(format!("clutter_rate {}", self.clutter_rate));
        }
        if let Some(o) = self.occlusions.iter().find(|o| o.target >= self.n_targets) {
            return bad(format!("occlusion of unknown target {}", o.target));
        }
        Ok(())
    }

    /// Focal length of the synthetic camera: one radian spans this many
    /// columns, so the full circle spans the panorama width.
    pub fn focal(&self) -> f64 {
        self.width as f64 / (2.0 * PI)
    }

    /// `u = f·X/Z`, `v = f·Y/Z + H/2`.
    pub fn calibration(&self) -> Result<Calibration> {
        let f = self.focal();
        let d = self.height as f64 / 2.0;
        #[rustfmt::skip]
        let m = Matrix3x4::new(
            f, 0.0, 0.0, 0.0,
            0.0, f, d, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        Calibration::new(m, self.width as f64, self.height as f64)
    }
}

/// Ground truth of one target at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub id: u64,
    pub bbox: PanoBox,
    pub location: Location,
    /// False while occluded.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub calibration: Calibration,
    /// Indexed by frame.
    pub detections: Vec<Vec<Detection>>,
    /// Generating target id of each detection; `None` for clutter.
    pub detection_sources: Vec<Vec<Option<u64>>>,
    pub clouds: Vec<PointCloud>,
    pub truth: Vec<Vec<TargetState>>,
}

impl Scenario {
    pub fn ground_truth(&self) -> Result<FrameAnnotations> {
        let mut gt = FrameAnnotations::new();
        for (frame, states) in self.truth.iter().enumerate() {
            gt.touch(frame as u64);
            for s in states {
                gt.insert(frame as u64, s.id, s.bbox)?;
            }
        }
        Ok(gt)
    }

    /// Whether target `index`'s box overlaps no other target's box at
    /// `frame`, so its in-box points are its own cluster.
    pub fn isolated(&self, frame: usize, index: usize) -> bool {
        let states = &self.truth[frame];
        let b = &states[index].bbox;
        states.iter().enumerate().all(|(j, s)| {
            j == index || circular_iou(b, &s.bbox).map_or(false, |iou| iou == 0.0)
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Target {
    center0: f64,
    speed: f64,
    cy: f64,
    w: f64,
    h: f64,
    depth: f64,
}

impl Target {
    fn center_at(&self, frame: u64) -> f64 {
        self.center0 + self.speed * frame as f64
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` mutually orthogonal unit vectors via Gram–Schmidt on seeded
/// Gaussian draws.
pub fn orthogonal_embeddings(n: usize, dim: usize, seed: u64) -> Result<Vec<Embedding>> {
    if dim < n {
        return Err(Error::InvalidScenario(format!(
            "{n} orthogonal vectors need dimension ≥ {n}, got {dim}"
        )));
    }
    let mut rng = stream(seed, STREAM_EMBEDDINGS);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v = gaussian_vector(&mut rng, dim);
        // two passes keep the result orthogonal to machine precision
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis.into_iter().map(Embedding::normalized).collect()
}

fn sample_targets(spec: &ScenarioSpec) -> Vec<Target> {
    let mut rng = stream(spec.seed, STREAM_TARGETS);
    let width = spec.width as f64;
    let height = spec.height as f64;
    let span = (spec.n_frames - 1) as f64;
    (0..spec.n_targets)
        .map(|i| {
            let w = rng.random_range(0.02 * width..0.04 * width);
            let h = rng.random_range(0.3 * height..0.5 * height);
            let cy = rng.random_range(h / 2.0..height - h / 2.0);
            let depth = rng.random_range(DEPTH_RANGE.0..DEPTH_RANGE.1);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let (center0, speed) = if i < spec.seam_crossings {
                // the center passes column 0 mid-sequence
                let speed = sign * rng.random_range(0.5 * spec.max_speed..=spec.max_speed);
                let cross = rng.random_range(0.25..0.75) * span;
                (wrap_column(-speed * cross, width), speed)
            } else {
                // stay clear of the seam for the whole sequence
                let margin = w;
                let room = width - 2.0 * margin;
                let limit = if span > 0.0 { 0.8 * room / span } else { spec.max_speed };
                let speed = sign * rng.random_range(0.0..=spec.max_speed.min(limit));
                let travel = speed.abs() * span;
                let start = margin + rng.random_range(0.0..=(room - travel).max(0.0));
                let center0 = if speed >= 0.0 { start } else { start + travel };
                (center0, speed)
            };
            Target {
                center0,
                speed,
                cy,
                w,
                h,
                depth,
            }
        })
        .collect()
}

/// 3D point that projects to pixel `(u, v)` at depth `z`.
fn back_project(u: f64, v: f64, z: f64, spec: &ScenarioSpec) -> Location {
    let f = spec.focal();
    let d = spec.height as f64 / 2.0;
    Location::new(u * z / f, (v - d) * z / f, z)
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let width = spec.width as f64;
    let height = spec.height as f64;
    let calibration = spec.calibration()?;
    let targets = sample_targets(spec);
    let embeddings = orthogonal_embeddings(spec.n_targets, spec.embedding_dim, spec.seed)?;

    let mut det_rng = stream(spec.seed, STREAM_DETECTIONS);
    let mut pts_rng = stream(spec.seed, STREAM_POINTS);
    let jitter = Normal::new(0.0, spec.box_jitter).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let emb_noise =
        Normal::new(0.0, spec.embedding_noise).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let clutter = if spec.clutter_rate > 0.0 {
        Some(Poisson::new(spec.clutter_rate).map_err(|e| Error::InvalidScenario(e.to_string()))?)
    } else {
        None
    };
    let pairs = spec.points_per_target / 2;

    let n = spec.n_frames as usize;
    let mut scenario = Scenario {
        spec: spec.clone(),
        calibration,
        detections: Vec::with_capacity(n),
        detection_sources: Vec::with_capacity(n),
        clouds: Vec::with_capacity(n),
        truth: Vec::with_capacity(n),
    };

    for frame in 0..spec.n_frames {
        let mut truth = Vec::with_capacity(targets.len());
        let mut dets = Vec::new();
        let mut sources = Vec::new();
        let mut points = Vec::new();

        for (i, t) in targets.iter().enumerate() {
            let id = i as u64 + 1;
            let cx = wrap_column(t.center_at(frame), width);
            let bbox = PanoBox::from_center(cx, t.cy, t.w, t.h, 1.0, width)?;
            let visible = !spec.occlusions.iter().any(|o| o.covers(i, frame));
            truth.push(TargetState {
                id,
                bbox,
                location: back_project(cx, t.cy, t.depth, spec),
                visible,
            });

            // antithetic pairs keep the cluster centroid on the target
            let (du_max, dv_max) = (0.25 * t.w, 0.25 * t.h);
            let dz_max = 0.1_f64.min(0.25 * t.w * t.depth / spec.focal());
            for _ in 0..pairs {
                let du = pts_rng.random_range(-du_max..=du_max);
                let dv = pts_rng.random_range(-dv_max..=dv_max);
                let dz = pts_rng.random_range(-dz_max..=dz_max);
                points.push(back_project(cx + du, t.cy + dv, t.depth + dz, spec));
                points.push(back_project(cx - du, t.cy - dv, t.depth - dz, spec));
            }
            for _ in 0..spec.background_points {
                let du = pts_rng.random_range(-du_max..=du_max);
                let dv = pts_rng.random_range(-dv_max..=dv_max);
                points.push(back_project(cx + du, t.cy + dv, t.depth + BACKGROUND_OFFSET, spec));
            }

            if !visible {
                continue;
            }
            if spec.drop_prob > 0.0 && det_rng.random_bool(spec.drop_prob) {
                continue;
            }
            let det_box = if spec.box_jitter > 0.0 {
                let dx = jitter.sample(&mut det_rng);
                let dy = jitter.sample(&mut det_rng);
                PanoBox::from_center(wrap_column(cx + dx, width), t.cy + dy, t.w, t.h, 1.0, width)?
            } else {
                bbox
            };
            let emb = if spec.embedding_noise > 0.0 {
                let noisy = embeddings[i]
                    .as_slice()
                    .iter()
                    .map(|x| x + emb_noise.sample(&mut det_rng))
                    .collect();
                Embedding::normalized(noisy)?
            } else {
                embeddings[i].clone()
            };
            dets.push(Detection::new(det_box, emb, None, frame)?);
            sources.push(Some(id));
        }

        if let Some(poisson) = &clutter {
            let count = poisson.sample(&mut det_rng) as usize;
            for _ in 0..count {
                let w = det_rng.random_range(0.02 * width..0.04 * width);
                let h = det_rng.random_range(0.2 * height..0.5 * height);
                let x = det_rng.random_range(0.0..width);
                let y = det_rng.random_range(0.0..height - h);
                let score = det_rng.random_range(0.3..0.9);
                let emb = Embedding::normalized(gaussian_vector(&mut det_rng, spec.embedding_dim))?;
                dets.push(Detection::new(PanoBox::new(x, y, w, h, score, width)?, emb, None, frame)?);
                sources.push(None);
            }
        }

        scenario.truth.push(truth);
        scenario.detections.push(dets);
        scenario.detection_sources.push(sources);
        scenario.clouds.push(PointCloud::new(frame, points)?);
    }
    debug_assert!(scenario.truth.iter().flatten().all(|s| s.bbox.y() >= 0.0
        && s.bbox.y() + s.bbox.h() <= height));
    Ok(scenario)
}

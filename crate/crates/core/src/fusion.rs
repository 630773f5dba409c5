//! LiDAR/camera fusion: project point clouds into the panorama, collect the
//! points that land inside each detection box, and average them into a 3D
//! location for the detection.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Location};
use crate::error::{Error, Result};
use crate::pano_box::{wrap_column, PanoBox};

/// Points with projective depth at or below this are behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-6;

/// Linear 3D → panorama projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    m: Matrix3x4<f64>,
    width: f64,
    height: f64,
}

impl Calibration {
    pub fn new(m: Matrix3x4<f64>, width: f64, height: f64) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCalibration("non-finite matrix entry".into()));
        }
        if !(width.is_finite() && width > 0.0 && height.is_finite() && height > 0.0) {
            return Err(Error::InvalidCalibration(format!(
                "image size {width}x{height}"
            )));
        }
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidCalibration(
                "left 3x3 block is singular".into(),
            ));
        }
        Ok(Self { m, width, height })
    }

    /// Row-major constructor from the 12 matrix entries.
    pub fn from_row_slice(values: &[f64], width: f64, height: f64) -> Result<Self> {
        if values.len() != 12 {
            return Err(Error::InvalidCalibration(format!(
                "expected 12 matrix entries, got {}",
                values.len()
            )));
        }
        Self::new(Matrix3x4::from_row_slice(values), width, height)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.m
    }
    pub fn width(&self) -> f64 {
        self.width
    }
    pub fn height(&self) -> f64 {
        self.height
    }

    /// The same camera with every projected column shifted by `delta`.
    pub fn rotated(&self, delta: f64) -> Self {
        let shift = Matrix3::new(1.0, 0.0, delta, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        Self {
            m: shift * self.m,
            ..self.clone()
        }
    }

    fn homogeneous(&self, h: &Location) -> Vector3<f64> {
        self.m * Vector4::new(h.x, h.y, h.z, 1.0)
    }
}

/// Points of one LiDAR sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub frame: u64,
    points: Vec<Location>,
}

impl PointCloud {
    pub fn new(frame: u64, points: Vec<Location>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidLocation(format!("point {p:?} not finite")));
        }
        Ok(Self { frame, points })
    }

    pub fn points(&self) -> &[Location] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Percentile band `[lo, hi]` of in-box depths kept as foreground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthBand {
    pub lo: f64,
    pub hi: f64,
}

impl DepthBand {
    pub const ALL: DepthBand = DepthBand { lo: 0.0, hi: 100.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "depth band [{lo}, {hi}] must satisfy 0 <= lo < hi <= 100"
            )));
        }
        Ok(Self { lo, hi })
    }
}

impl Default for DepthBand {
    fn default() -> Self {
        Self { lo: 10.0, hi: 80.0 }
    }
}

/// Pixel `(column, row)` of `h`, or `None` when it is behind the camera or
/// outside the image rows. Columns are reduced onto the panorama circle.
pub fn project_point(h: &Location, calib: &Calibration) -> Option<(f64, f64)> {
    pixel_of(&calib.homogeneous(h), calib)
}

fn pixel_of(p: &Vector3<f64>, calib: &Calibration) -> Option<(f64, f64)> {
    if !(p.z > DEPTH_EPSILON) {
        return None;
    }
    let u = p.x / p.z;
    let v = p.y / p.z;
    if !(u.is_finite() && v.is_finite()) || v < 0.0 || v >= calib.height {
        return None;
    }
    Some((wrap_column(u, calib.width), v))
}

/// Linear-interpolation percentile of ascending `sorted`, `p ∈ [0, 100]`.
pub(crate) fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Points projecting inside `bbox`, restricted to the depth percentile band.
pub fn collect_points(
    bbox: &PanoBox,
    cloud: &PointCloud,
    calib: &Calibration,
    band: DepthBand,
) -> Vec<Location> {
    let top = bbox.y();
    let bottom = bbox.y() + bbox.h();
    let mut hits: Vec<(Location, f64)> = Vec::new();
    let slack = 1e-9 * (1.0 + top.abs() + bottom.abs());
    for h in cloud.points() {
        let p = calib.homogeneous(h);
        // frustum cull: in front of the camera and between the box's row
        // planes, tested without the perspective divide. The slack keeps
        // the cull strictly looser than the exact test below.
        if !(p.z > DEPTH_EPSILON)
            || p.y < (top - slack) * p.z
            || p.y > (bottom + slack) * p.z
        {
            continue;
        }
        if let Some((u, v)) = pixel_of(&p, calib) {
            if bbox.contains(u, v) {
                hits.push((*h, p.z));
            }
        }
    }
    if hits.is_empty() || (band.lo <= 0.0 && band.hi >= 100.0) {
        return hits.into_iter().map(|(h, _)| h).collect();
    }
    let mut depths: Vec<f64> = hits.iter().map(|(_, d)| *d).collect();
    depths.sort_by(f64::total_cmp);
    let lo = percentile(&depths, band.lo);
    let hi = percentile(&depths, band.hi);
    hits.into_iter()
        .filter(|(_, d)| *d >= lo && *d <= hi)
        .map(|(h, _)| h)
        .collect()
}

/// Mean of the collected points.
pub fn locate(points: &[Location]) -> Option<Location> {
    if points.is_empty() {
        return None;
    }
    let sum = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Some(Location::from(sum / points.len() as f64))
}

/// Attach a 3D location to every detection that has in-box points.
pub fn fuse_detections(
    dets: Vec<Detection>,
    cloud: &PointCloud,
    calib: &Calibration,
    band: DepthBand,
) -> Result<Vec<Detection>> {
    dets.into_iter()
        .map(|d| {
            let loc = locate(&collect_points(&d.bbox, cloud, calib, band));
            d.with_location(loc)
        })
        .collect()
}

//! Constant-velocity Kalman filter over `(cx, cy, aspect, height)` box states.
//!
//! The column center lives on the panorama circle: prediction reduces it
//! modulo the panorama width and measurements are unwrapped to the
//! representative nearest the current estimate before correction.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::pano_box::{wrap_column, PanoBox};

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasurementVector = SVector<f64, 4>;

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const MIN_EXTENT: f64 = 1e-3;

/// Noise scales, expressed relative to the box height.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionNoise {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

/// Mean and covariance of the 8-dimensional box state
/// `(cx, cy, aspect, height, vcx, vcy, vaspect, vheight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    mean: StateVector,
    covariance: StateCovariance,
    pano_width: f64,
}

impl KalmanState {
    pub fn new(mean: StateVector, covariance: StateCovariance, pano_width: f64) -> Result<Self> {
        if !(pano_width.is_finite() && pano_width > 0.0) {
            return Err(Error::InvalidKalman(format!("panorama width {pano_width}")));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidKalman("non-finite entry".into()));
        }
        for i in 0..8 {
            if covariance[(i, i)] <= 0.0 {
                return Err(Error::InvalidKalman(format!("diagonal entry {i} not positive")));
            }
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidKalman(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            mean,
            covariance,
            pano_width,
        })
    }

    /// Zero-velocity state centered on `bbox` with inflated uncertainty.
    pub fn initiate(bbox: &PanoBox, noise: &MotionNoise) -> Self {
        let z = measurement_of(bbox);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = z[3];
        let p = noise.std_weight_position * h;
        let v = noise.std_weight_velocity * h;
        let std = [2.0 * p, 2.0 * p, 1e-2, 2.0 * p, 10.0 * v, 10.0 * v, 1e-5, 10.0 * v];
        let covariance = StateCovariance::from_diagonal(&StateVector::from_iterator(
            std.iter().map(|s| s * s),
        ));
        Self {
            mean,
            covariance,
            pano_width: bbox.pano_width(),
        }
    }

    pub fn mean(&self) -> &StateVector {
        &self.mean
    }

    pub fn covariance(&self) -> &StateCovariance {
        &self.covariance
    }

    pub fn pano_width(&self) -> f64 {
        self.pano_width
    }

    /// Box described by the current mean.
    pub fn to_box(&self) -> PanoBox {
        let h = self.mean[3].max(MIN_EXTENT);
        let w = (self.mean[2] * h).clamp(MIN_EXTENT, self.pano_width);
        PanoBox::from_center(self.mean[0], self.mean[1], w, h, 1.0, self.pano_width)
            .expect("kalman mean yields a valid box")
    }

    /// Advance one frame under the constant-velocity model.
    pub fn predict(&self, noise: &MotionNoise) -> (KalmanState, PanoBox) {
        let mut f = StateCovariance::identity();
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        let h = self.mean[3].abs().max(MIN_EXTENT);
        let p = noise.std_weight_position * h;
        let v = noise.std_weight_velocity * h;
        let std = [p, p, 1e-2, p, v, v, 1e-5, v];
        let q = StateCovariance::from_diagonal(&StateVector::from_iterator(
            std.iter().map(|s| s * s),
        ));

        let mut mean = f * self.mean;
        mean[0] = wrap_column(mean[0], self.pano_width);
        let covariance = symmetrize(f * self.covariance * f.transpose() + q);
        let next = KalmanState {
            mean,
            covariance,
            pano_width: self.pano_width,
        };
        let bbox = next.to_box();
        (next, bbox)
    }

    /// Correct the state with a measured box.
    pub fn update(&self, measured: &PanoBox, noise: &MotionNoise) -> Result<KalmanState> {
        let mut z = measurement_of(measured);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMeasurement);
        }
        z[0] = self.mean[0] + signed_column_offset(z[0] - self.mean[0], self.pano_width);

        let h = self.mean[3].abs().max(MIN_EXTENT);
        let p = noise.std_weight_position * h;
        let std = [p, p, 1e-1, p];
        let r = SMatrix::<f64, 4, 4>::from_diagonal(&MeasurementVector::from_iterator(
            std.iter().map(|s| s * s),
        ));
        let obs = SMatrix::<f64, 4, 8>::identity();

        let (mut mean, covariance) = correct(&self.mean, &self.covariance, &obs, &r, &z)?;
        mean[0] = wrap_column(mean[0], self.pano_width);
        KalmanState::new(mean, covariance, self.pano_width)
    }
}

fn measurement_of(bbox: &PanoBox) -> MeasurementVector {
    MeasurementVector::new(
        bbox.center_x(),
        bbox.center_y(),
        bbox.w() / bbox.h(),
        bbox.h(),
    )
}

/// Representative of `d` modulo `width` within `[-width/2, width/2)`.
fn signed_column_offset(d: f64, width: f64) -> f64 {
    wrap_column(d + width / 2.0, width) - width / 2.0
}

fn symmetrize<const N: usize>(m: SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Linear Kalman correction in Joseph form.
///
/// Returns the posterior mean and covariance for measurement `z` observed
/// through `obs` with measurement covariance `noise`.
pub fn correct<const S: usize, const M: usize>(
    mean: &SVector<f64, S>,
    covariance: &SMatrix<f64, S, S>,
    obs: &SMatrix<f64, M, S>,
    noise: &SMatrix<f64, M, M>,
    z: &SVector<f64, M>,
) -> Result<(SVector<f64, S>, SMatrix<f64, S, S>)> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMeasurement);
    }
    let innovation_cov = obs * covariance * obs.transpose() + noise;
    let inv = innovation_cov
        .try_inverse()
        .ok_or_else(|| Error::InvalidKalman("singular innovation covariance".into()))?;
    let gain = covariance * obs.transpose() * inv;
    let post_mean = mean + gain * (z - obs * mean);
    let i_kh = SMatrix::<f64, S, S>::identity() - gain * obs;
    let post_cov = i_kh * covariance * i_kh.transpose() + gain * noise * gain.transpose();
    Ok((post_mean, symmetrize(post_cov)))
}

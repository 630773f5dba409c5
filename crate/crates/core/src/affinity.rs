//! Trajectory–detection affinity: appearance, motion and 3D location terms.

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Embedding, Location};
use crate::error::{Error, Result};
use crate::geometry::circular_iou;
use crate::matrix::AffinityMatrix;
use crate::pano_box::PanoBox;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffinityConfig {
    pub w_app: f64,
    pub w_mot: f64,
    pub w_loc: f64,
    /// Time kernel bandwidth, frames.
    pub beta_t: f64,
    /// Location kernel bandwidth, meters.
    pub beta_l: f64,
    /// Minimum affinity for a matched pair to be accepted.
    pub gate: f64,
}

impl Default for AffinityConfig {
    fn default() -> Self {
        Self {
            w_app: 1.0,
            w_mot: 1.0,
            w_loc: 1.0,
            beta_t: 5.0,
            beta_l: 1.0,
            gate: 0.3,
        }
    }
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_app, self.w_mot, self.w_loc];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("affinity weights {weights:?}")));
        }
        if !(self.beta_t > 0.0 && self.beta_t.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta_t = {}", self.beta_t)));
        }
        if !(self.beta_l > 0.0 && self.beta_l.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta_l = {}", self.beta_l)));
        }
        if !(self.gate >= 0.0 && self.gate.is_finite()) {
            return Err(Error::InvalidConfig(format!("gate = {}", self.gate)));
        }
        Ok(())
    }

    pub fn max_affinity(&self) -> f64 {
        self.w_app + self.w_mot + self.w_loc
    }
}

fn check_past(traj: &Trajectory, t: u64) -> Result<()> {
    let last = traj.last_frame();
    if last >= t {
        return Err(Error::FrameOrder { last, got: t });
    }
    Ok(())
}

/// `Σ_k e^{k−t} cos(a_k, emb) / Σ_k e^{k−t}` over the trajectory's entries.
pub fn appearance_similarity(traj: &Trajectory, emb: &Embedding, t: u64) -> Result<f64> {
    check_past(traj, t)?;
    if emb.dim() != traj.last_entry().appearance.dim() {
        return Err(Error::InvalidEmbedding(format!(
            "dimension {} does not match trajectory dimension {}",
            emb.dim(),
            traj.last_entry().appearance.dim()
        )));
    }
    Ok(traj.weighted_appearance(emb))
}

/// IoU between the trajectory's predicted box and the detection box.
pub fn motion_affinity(predicted: &PanoBox, det: &PanoBox) -> Result<f64> {
    circular_iou(predicted, det)
}

fn rbf(d2: f64, beta: f64) -> f64 {
    (-d2 / (2.0 * beta * beta)).exp()
}

/// Time- and distance-weighted proximity between the trajectory's stored
/// locations and `loc`, averaged over all entries. Entries without a
/// location contribute zero but still count in the divisor.
pub fn location_proximity(
    traj: &Trajectory,
    loc: Option<&Location>,
    t: u64,
    cfg: &AffinityConfig,
) -> f64 {
    let Some(loc) = loc else {
        return 0.0;
    };
    let entries = traj.entries();
    let mut sum = 0.0;
    // newest first; once the time kernel underflows to zero every older
    // entry contributes exactly zero as well
    for e in entries.iter().rev() {
        let dt = t as f64 - e.frame as f64;
        let kt = rbf(dt * dt, cfg.beta_t);
        if kt == 0.0 {
            break;
        }
        if let Some(l) = &e.location {
            sum += kt * rbf((l - loc).norm_squared(), cfg.beta_l);
        }
    }
    sum / entries.len() as f64
}

/// One affinity entry: weighted sum of the three terms, appearance
/// floored at zero.
pub fn pair_affinity(
    traj: &Trajectory,
    predicted: &PanoBox,
    det: &Detection,
    t: u64,
    cfg: &AffinityConfig,
) -> Result<f64> {
    let app = appearance_similarity(traj, &det.embedding, t)?.clamp(0.0, 1.0);
    let mot = motion_affinity(predicted, &det.bbox)?;
    let loc = location_proximity(traj, det.location.as_ref(), t, cfg);
    Ok(cfg.w_app * app + cfg.w_mot * mot + cfg.w_loc * loc)
}

/// Affinity of every trajectory (rows) against every detection (columns),
/// using each trajectory's current Kalman box as its prediction.
pub fn affinity_matrix(
    trajs: &[Trajectory],
    dets: &[Detection],
    t: u64,
    cfg: &AffinityConfig,
) -> Result<AffinityMatrix> {
    let mut values = Vec::with_capacity(trajs.len() * dets.len());
    for traj in trajs {
        let predicted = traj.motion().to_box();
        for det in dets {
            values.push(pair_affinity(traj, &predicted, det, t, cfg)?);
        }
    }
    AffinityMatrix::new(trajs.len(), dets.len(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::MotionNoise;
    use proptest::prelude::*;

    fn unit(dim: usize, i: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding::new(v).unwrap()
    }

    fn det_at(frame: u64, x: f64, emb: Embedding, loc: Option<Location>) -> Detection {
        Detection::new(
            PanoBox::new(x, 10.0, 20.0, 40.0, 0.9, 700.0).unwrap(),
            emb,
            loc,
            frame,
        )
        .unwrap()
    }

    /// Direct evaluation of the weighted cross-correlation over all entries.
    fn appearance_oracle(traj: &Trajectory, emb: &Embedding, t: u64) -> f64 {
        let (num, den) = traj.entries().iter().fold((0.0, 0.0), |(n, d), e| {
            let w = (e.frame as f64 - t as f64).exp();
            (n + w * e.appearance.cosine(emb), d + w)
        });
        num / den
    }

    #[test]
    fn appearance_single_entry() {
        let e = Embedding::normalized(vec![0.8, 0.6]).unwrap();
        let traj = Trajectory::tentative(&det_at(9, 0.0, e, None), 1, &MotionNoise::default());
        let q = unit(2, 0);
        assert!((appearance_similarity(&traj, &q, 10).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn appearance_two_entries_closed_form() {
        let q = unit(2, 0);
        let mut traj =
            Trajectory::tentative(&det_at(8, 0.0, unit(2, 1), None), 1, &MotionNoise::default());
        traj.extend(&det_at(9, 0.0, unit(2, 0), None)).unwrap();
        let got = appearance_similarity(&traj, &q, 10).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((got - expected).abs() <= 1e-9);
        assert!((got - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn appearance_rejects_future_entries() {
        let traj =
            Trajectory::tentative(&det_at(10, 0.0, unit(2, 0), None), 1, &MotionNoise::default());
        assert!(appearance_similarity(&traj, &unit(2, 0), 10).is_err());
    }

    #[test]
    fn location_none_is_zero() {
        let traj = Trajectory::tentative(
            &det_at(9, 0.0, unit(2, 0), Some(Location::origin())),
            1,
            &MotionNoise::default(),
        );
        assert_eq!(location_proximity(&traj, None, 10, &AffinityConfig::default()), 0.0);
    }

    #[test]
    fn location_single_entry_closed_form() {
        let p = Location::new(1.0, 2.0, 3.0);
        let traj =
            Trajectory::tentative(&det_at(9, 0.0, unit(2, 0), Some(p)), 1, &MotionNoise::default());
        let cfg = AffinityConfig {
            beta_t: 1.0,
            ..AffinityConfig::default()
        };
        let got = location_proximity(&traj, Some(&p), 10, &cfg);
        assert!((got - (-0.5f64).exp()).abs() <= 1e-9);
        assert!((got - 0.606531).abs() < 1e-6);
        // zero gap and zero distance: both kernels at their peak
        assert_eq!(location_proximity(&traj, Some(&p), 9, &cfg), 1.0);
    }

    #[test]
    fn missing_locations_count_in_divisor() {
        let p = Location::new(1.0, 2.0, 3.0);
        let mut traj =
            Trajectory::tentative(&det_at(8, 0.0, unit(2, 0), None), 1, &MotionNoise::default());
        traj.extend(&det_at(9, 0.0, unit(2, 0), Some(p))).unwrap();
        let cfg = AffinityConfig {
            beta_t: 1.0,
            ..AffinityConfig::default()
        };
        let got = location_proximity(&traj, Some(&p), 10, &cfg);
        assert!((got - (-0.5f64).exp() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_for_identical_and_unrelated_targets() {
        let cfg = AffinityConfig {
            beta_t: 1.0,
            ..AffinityConfig::default()
        };
        let p = Location::new(4.0, 0.0, 2.0);
        let traj =
            Trajectory::tentative(&det_at(9, 100.0, unit(4, 0), Some(p)), 1, &MotionNoise::default());
        let same = det_at(10, 100.0, unit(4, 0), Some(p));
        let other = det_at(10, 400.0, unit(4, 1), None);
        let a = affinity_matrix(&[traj], &[same, other], 10, &cfg).unwrap();
        assert!((a.get(0, 0) - (2.0 + (-0.5f64).exp())).abs() < 1e-9);
        assert!((a.get(0, 0) - 2.606531).abs() < 1e-6);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn empty_matrices() {
        let cfg = AffinityConfig::default();
        let d = det_at(10, 0.0, unit(2, 0), None);
        let a = affinity_matrix(&[], &[d.clone(), d], 10, &cfg).unwrap();
        assert_eq!((a.rows(), a.cols()), (0, 2));
        let traj =
            Trajectory::tentative(&det_at(9, 0.0, unit(2, 0), None), 1, &MotionNoise::default());
        let a = affinity_matrix(&[traj], &[], 10, &cfg).unwrap();
        assert_eq!((a.rows(), a.cols()), (1, 0));
    }

    #[test]
    fn negative_appearance_is_floored() {
        let cfg = AffinityConfig::default();
        let traj = Trajectory::tentative(
            &det_at(9, 0.0, Embedding::new(vec![1.0, 0.0]).unwrap(), None),
            1,
            &MotionNoise::default(),
        );
        let opposite = det_at(10, 400.0, Embedding::new(vec![-1.0, 0.0]).unwrap(), None);
        let a = affinity_matrix(&[traj], &[opposite], 10, &cfg).unwrap();
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(AffinityConfig::default().validate().is_ok());
        let bad = AffinityConfig {
            beta_l: 0.0,
            ..AffinityConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AffinityConfig {
            w_mot: -1.0,
            ..AffinityConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn arb_embedding(dim: usize) -> impl Strategy<Value = Embedding> {
        proptest::collection::vec(-1.0f64..1.0, dim)
            .prop_filter_map("zero vector", |v| Embedding::normalized(v).ok())
    }

    proptest! {
        #[test]
        fn appearance_matches_direct_formula(
            embs in proptest::collection::vec(arb_embedding(6), 1..30),
            gaps in proptest::collection::vec(1u64..5, 30),
            q in arb_embedding(6),
            ahead in 1u64..40,
        ) {
            let mut frame = 1;
            let noise = MotionNoise::default();
            let mut traj = Trajectory::tentative(&det_at(frame, 0.0, embs[0].clone(), None), 1, &noise);
            for (e, g) in embs.iter().zip(&gaps).skip(1) {
                frame += g;
                traj.extend(&det_at(frame, 0.0, e.clone(), None)).unwrap();
            }
            let t = frame + ahead;
            let got = appearance_similarity(&traj, &q, t).unwrap();
            prop_assert!((got - appearance_oracle(&traj, &q, t)).abs() < 1e-9);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn appearance_of_constant_correlation_is_that_constant(
            embs in proptest::collection::vec(arb_embedding(5), 1..10),
            q in arb_embedding(5),
        ) {
            let c = embs[0].cosine(&q);
            let noise = MotionNoise::default();
            let mut traj = Trajectory::tentative(&det_at(1, 0.0, embs[0].clone(), None), 1, &noise);
            for (i, _) in embs.iter().enumerate().skip(1) {
                traj.extend(&det_at(1 + i as u64, 0.0, embs[0].clone(), None)).unwrap();
            }
            let got = appearance_similarity(&traj, &q, 100).unwrap();
            prop_assert!((got - c).abs() < 1e-9);
        }

        #[test]
        fn location_monotone_in_distance(d1 in 0.0f64..10.0, d2 in 0.0f64..10.0) {
            let cfg = AffinityConfig::default();
            let traj = Trajectory::tentative(
                &det_at(9, 0.0, unit(2, 0), Some(Location::origin())),
                1,
                &MotionNoise::default(),
            );
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let pn = location_proximity(&traj, Some(&Location::new(near, 0.0, 0.0)), 10, &cfg);
            let pf = location_proximity(&traj, Some(&Location::new(far, 0.0, 0.0)), 10, &cfg);
            prop_assert!(pn >= pf);
            prop_assert!((0.0..=1.0).contains(&pn));
        }

        #[test]
        fn matrix_entries_bounded(
            xs in proptest::collection::vec(0.0f64..680.0, 1..5),
            dxs in proptest::collection::vec(0.0f64..680.0, 1..5),
            w_app in 0.0f64..3.0, w_mot in 0.0f64..3.0, w_loc in 0.0f64..3.0,
        ) {
            let cfg = AffinityConfig { w_app, w_mot, w_loc, ..AffinityConfig::default() };
            let noise = MotionNoise::default();
            let trajs: Vec<Trajectory> = xs.iter().enumerate().map(|(i, x)| {
                Trajectory::tentative(
                    &det_at(9, *x, unit(8, i % 8), Some(Location::new(*x / 100.0, 0.0, 1.0))),
                    i as u64 + 1,
                    &noise,
                )
            }).collect();
            let dets: Vec<Detection> = dxs.iter().enumerate().map(|(i, x)| {
                det_at(10, *x, unit(8, (i + 1) % 8), Some(Location::new(*x / 100.0, 0.0, 1.0)))
            }).collect();
            let a = affinity_matrix(&trajs, &dets, 10, &cfg).unwrap();
            for v in a.values() {
                prop_assert!(*v >= 0.0 && *v <= cfg.max_affinity() + 1e-12);
            }
        }
    }
}

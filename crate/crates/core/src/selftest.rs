//! Randomized checks of the fast code paths against slow reference
//! implementations, runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::{brute_force_matching, solve_matching};
use crate::detection::{Detection, Embedding, Location};
use crate::error::Result;
use crate::fusion::{collect_points, project_point, Calibration, DepthBand, PointCloud};
use crate::geometry::circular_iou;
use crate::kalman::MotionNoise;
use crate::matrix::AffinityMatrix;
use crate::pano_box::PanoBox;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Suite {
    report: SuiteReport,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self {
            report: SuiteReport {
                name,
                cases: 0,
                failures: Vec::new(),
            },
        }
    }

    fn case(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.report.cases += 1;
        if !ok && self.report.failures.len() < 10 {
            self.report.failures.push(msg());
        }
    }
}

/// Hungarian solver against exhaustive search.
pub fn assignment(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite::new("assignment vs brute force");
    for i in 0..cases {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let integer = i % 2 == 0;
        let values = (0..rows * cols)
            .map(|_| {
                if integer {
                    rng.random_range(0..=9) as f64
                } else {
                    rng.random_range(0.0..3.0)
                }
            })
            .collect();
        let a = AffinityMatrix::new(rows, cols, values)?;
        let x = solve_matching(&a)?;
        let (best, _) = brute_force_matching(&a)?;
        let got = x.objective(&a);
        let ok = if integer { got == best } else { (got - best).abs() <= 1e-9 };
        suite.case(ok && x.satisfies_constraints(), || {
            format!("{rows}x{cols} matrix {i}: solver {got}, exhaustive {best}")
        });
    }
    Ok(suite.report)
}

fn random_box(rng: &mut ChaCha8Rng, width: f64) -> Result<PanoBox> {
    let x = rng.random_range(0..width as u32) as f64;
    let w = rng.random_range(1..=width as u32) as f64;
    let y = rng.random_range(0..20) as f64;
    let h = rng.random_range(1..20) as f64;
    PanoBox::new(x, y, w, h, 1.0, width)
}

/// Circular IoU symmetry, range and exact shift invariance on integer boxes.
pub fn geometry(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite::new("circular IoU invariants");
    let width = 64.0;
    for _ in 0..cases {
        let a = random_box(&mut rng, width)?;
        let b = random_box(&mut rng, width)?;
        let base = circular_iou(&a, &b)?;
        let sym = circular_iou(&b, &a)?;
        suite.case(base.to_bits() == sym.to_bits() && (0.0..=1.0).contains(&base), || {
            format!("{a:?} {b:?}: {base} vs {sym}")
        });
        let delta = rng.random_range(0..64) as f64;
        let shifted = circular_iou(&a.shifted(delta), &b.shifted(delta))?;
        suite.case(shifted.to_bits() == base.to_bits(), || {
            format!("{a:?} {b:?} shifted by {delta}: {base} vs {shifted}")
        });
    }
    Ok(suite.report)
}

/// Frustum-culled point collection against a per-point projection test.
pub fn fusion(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite::new("point collection vs per-point projection");
    for _ in 0..cases {
        let mut m = [0.0; 12];
        m.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
        m[8..11].copy_from_slice(&[0.0, 0.0, 1.0]);
        let Ok(calib) = Calibration::from_row_slice(&m, 200.0, 100.0) else {
            continue;
        };
        let points: Vec<Location> = (0..200)
            .map(|_| {
                Location::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-5.0..20.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(0, points)?;
        let bbox = PanoBox::new(
            rng.random_range(0.0..200.0),
            rng.random_range(0.0..80.0),
            rng.random_range(1.0..120.0),
            rng.random_range(1.0..40.0),
            1.0,
            200.0,
        )?;
        let fast = collect_points(&bbox, &cloud, &calib, DepthBand::ALL);
        let slow: Vec<Location> = cloud
            .points()
            .iter()
            .filter(|h| project_point(h, &calib).is_some_and(|(u, v)| bbox.contains(u, v)))
            .copied()
            .collect();
        suite.case(fast == slow, || {
            format!("{bbox:?}: {} points collected, {} by projection", fast.len(), slow.len())
        });
    }
    Ok(suite.report)
}

/// Incrementally maintained appearance term against the direct weighted
/// sum over all entries.
pub fn appearance(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite::new("incremental appearance vs direct sum");
    let noise = MotionNoise::default();
    let emb = |rng: &mut ChaCha8Rng| {
        Embedding::normalized((0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let bbox = PanoBox::new(10.0, 10.0, 20.0, 40.0, 1.0, 500.0)?;
    for _ in 0..cases {
        let len = rng.random_range(1..40);
        let mut frame = rng.random_range(0..10);
        let mut traj = Trajectory::tentative(&Detection::new(bbox, emb(&mut rng)?, None, frame)?, 1, &noise);
        for _ in 1..len {
            frame += rng.random_range(1..4);
            traj.extend(&Detection::new(bbox, emb(&mut rng)?, None, frame)?)?;
        }
        let q = emb(&mut rng)?;
        let t = frame + rng.random_range(1..5);
        let got = crate::affinity::appearance_similarity(&traj, &q, t)?;
        let (num, den) = traj.entries().iter().fold((0.0, 0.0), |(n, d), e| {
            let w = (e.frame as f64 - t as f64).exp();
            (n + w * e.appearance.cosine(&q), d + w)
        });
        let direct = num / den;
        suite.case((got - direct).abs() <= 1e-9, || format!("{len} entries: {got} vs {direct}"));
    }
    Ok(suite.report)
}

pub fn run_all(cases: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        assignment(cases, seed)?,
        geometry(cases, seed)?,
        fusion(cases, seed)?,
        appearance(cases, seed)?,
    ])
}

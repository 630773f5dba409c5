//! CLEAR-MOT evaluation: MOTA, identity switches, false positives and
//! false negatives of a hypothesis against ground truth.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::association::{solve_matching_with, MatchObjective};
use crate::error::{Error, Result};
use crate::geometry::circular_iou;
use crate::matrix::AffinityMatrix;
use crate::pano_box::PanoBox;
use crate::tracker::TrackOutput;

/// Per-frame `(id, box)` annotations for ground truth or a hypothesis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAnnotations {
    frames: BTreeMap<u64, Vec<(u64, PanoBox)>>,
}

impl FrameAnnotations {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one box; ids must be unique within a frame.
    pub fn insert(&mut self, frame: u64, id: u64, bbox: PanoBox) -> Result<()> {
        let entries = self.frames.entry(frame).or_default();
        if entries.iter().any(|(i, _)| *i == id) {
            return Err(Error::InvalidAnnotations(format!(
                "id {id} appears twice in frame {frame}"
            )));
        }
        entries.push((id, bbox));
        Ok(())
    }

    /// Make `frame` part of the sequence even if it has no boxes.
    pub fn touch(&mut self, frame: u64) {
        self.frames.entry(frame).or_default();
    }

    pub fn from_tracks(tracks: &[TrackOutput]) -> Result<Self> {
        let mut ann = Self::new();
        for t in tracks {
            ann.insert(t.frame, t.id, t.bbox)?;
        }
        Ok(ann)
    }

    pub fn frame(&self, frame: u64) -> &[(u64, PanoBox)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = (u64, &[(u64, PanoBox)])> {
        self.frames.iter().map(|(f, v)| (*f, v.as_slice()))
    }

    pub fn frame_range(&self) -> Option<(u64, u64)> {
        Some((*self.frames.keys().next()?, *self.frames.keys().next_back()?))
    }

    pub fn box_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// Apply `f` to every id.
    pub fn map_ids(&self, f: impl Fn(u64) -> u64) -> Result<Self> {
        let mut out = Self::new();
        for (frame, entries) in self.frames() {
            out.touch(frame);
            for (id, b) in entries {
                out.insert(frame, f(*id), *b)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mota: f64,
    pub ids: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt_count: usize,
    pub matches: usize,
}

/// Score `hyp` against `gt`, matching boxes with IoU ≥ `iou_match`.
///
/// Correspondences from the previous frame are kept while their IoU stays
/// above the threshold; remaining boxes are matched by an optimal
/// assignment maximizing total IoU.
pub fn evaluate(gt: &FrameAnnotations, hyp: &FrameAnnotations, iou_match: f64) -> Result<Metrics> {
    let Some((first, last)) = gt.frame_range() else {
        return Err(Error::FrameRange("ground truth has no frames".into()));
    };
    if let Some((hf, hl)) = hyp.frame_range() {
        if hf < first || hl > last {
            return Err(Error::FrameRange(format!(
                "hypothesis frames {hf}..={hl} outside ground truth {first}..={last}"
            )));
        }
    }
    if !(0.0..=1.0).contains(&iou_match) || iou_match == 0.0 {
        return Err(Error::InvalidConfig(format!("iou_match {iou_match} must be in (0, 1]")));
    }

    let mut current: HashMap<u64, u64> = HashMap::new();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let (mut ids, mut fp, mut fn_, mut gt_count, mut matches) = (0, 0, 0, 0, 0);

    for frame in first..=last {
        let g = gt.frame(frame);
        let h = hyp.frame(frame);
        gt_count += g.len();

        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];

        for (gi, (gid, gb)) in g.iter().enumerate() {
            let Some(&hid) = current.get(gid) else { continue };
            if let Some(hi) = h.iter().position(|(id, _)| *id == hid) {
                if !h_used[hi] && circular_iou(gb, &h[hi].1)? >= iou_match {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    pairs.push((gi, hi));
                }
            }
        }

        let free_g: Vec<usize> = (0..g.len()).filter(|i| !g_used[*i]).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|i| !h_used[*i]).collect();
        let mut values = Vec::with_capacity(free_g.len() * free_h.len());
        for &gi in &free_g {
            for &hi in &free_h {
                let iou = circular_iou(&g[gi].1, &h[hi].1)?;
                values.push(if iou >= iou_match { iou } else { 0.0 });
            }
        }
        let a = AffinityMatrix::new(free_g.len(), free_h.len(), values)?;
        let x = solve_matching_with(&a, MatchObjective::LinearSum)?;
        debug_assert!(x.satisfies_constraints());
        for &(r, c) in x.pairs() {
            pairs.push((free_g[r], free_h[c]));
        }

        current.clear();
        for &(gi, hi) in &pairs {
            let (gid, hid) = (g[gi].0, h[hi].0);
            if let Some(prev) = last_match.insert(gid, hid) {
                if prev != hid {
                    ids += 1;
                }
            }
            current.insert(gid, hid);
        }
        matches += pairs.len();
        fn_ += g.len() - pairs.len();
        fp += h.len() - pairs.len();
    }

    if gt_count == 0 {
        return Err(Error::FrameRange("ground truth has no boxes".into()));
    }
    let errors = fn_ + fp + ids;
    let mota = (gt_count as f64 - errors as f64) / gt_count as f64;
    Ok(Metrics {
        mota,
        ids,
        fp,
        fn_,
        gt_count,
        matches,
    })
}

/// Ids seen in `ann`.
pub fn ids(ann: &FrameAnnotations) -> HashSet<u64> {
    ann.frames().flat_map(|(_, e)| e.iter().map(|(id, _)| *id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64) -> PanoBox {
        PanoBox::new(x, 0.0, 20.0, 40.0, 1.0, 1000.0).unwrap()
    }

    fn gt_grid(n_targets: u64, n_frames: u64) -> FrameAnnotations {
        let mut gt = FrameAnnotations::new();
        for f in 0..n_frames {
            for id in 0..n_targets {
                gt.insert(f, id + 1, b(id as f64 * 50.0 + f as f64)).unwrap();
            }
        }
        gt
    }

    #[test]
    fn perfect_tracking() {
        let gt = gt_grid(3, 5);
        let m = evaluate(&gt, &gt, 0.5).unwrap();
        assert_eq!(m.mota, 1.0);
        assert_eq!((m.ids, m.fp, m.fn_), (0, 0, 0));
    }

    #[test]
    fn empty_hypothesis() {
        let gt = gt_grid(3, 5);
        let m = evaluate(&gt, &FrameAnnotations::new(), 0.5).unwrap();
        assert_eq!(m.mota, 0.0);
        assert_eq!(m.fn_, 15);
    }

    #[test]
    fn duplicate_id_in_frame_rejected() {
        let mut a = FrameAnnotations::new();
        a.insert(0, 1, b(0.0)).unwrap();
        assert!(a.insert(0, 1, b(100.0)).is_err());
    }

    #[test]
    fn frame_range_mismatch() {
        let gt = gt_grid(1, 5);
        let mut hyp = FrameAnnotations::new();
        hyp.insert(9, 1, b(0.0)).unwrap();
        assert!(matches!(evaluate(&gt, &hyp, 0.5), Err(Error::FrameRange(_))));
        assert!(evaluate(&FrameAnnotations::new(), &hyp, 0.5).is_err());
    }

    #[test]
    fn continuation_is_preferred() {
        // gt 1 overlaps both hypotheses; the existing correspondence wins
        // even though the other hypothesis fits better
        let mut gt = FrameAnnotations::new();
        let mut hyp = FrameAnnotations::new();
        gt.insert(0, 1, b(100.0)).unwrap();
        hyp.insert(0, 7, b(100.0)).unwrap();
        gt.insert(1, 1, b(100.0)).unwrap();
        hyp.insert(1, 7, b(104.0)).unwrap();
        hyp.insert(1, 8, b(100.0)).unwrap();
        let m = evaluate(&gt, &hyp, 0.5).unwrap();
        assert_eq!(m.ids, 0);
        assert_eq!(m.fp, 1);
    }

    #[test]
    fn id_switch_counted_once() {
        let gt = gt_grid(2, 6);
        let hyp = gt.clone();
        let mut split = FrameAnnotations::new();
        for (f, entries) in hyp.frames() {
            for (id, bx) in entries {
                let id = if *id == 1 && f >= 3 { 99 } else { *id };
                split.insert(f, id, *bx).unwrap();
            }
        }
        let m = evaluate(&gt, &split, 0.5).unwrap();
        assert_eq!((m.ids, m.fp, m.fn_), (1, 0, 0));
    }

    #[test]
    fn seam_boxes_match() {
        let mut gt = FrameAnnotations::new();
        let mut hyp = FrameAnnotations::new();
        gt.insert(0, 1, PanoBox::new(990.0, 0.0, 20.0, 40.0, 1.0, 1000.0).unwrap()).unwrap();
        hyp.insert(0, 5, PanoBox::new(992.0, 0.0, 20.0, 40.0, 1.0, 1000.0).unwrap()).unwrap();
        let m = evaluate(&gt, &hyp, 0.5).unwrap();
        assert_eq!(m.matches, 1);
    }
}

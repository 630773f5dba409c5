//! Panorama slicing, slice/panorama coordinate mapping, circular IoU and
//! the NMS merge of per-slice detections.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{Error, Result};
use crate::pano_box::{wrap_column, PanoBox};

const MAX_OVERLAP: f64 = 0.9;

/// Column layout of `N` overlapping slices covering the whole panorama circle.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceLayout {
    pano_width: u32,
    overlap: f64,
    slice_width: u32,
    offsets: Vec<u32>,
}

impl SliceLayout {
    pub fn pano_width(&self) -> u32 {
        self.pano_width
    }
    pub fn n_slices(&self) -> usize {
        self.offsets.len()
    }
    pub fn overlap(&self) -> f64 {
        self.overlap
    }
    pub fn slice_width(&self) -> u32 {
        self.slice_width
    }
    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn offset(&self, slice: usize) -> Result<u32> {
        self.offsets.get(slice).copied().ok_or(Error::SliceOutOfRange {
            index: slice,
            count: self.offsets.len(),
        })
    }

    /// Whether panorama column `col` falls inside slice `slice`.
    pub fn slice_contains(&self, slice: usize, col: f64) -> bool {
        let Some(&off) = self.offsets.get(slice) else {
            return false;
        };
        wrap_column(col - off as f64, self.pano_width as f64) < self.slice_width as f64
    }
}

/// Split a `width`-column panorama into `n_slices` slices overlapping by
/// the fraction `overlap` of a slice.
///
/// The slice width is `⌈W / (N (1 − o))⌉`, slices start every `W / N`
/// columns (rounded down) and the last slice wraps across the seam. A
/// single slice is the whole image.
pub fn make_layout(width: u32, n_slices: usize, overlap: f64) -> Result<SliceLayout> {
    if width == 0 {
        return Err(Error::InvalidLayout("panorama width must be positive".into()));
    }
    if n_slices == 0 {
        return Err(Error::InvalidLayout("at least one slice is required".into()));
    }
    if !(0.0..=MAX_OVERLAP).contains(&overlap) {
        return Err(Error::InvalidLayout(format!(
            "overlap {overlap} outside [0, {MAX_OVERLAP}]"
        )));
    }
    let slice_width = if n_slices == 1 {
        width
    } else {
        let exact = width as f64 / (n_slices as f64 * (1.0 - overlap));
        let s = (exact - 1e-9).ceil() as u64;
        if s > width as u64 {
            return Err(Error::InvalidLayout(format!(
                "slice width {s} exceeds panorama width {width}"
            )));
        }
        s as u32
    };
    let offsets = (0..n_slices as u64)
        .map(|i| (i * width as u64 / n_slices as u64) as u32)
        .collect();
    Ok(SliceLayout {
        pano_width: width,
        overlap,
        slice_width,
        offsets,
    })
}

/// A box in the local pixel frame of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

pub fn slice_to_pano(b: &SliceBox, slice: usize, layout: &SliceLayout) -> Result<PanoBox> {
    let offset = layout.offset(slice)?;
    let s = layout.slice_width as f64;
    if !(b.x >= 0.0 && b.x + b.w <= s) {
        return Err(Error::InvalidBox(format!(
            "slice box [{}, {}) outside slice width {s}",
            b.x,
            b.x + b.w
        )));
    }
    let width = layout.pano_width as f64;
    PanoBox::new(
        wrap_column(b.x + offset as f64, width),
        b.y,
        b.w,
        b.h,
        b.score,
        width,
    )
}

/// Inverse of [`slice_to_pano`] for boxes fully inside the slice.
pub fn pano_to_slice(b: &PanoBox, slice: usize, layout: &SliceLayout) -> Result<Option<SliceBox>> {
    let offset = layout.offset(slice)?;
    if b.pano_width() != layout.pano_width as f64 {
        return Err(Error::WidthMismatch(b.pano_width(), layout.pano_width as f64));
    }
    let x = wrap_column(b.x() - offset as f64, b.pano_width());
    if x + b.w() > layout.slice_width as f64 {
        return Ok(None);
    }
    Ok(Some(SliceBox {
        x,
        y: b.y(),
        w: b.w(),
        h: b.h(),
        score: b.score(),
    }))
}

fn canonical_order(a: &PanoBox, b: &PanoBox) -> Ordering {
    let key = |p: &PanoBox| [p.x(), p.y(), p.w(), p.h()];
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Intersection-over-union on the circular column axis.
pub fn circular_iou(a: &PanoBox, b: &PanoBox) -> Result<f64> {
    if a.pano_width() != b.pano_width() {
        return Err(Error::WidthMismatch(a.pano_width(), b.pano_width()));
    }
    // evaluate in a fixed argument order so the result is bitwise symmetric
    let (a, b) = if canonical_order(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let rows = (a.y() + a.h()).min(b.y() + b.h()) - a.y().max(b.y());
    if rows <= 0.0 {
        return Ok(0.0);
    }
    let cols: f64 = a
        .columns()
        .spans()
        .flat_map(|sa| b.columns().spans().map(move |sb| sa.overlap(&sb)))
        .sum();
    if cols <= 0.0 {
        return Ok(0.0);
    }
    let inter = rows * cols;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NmsMode {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsParams {
    pub mode: NmsMode,
    /// Hard mode suppresses boxes whose IoU with a kept box exceeds this.
    pub iou_threshold: f64,
    /// Soft mode decays scores by `exp(-iou² / sigma)`.
    pub sigma: f64,
    /// Soft mode drops boxes whose decayed score falls below this.
    pub score_floor: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            mode: NmsMode::Hard,
            iou_threshold: 0.5,
            sigma: 0.5,
            score_floor: 0.05,
        }
    }
}

/// Anything carrying a panorama box and a score that NMS can rewrite.
pub trait Scored: Clone {
    fn pano_box(&self) -> &PanoBox;
    fn rescored(&self, score: f64) -> Self;
}

impl Scored for PanoBox {
    fn pano_box(&self) -> &PanoBox {
        self
    }
    fn rescored(&self, score: f64) -> Self {
        self.with_score(score).expect("decayed score stays in [0, 1]")
    }
}

impl Scored for Detection {
    fn pano_box(&self) -> &PanoBox {
        &self.bbox
    }
    fn rescored(&self, score: f64) -> Self {
        Detection {
            bbox: self.bbox.rescored(score),
            ..self.clone()
        }
    }
}

/// Merge the per-slice detection sets into one panorama set.
///
/// The output is sorted by descending score; ties keep input order.
pub fn nms_merge<T: Scored>(per_slice: &[Vec<T>], params: &NmsParams) -> Result<Vec<T>> {
    let mut pool: Vec<T> = per_slice.iter().flatten().cloned().collect();
    if let Some(first) = pool.first() {
        let w = first.pano_box().pano_width();
        if let Some(other) = pool.iter().find(|d| d.pano_box().pano_width() != w) {
            return Err(Error::WidthMismatch(w, other.pano_box().pano_width()));
        }
    }
    pool.sort_by(|a, b| b.pano_box().score().total_cmp(&a.pano_box().score()));
    match params.mode {
        NmsMode::Hard => hard_nms(pool, params.iou_threshold),
        NmsMode::Soft => soft_nms(pool, params.sigma, params.score_floor),
    }
}

fn hard_nms<T: Scored>(sorted: Vec<T>, threshold: f64) -> Result<Vec<T>> {
    let mut kept: Vec<T> = Vec::new();
    for cand in sorted {
        let mut suppressed = false;
        for k in &kept {
            if circular_iou(k.pano_box(), cand.pano_box())? > threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept)
}

fn soft_nms<T: Scored>(mut pool: Vec<T>, sigma: f64, floor: f64) -> Result<Vec<T>> {
    let mut kept = Vec::new();
    pool.retain(|d| d.pano_box().score() >= floor);
    while !pool.is_empty() {
        let best_idx = pool
            .iter()
            .enumerate()
            .fold(0, |best, (i, d)| {
                if d.pano_box().score() > pool[best].pano_box().score() {
                    i
                } else {
                    best
                }
            });
        let best = pool.remove(best_idx);
        let mut rest = Vec::with_capacity(pool.len());
        for d in pool {
            let iou = circular_iou(best.pano_box(), d.pano_box())?;
            let score = d.pano_box().score() * (-(iou * iou) / sigma).exp();
            if score >= floor {
                rest.push(d.rescored(score));
            }
        }
        pool = rest;
        kept.push(best);
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64, score: f64, width: f64) -> PanoBox {
        PanoBox::new(x, y, w, h, score, width).unwrap()
    }

    #[test]
    fn single_slice_is_whole_image() {
        let l = make_layout(1000, 1, 0.2).unwrap();
        assert_eq!(l.slice_width(), 1000);
        assert_eq!(l.offsets(), &[0]);
    }

    #[test]
    fn two_slices_wrap_the_seam() {
        let l = make_layout(1000, 2, 0.2).unwrap();
        assert_eq!(l.slice_width(), 625);
        assert_eq!(l.offsets(), &[0, 500]);
        // slice 2 covers [500, 1000) ∪ [0, 125)
        assert!(l.slice_contains(1, 999.0));
        assert!(l.slice_contains(1, 124.5));
        assert!(!l.slice_contains(1, 125.0));
        assert!(!l.slice_contains(1, 499.0));
    }

    #[test]
    fn seven_slices_with_twenty_percent_overlap() {
        let l = make_layout(3500, 7, 0.2).unwrap();
        assert_eq!(l.slice_width(), 625);
        assert_eq!(l.offsets(), &[0, 500, 1000, 1500, 2000, 2500, 3000]);
        let overlap = l.slice_width() - (l.offsets()[1] - l.offsets()[0]);
        assert!((overlap as f64 - 0.2 * 625.0).abs() <= 1.0);
    }

    #[test]
    fn layout_covers_every_column() {
        for (w, n, o) in [(1000, 2, 0.2), (3500, 7, 0.2), (997, 5, 0.33), (64, 3, 0.0)] {
            let l = make_layout(w, n, o).unwrap();
            for c in 0..w {
                assert!(
                    (0..n).any(|i| l.slice_contains(i, c as f64 + 0.5)),
                    "column {c} uncovered for {w}/{n}/{o}"
                );
            }
        }
    }

    #[test]
    fn layout_rejects_bad_parameters() {
        assert!(make_layout(1000, 2, 1.0).is_err());
        assert!(make_layout(1000, 2, -0.1).is_err());
        assert!(make_layout(1000, 0, 0.2).is_err());
        assert!(make_layout(0, 2, 0.2).is_err());
        // s = 1000 / (2 * 0.2) = 2500 > W
        assert!(make_layout(1000, 2, 0.8).is_err());
    }

    #[test]
    fn slice_to_pano_translates_and_wraps() {
        let l = make_layout(1000, 2, 0.2).unwrap();
        let sb = |x: f64| SliceBox {
            x,
            y: 3.0,
            w: 30.0,
            h: 40.0,
            score: 0.9,
        };
        assert_eq!(slice_to_pano(&sb(10.0), 0, &l).unwrap().x(), 10.0);
        assert_eq!(slice_to_pano(&sb(10.0), 1, &l).unwrap().x(), 510.0);
        let p = slice_to_pano(&sb(550.0), 1, &l).unwrap();
        assert_eq!(p.x(), 50.0);
        assert_eq!(p.columns().total_len(), 30.0);
        assert!(matches!(
            slice_to_pano(&sb(10.0), 2, &l),
            Err(Error::SliceOutOfRange { .. })
        ));
        assert!(slice_to_pano(&sb(600.0), 0, &l).is_err());
    }

    #[test]
    fn pano_to_slice_inverts_mapping() {
        let l = make_layout(1000, 2, 0.2).unwrap();
        let p = b(980.0, 3.0, 40.0, 40.0, 0.9, 1000.0);
        assert!(pano_to_slice(&p, 0, &l).unwrap().is_none());
        let s = pano_to_slice(&p, 1, &l).unwrap().unwrap();
        assert_eq!(s.x, 480.0);
        assert_eq!(slice_to_pano(&s, 1, &l).unwrap(), p);
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = b(10.0, 0.0, 20.0, 10.0, 1.0, 700.0);
        assert_eq!(circular_iou(&a, &a).unwrap(), 1.0);
        let c = b(100.0, 0.0, 20.0, 10.0, 1.0, 700.0);
        assert_eq!(circular_iou(&a, &c).unwrap(), 0.0);
        let d = b(10.0, 50.0, 20.0, 10.0, 1.0, 700.0);
        assert_eq!(circular_iou(&a, &d).unwrap(), 0.0);
    }

    #[test]
    fn iou_across_seam() {
        let a = b(695.0, 0.0, 10.0, 10.0, 1.0, 700.0);
        let c = b(0.0, 0.0, 5.0, 10.0, 1.0, 700.0);
        // intersection 5*10 = 50, union 100 + 50 - 50 = 100
        assert_eq!(circular_iou(&a, &c).unwrap(), 0.5);
    }

    #[test]
    fn iou_width_mismatch() {
        let a = b(0.0, 0.0, 5.0, 10.0, 1.0, 700.0);
        let c = b(0.0, 0.0, 5.0, 10.0, 1.0, 800.0);
        assert!(matches!(circular_iou(&a, &c), Err(Error::WidthMismatch(..))));
    }

    #[test]
    fn hard_nms_suppresses_duplicates() {
        let a = b(10.0, 0.0, 20.0, 10.0, 0.9, 700.0);
        let c = a.with_score(0.8).unwrap();
        let out = nms_merge(&[vec![c], vec![a]], &NmsParams::default()).unwrap();
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn hard_nms_keeps_disjoint() {
        let a = b(10.0, 0.0, 20.0, 10.0, 0.7, 700.0);
        let c = b(300.0, 0.0, 20.0, 10.0, 0.9, 700.0);
        let out = nms_merge(&[vec![a, c]], &NmsParams::default()).unwrap();
        assert_eq!(out, vec![c, a]);
    }

    #[test]
    fn hard_nms_chain_keeps_first_and_third() {
        // IoU(1,2) = 0.6, IoU(2,3) = 0.6, IoU(1,3) = 0.2: box 2 is suppressed
        // by box 1 and therefore cannot suppress box 3.
        let b1 = b(0.0, 0.0, 6.0, 10.0, 0.9, 700.0);
        let b2 = b(0.0, 0.0, 10.0, 10.0, 0.8, 700.0);
        let b3 = b(4.0, 0.0, 6.0, 10.0, 0.7, 700.0);
        assert!((circular_iou(&b1, &b2).unwrap() - 0.6).abs() < 1e-12);
        assert!((circular_iou(&b2, &b3).unwrap() - 0.6).abs() < 1e-12);
        assert!((circular_iou(&b1, &b3).unwrap() - 0.2).abs() < 1e-12);
        let out = nms_merge(&[vec![b3, b2, b1]], &NmsParams::default()).unwrap();
        assert_eq!(out, vec![b1, b3]);
    }

    #[test]
    fn soft_nms_decays_overlapping_scores() {
        let p = NmsParams {
            mode: NmsMode::Soft,
            ..NmsParams::default()
        };
        let a = b(10.0, 0.0, 20.0, 10.0, 0.9, 700.0);
        let c = b(15.0, 0.0, 20.0, 10.0, 0.8, 700.0);
        let far = b(400.0, 0.0, 20.0, 10.0, 0.5, 700.0);
        let out = nms_merge(&[vec![a, c, far]], &p).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], a);
        let iou = circular_iou(&a, &c).unwrap();
        let decayed = 0.8 * (-(iou * iou) / 0.5).exp();
        assert_eq!(out[1], far);
        assert!((out[2].score() - decayed).abs() < 1e-12);
        // identical box decays by e^{-2}: 0.06 * 0.135 < floor
        let dup = a.with_score(0.06).unwrap();
        let out = nms_merge(&[vec![a, dup]], &p).unwrap();
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn nms_empty_input() {
        let out: Vec<PanoBox> = nms_merge(&[], &NmsParams::default()).unwrap();
        assert!(out.is_empty());
    }

    fn arb_box(width: f64) -> impl Strategy<Value = PanoBox> {
        (0..width as u32, 0u32..20, 1..=width as u32, 1u32..20).prop_map(move |(x, y, w, h)| {
            PanoBox::new(x as f64, y as f64, w as f64, h as f64, 0.5, width).unwrap()
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(64.0), c in arb_box(64.0)) {
            let ab = circular_iou(&a, &c).unwrap();
            let ba = circular_iou(&c, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(circular_iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn iou_shift_invariant(a in arb_box(64.0), c in arb_box(64.0), d in 0u32..64) {
            let base = circular_iou(&a, &c).unwrap();
            let shifted = circular_iou(&a.shifted(d as f64), &c.shifted(d as f64)).unwrap();
            prop_assert_eq!(base.to_bits(), shifted.to_bits());
        }

        #[test]
        fn hard_nms_output_is_pairwise_separated(
            boxes in proptest::collection::vec((arb_box(64.0), 0.0f64..=1.0), 0..12),
        ) {
            let dets: Vec<PanoBox> =
                boxes.iter().map(|(b, s)| b.with_score(*s).unwrap()).collect();
            let out = nms_merge(&[dets.clone()], &NmsParams::default()).unwrap();
            prop_assert!(out.len() <= dets.len());
            for i in 0..out.len() {
                for j in 0..i {
                    prop_assert!(circular_iou(&out[i], &out[j]).unwrap() <= 0.5);
                }
            }
            prop_assert!(out.windows(2).all(|w| w[0].score() >= w[1].score()));
        }

        #[test]
        fn soft_nms_never_grows(
            boxes in proptest::collection::vec((arb_box(64.0), 0.0f64..=1.0), 0..12),
        ) {
            let p = NmsParams { mode: NmsMode::Soft, ..NmsParams::default() };
            let dets: Vec<PanoBox> =
                boxes.iter().map(|(b, s)| b.with_score(*s).unwrap()).collect();
            let out = nms_merge(&[dets.clone()], &p).unwrap();
            prop_assert!(out.len() <= dets.len());
            prop_assert!(out.windows(2).all(|w| w[0].score() >= w[1].score()));
        }
    }
}

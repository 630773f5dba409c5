//! Axis-aligned boxes on a circular panorama.
//!
//! The column axis of a 360° panorama is a circle of circumference `W`
//! pixels. A box stores its left edge `x ∈ [0, W)` and its width `w ≤ W`;
//! when `x + w > W` the box crosses the seam and covers
//! `[x, W) ∪ [0, x + w − W)`.

use crate::error::{Error, Result};

/// Reduce a column coordinate onto `[0, width)`.
pub fn wrap_column(x: f64, width: f64) -> f64 {
    let r = x.rem_euclid(width);
    // rem_euclid can round up to `width` for tiny negative inputs
    if r >= width {
        0.0
    } else {
        r
    }
}

/// A half-open column interval `[start, end)` with `0 ≤ start < end ≤ W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSpan {
    pub start: f64,
    pub end: f64,
}

impl ColumnSpan {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, col: f64) -> bool {
        col >= self.start && col < self.end
    }

    pub fn overlap(&self, other: &ColumnSpan) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// The one or two column spans covered by a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Columns {
    Single(ColumnSpan),
    Wrapped(ColumnSpan, ColumnSpan),
}

impl Columns {
    pub fn spans(&self) -> impl Iterator<Item = ColumnSpan> {
        let (a, b) = match *self {
            Columns::Single(a) => (a, None),
            Columns::Wrapped(a, b) => (a, Some(b)),
        };
        std::iter::once(a).chain(b)
    }

    pub fn total_len(&self) -> f64 {
        self.spans().map(|s| s.len()).sum()
    }

    pub fn contains(&self, col: f64) -> bool {
        self.spans().any(|s| s.contains(col))
    }
}

/// A detection or track box in panorama pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanoBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
    pano_width: f64,
}

impl PanoBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, score: f64, pano_width: f64) -> Result<Self> {
        if !(pano_width.is_finite() && pano_width > 0.0) {
            return Err(Error::InvalidBox(format!("panorama width {pano_width}")));
        }
        if !(x.is_finite() && x >= 0.0 && x < pano_width) {
            return Err(Error::InvalidBox(format!("x={x} outside [0, {pano_width})")));
        }
        if !y.is_finite() {
            return Err(Error::InvalidBox(format!("y={y} not finite")));
        }
        if !(w.is_finite() && w > 0.0 && w <= pano_width) {
            return Err(Error::InvalidBox(format!("w={w} outside (0, {pano_width}]")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidBox(format!("h={h} must be positive")));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidBox(format!("score={score} outside [0, 1]")));
        }
        Ok(Self {
            x,
            y,
            w,
            h,
            score,
            pano_width,
        })
    }

    /// Build a box from its center, wrapping the left edge onto the circle.
    pub fn from_center(
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
        score: f64,
        pano_width: f64,
    ) -> Result<Self> {
        if !cx.is_finite() {
            return Err(Error::InvalidBox(format!("center x={cx} not finite")));
        }
        Self::new(
            wrap_column(cx - w / 2.0, pano_width),
            cy - h / 2.0,
            w,
            h,
            score,
            pano_width,
        )
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn score(&self) -> f64 {
        self.score
    }
    pub fn pano_width(&self) -> f64 {
        self.pano_width
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Column center, reduced onto `[0, W)`.
    pub fn center_x(&self) -> f64 {
        wrap_column(self.x + self.w / 2.0, self.pano_width)
    }

    pub fn center_y(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn wraps(&self) -> bool {
        self.x + self.w > self.pano_width
    }

    pub fn columns(&self) -> Columns {
        let end = self.x + self.w;
        if end <= self.pano_width {
            Columns::Single(ColumnSpan {
                start: self.x,
                end,
            })
        } else {
            Columns::Wrapped(
                ColumnSpan {
                    start: self.x,
                    end: self.pano_width,
                },
                ColumnSpan {
                    start: 0.0,
                    end: end - self.pano_width,
                },
            )
        }
    }

    /// Whether the pixel `(col, row)` lies inside the box.
    pub fn contains(&self, col: f64, row: f64) -> bool {
        row >= self.y && row < self.y + self.h && self.columns().contains(col)
    }

    /// Rotate the box by `delta` columns around the panorama.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            x: wrap_column(self.x + delta, self.pano_width),
            ..*self
        }
    }

    pub fn with_score(&self, score: f64) -> Result<Self> {
        Self::new(self.x, self.y, self.w, self.h, score, self.pano_width)
    }
}

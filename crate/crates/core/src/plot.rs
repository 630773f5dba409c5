//! Trajectory overlay: each track's center path drawn on a panorama-sized
//! canvas, with paths broken where they cross the seam.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tracker::TrackOutput;

const BACKGROUND: Rgb<u8> = Rgb([24, 24, 28]);

/// Distinct, deterministic color for a track id.
pub fn id_color(id: u64) -> Rgb<u8> {
    // golden-angle hue steps keep neighboring ids apart
    let hue = (id as f64 * 137.507_764) % 360.0;
    let (s, v) = (0.75, 0.95);
    let c = v * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |f: f64| ((f + m) * 255.0).round() as u8;
    Rgb([to(r), to(g), to(b)])
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn marker(img: &mut RgbImage, (x, y): (i64, i64), color: Rgb<u8>) {
    for dy in -2..=2 {
        for dx in -2..=2 {
            put(img, x + dx, y + dy, color);
        }
    }
}

/// Render the center paths of `tracks` on a `width × height` canvas.
pub fn render(tracks: &[TrackOutput], width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig(format!("canvas {width}x{height}")));
    }
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let mut paths: BTreeMap<u64, Vec<(u64, f64, f64)>> = BTreeMap::new();
    for t in tracks {
        paths
            .entry(t.id)
            .or_default()
            .push((t.frame, t.bbox.center_x(), t.bbox.center_y()));
    }
    let half = width as f64 / 2.0;
    for (id, mut path) in paths {
        path.sort_by_key(|p| p.0);
        let color = id_color(id);
        let px = |p: &(u64, f64, f64)| (p.1.floor() as i64, p.2.floor() as i64);
        for pair in path.windows(2) {
            // the shorter way round passes the seam: leave a gap
            if (pair[1].1 - pair[0].1).abs() > half {
                continue;
            }
            line(&mut img, px(&pair[0]), px(&pair[1]), color);
        }
        if let Some(last) = path.last() {
            marker(&mut img, px(last), color);
        }
    }
    Ok(img)
}

pub fn write_png(path: &Path, tracks: &[TrackOutput], width: u32, height: u32) -> Result<()> {
    let img = render(tracks, width, height)?;
    img.save(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pano_box::PanoBox;

    fn track(frame: u64, id: u64, cx: f64) -> TrackOutput {
        TrackOutput {
            frame,
            id,
            bbox: PanoBox::from_center(cx, 50.0, 10.0, 20.0, 1.0, 200.0).unwrap(),
        }
    }

    #[test]
    fn draws_path_pixels() {
        let img = render(&[track(0, 1, 20.0), track(1, 1, 60.0)], 200, 100).unwrap();
        assert_eq!(*img.get_pixel(40, 50), id_color(1));
        assert_eq!(*img.get_pixel(100, 10), BACKGROUND);
    }

    #[test]
    fn no_line_across_seam() {
        let img = render(&[track(0, 1, 195.0), track(1, 1, 5.0)], 200, 100).unwrap();
        assert_eq!(*img.get_pixel(100, 50), BACKGROUND);
        assert_eq!(*img.get_pixel(5, 50), id_color(1));
    }

    #[test]
    fn colors_differ() {
        assert_ne!(id_color(1), id_color(2));
        assert_eq!(id_color(5), id_color(5));
    }

    #[test]
    fn png_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        write_png(&p, &[track(0, 1, 20.0)], 200, 100).unwrap();
        let back = image::open(&p).unwrap();
        assert_eq!((back.width(), back.height()), (200, 100));
    }
}

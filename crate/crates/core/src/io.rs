//! Text and binary file formats: detections, point clouds, calibration and
//! MOT-style track files.
//!
//! Text records hold one entry per line. Fields are separated either by
//! commas or by whitespace (not both). Blank lines and lines starting with
//! `#` are ignored. Every other malformed line is an error that names the
//! file and line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::detection::{Detection, Embedding, Location};
use crate::error::{Error, Result};
use crate::eval::FrameAnnotations;
use crate::fusion::{Calibration, PointCloud};
use crate::geometry::{slice_to_pano, SliceBox, SliceLayout};
use crate::pano_box::PanoBox;
use crate::tracker::TrackOutput;

/// Detections grouped by frame.
pub type FrameDetections = BTreeMap<u64, Vec<Detection>>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Line<'a> {
    path: &'a Path,
    number: usize,
    fields: Vec<&'a str>,
}

impl Line<'_> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.display().to_string(),
            line: self.number,
            msg: msg.into(),
        }
    }

    fn real(&self, i: usize) -> Result<f64> {
        let s = self.fields[i];
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(format!("field {} ({s:?}) is not a finite number", i + 1))),
        }
    }

    fn integer(&self, i: usize) -> Result<u64> {
        let s = self.fields[i];
        s.parse::<u64>()
            .map_err(|_| self.error(format!("field {} ({s:?}) is not a nonnegative integer", i + 1)))
    }

    fn reals(&self, from: usize) -> Result<Vec<f64>> {
        (from..self.fields.len()).map(|i| self.real(i)).collect()
    }

    fn expect_len(&self, n: usize, what: &str) -> Result<()> {
        if self.fields.len() == n {
            Ok(())
        } else {
            Err(self.error(format!("expected {n} fields ({what}), got {}", self.fields.len())))
        }
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.error(e.to_string()))
    }
}

fn records<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Line<'a>> {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let fields = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        Some(Line {
            path,
            number: i + 1,
            fields,
        })
    })
}

/// Parse `frame, x, y, w, h, score, e_1 … e_D` records.
pub fn parse_detections(path: &Path, text: &str, pano_width: f64, dim: usize) -> Result<FrameDetections> {
    let mut out = FrameDetections::new();
    for line in records(path, text) {
        if line.fields.len() != 6 + dim {
            return Err(line.error(format!(
                "expected 6 fields and {dim} embedding values, got {} fields",
                line.fields.len()
            )));
        }
        let frame = line.integer(0)?;
        let bbox = line.wrap(PanoBox::new(
            line.real(1)?,
            line.real(2)?,
            line.real(3)?,
            line.real(4)?,
            line.real(5)?,
            pano_width,
        ))?;
        let emb = line.wrap(Embedding::new(line.reals(6)?))?;
        out.entry(frame)
            .or_default()
            .push(line.wrap(Detection::new(bbox, emb, None, frame))?);
    }
    Ok(out)
}

pub fn load_detections(path: &Path, pano_width: f64, dim: usize) -> Result<FrameDetections> {
    parse_detections(path, &read_text(path)?, pano_width, dim)
}

/// Parse slice-local `frame, slice, x, y, w, h, score, e_1 … e_D` records
/// and map every box into panorama coordinates.
pub fn load_slice_detections(path: &Path, layout: &SliceLayout, dim: usize) -> Result<BTreeMap<u64, Vec<Vec<Detection>>>> {
    let text = read_text(path)?;
    let width = layout.pano_width() as f64;
    let mut out: BTreeMap<u64, Vec<Vec<Detection>>> = BTreeMap::new();
    for line in records(path, &text) {
        if line.fields.len() != 7 + dim {
            return Err(line.error(format!(
                "expected 7 fields and {dim} embedding values, got {} fields",
                line.fields.len()
            )));
        }
        let frame = line.integer(0)?;
        let slice = line.integer(1)? as usize;
        let local = SliceBox {
            x: line.real(2)?,
            y: line.real(3)?,
            w: line.real(4)?,
            h: line.real(5)?,
            score: line.real(6)?,
        };
        let bbox = line.wrap(slice_to_pano(&local, slice, layout))?;
        debug_assert_eq!(bbox.pano_width(), width);
        let emb = line.wrap(Embedding::new(line.reals(7)?))?;
        let slices = out
            .entry(frame)
            .or_insert_with(|| vec![Vec::new(); layout.n_slices()]);
        slices[slice].push(line.wrap(Detection::new(bbox, emb, None, frame))?);
    }
    Ok(out)
}

pub fn format_detections<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> String {
    let mut s = String::new();
    for d in dets {
        let b = &d.bbox;
        let _ = write!(s, "{},{},{},{},{},{}", d.frame, b.x(), b.y(), b.w(), b.h(), b.score());
        for v in d.embedding.as_slice() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_detections<'a>(path: &Path, dets: impl IntoIterator<Item = &'a Detection>) -> Result<()> {
    write_text(path, &format_detections(dets))
}

/// Decode little-endian `f32` `(x, y, z)` triples.
pub fn decode_pointcloud(path: &Path, bytes: &[u8], frame: u64) -> Result<PointCloud> {
    if bytes.len() % 12 != 0 {
        return Err(Error::TruncatedCloud {
            path: path.display().to_string(),
            len: bytes.len(),
        });
    }
    let points = bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
            Location::new(f(0), f(4), f(8))
        })
        .collect();
    PointCloud::new(frame, points)
}

pub fn encode_pointcloud(cloud: &PointCloud) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(cloud.len() * 12);
    for p in cloud.points() {
        for c in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    bytes
}

/// Load a `.bin` cloud, or a `.txt` cloud with one `x y z` triple per line.
pub fn load_pointcloud(path: &Path, frame: u64) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "txt") {
        let text = read_text(path)?;
        let mut points = Vec::new();
        for line in records(path, &text) {
            line.expect_len(3, "x y z")?;
            points.push(Location::new(line.real(0)?, line.real(1)?, line.real(2)?));
        }
        return PointCloud::new(frame, points);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pointcloud(path, &bytes, frame)
}

pub fn write_pointcloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_pointcloud(cloud)).map_err(|e| Error::io(path, e))
}

/// File name of the cloud for `frame` inside a cloud directory.
pub fn cloud_path(dir: &Path, frame: u64) -> PathBuf {
    dir.join(format!("{frame:06}.bin"))
}

/// 12 row-major matrix entries, then width and height.
pub fn parse_calibration(path: &Path, text: &str) -> Result<Calibration> {
    let mut values = Vec::with_capacity(14);
    let mut last_line = 0;
    for line in records(path, text) {
        values.extend(line.reals(0)?);
        last_line = line.number;
    }
    let err = |msg: String| Error::Parse {
        path: path.display().to_string(),
        line: last_line,
        msg,
    };
    if values.len() != 14 {
        return Err(err(format!("expected 14 numbers, got {}", values.len())));
    }
    Calibration::from_row_slice(&values[..12], values[12], values[13]).map_err(|e| err(e.to_string()))
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    parse_calibration(path, &read_text(path)?)
}

pub fn format_calibration(calib: &Calibration) -> String {
    let m = calib.matrix();
    let mut s = String::new();
    for r in 0..3 {
        let row: Vec<String> = (0..4).map(|c| m[(r, c)].to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    let _ = writeln!(s, "{} {}", calib.width(), calib.height());
    s
}

pub fn write_calibration(path: &Path, calib: &Calibration) -> Result<()> {
    write_text(path, &format_calibration(calib))
}

/// `frame,id,x,y,w,h,score,-1,-1,-1`, sorted by frame then id.
pub fn format_tracks(tracks: &[TrackOutput]) -> String {
    let mut sorted: Vec<&TrackOutput> = tracks.iter().collect();
    sorted.sort_by_key(|t| (t.frame, t.id));
    let mut s = String::new();
    for t in sorted {
        let b = &t.bbox;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},-1,-1,-1",
            t.frame,
            t.id,
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            b.score()
        );
    }
    s
}

pub fn write_tracks(path: &Path, tracks: &[TrackOutput]) -> Result<()> {
    write_text(path, &format_tracks(tracks))
}

pub fn parse_tracks(path: &Path, text: &str, pano_width: f64) -> Result<Vec<TrackOutput>> {
    let mut out = Vec::new();
    for line in records(path, text) {
        line.expect_len(10, "frame,id,x,y,w,h,score,-1,-1,-1")?;
        let bbox = line.wrap(PanoBox::new(
            line.real(2)?,
            line.real(3)?,
            line.real(4)?,
            line.real(5)?,
            line.real(6)?,
            pano_width,
        ))?;
        out.push(TrackOutput {
            frame: line.integer(0)?,
            id: line.integer(1)?,
            bbox,
        });
    }
    Ok(out)
}

pub fn read_tracks(path: &Path, pano_width: f64) -> Result<Vec<TrackOutput>> {
    parse_tracks(path, &read_text(path)?, pano_width)
}

/// Track file as annotations. Duplicate ids within a frame are errors.
pub fn read_annotations(path: &Path, pano_width: f64) -> Result<FrameAnnotations> {
    FrameAnnotations::from_tracks(&read_tracks(path, pano_width)?)
}

pub fn write_annotations(path: &Path, ann: &FrameAnnotations) -> Result<()> {
    let tracks: Vec<TrackOutput> = ann
        .frames()
        .flat_map(|(frame, entries)| {
            entries.iter().map(move |(id, bbox)| TrackOutput {
                frame,
                id: *id,
                bbox: *bbox,
            })
        })
        .collect();
    write_tracks(path, &tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: &str = "test.txt";

    fn emb_fields(dim: usize) -> String {
        let mut v = vec!["0"; dim];
        v[0] = "1";
        v.join(",")
    }

    #[test]
    fn empty_detection_file() {
        let d = parse_detections(Path::new(P), "", 100.0, 4).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn one_detection() {
        let text = format!("3,10,20,5,6,0.9,{}\n", emb_fields(4));
        let d = parse_detections(Path::new(P), &text, 100.0, 4).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&3].len(), 1);
        assert_eq!(d[&3][0].bbox.w(), 5.0);
    }

    #[test]
    fn whitespace_separated() {
        let text = "# header\n\n3 10 20 5 6 0.9 0 1\n";
        let d = parse_detections(Path::new(P), text, 100.0, 2).unwrap();
        assert_eq!(d[&3][0].embedding.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn short_embedding_reports_line() {
        let text = format!("0,1,1,1,1,1,{}\n0,1,1,1,1,1,{}\n", emb_fields(4), emb_fields(3));
        match parse_detections(Path::new(P), &text, 100.0, 4) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "0,1,1,1,1,1.5,1,0\n",  // score
            "0,100,1,1,1,1,1,0\n",  // x outside panorama
            "0,1,1,1,1,1,2,0\n",    // not unit norm
            "x,1,1,1,1,1,1,0\n",    // frame
            "0,1,1,,1,1,1,0\n",     // empty field
            "0,1,1,nan,1,1,1,0\n",  // non-finite
        ] {
            assert!(parse_detections(Path::new(P), text, 100.0, 2).is_err(), "{text}");
        }
    }

    #[test]
    fn cloud_lengths() {
        let p = Path::new("c.bin");
        assert!(decode_pointcloud(p, &[], 0).unwrap().is_empty());
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = decode_pointcloud(p, &bytes, 0).unwrap();
        assert_eq!(c.points(), &[Location::new(1.0, 2.0, 3.0)]);
        bytes.push(0);
        assert!(matches!(
            decode_pointcloud(p, &bytes, 0),
            Err(Error::TruncatedCloud { len: 13, .. })
        ));
    }

    #[test]
    fn calibration_round_trip() {
        let c = Calibration::from_row_slice(
            &[2.0, 0.0, 0.5, 1.0, 0.0, 3.0, 0.25, 0.0, 0.0, 0.0, 1.0, 0.0],
            640.0,
            320.0,
        )
        .unwrap();
        let text = format_calibration(&c);
        assert_eq!(parse_calibration(Path::new(P), &text).unwrap(), c);
        assert!(parse_calibration(Path::new(P), "1 2 3").is_err());
    }

    #[test]
    fn tracks_sorted_and_round_trip() {
        let b = |x| PanoBox::new(x, 1.0, 30.0, 2.0, 0.5, 100.0).unwrap();
        let tracks = vec![
            TrackOutput { frame: 2, id: 1, bbox: b(1.0) },
            TrackOutput { frame: 1, id: 5, bbox: b(90.0) },
            TrackOutput { frame: 1, id: 2, bbox: b(0.1 + 0.2) },
        ];
        let text = format_tracks(&tracks);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("1,2,"));
        assert!(lines[1].starts_with("1,5,90,"));
        assert!(lines[2].ends_with(",-1,-1,-1"));
        let back = parse_tracks(Path::new(P), &text, 100.0).unwrap();
        assert_eq!(back.len(), 3);
        assert!(back.iter().any(|t| t.bbox == b(0.1 + 0.2)));
        assert_eq!(format_tracks(&back), text);
    }

    #[test]
    fn slice_local_boxes_move_to_panorama() {
        let layout = crate::geometry::make_layout(1000, 2, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("slices.txt");
        std::fs::write(&p, "4 1 10 20 30 40 0.9 1 0\n4 0 590 20 30 40 0.8 0 1\n").unwrap();
        let d = load_slice_detections(&p, &layout, 2).unwrap();
        assert_eq!(d[&4].len(), 2);
        assert_eq!(d[&4][1][0].bbox.x(), 510.0);
        assert_eq!(d[&4][0][0].bbox.x(), 590.0);
        std::fs::write(&p, "4 2 10 20 30 40 0.9 1 0\n").unwrap();
        assert!(load_slice_detections(&p, &layout, 2).is_err());
        std::fs::write(&p, "4 0 610 20 30 40 0.9 1 0\n").unwrap();
        assert!(load_slice_detections(&p, &layout, 2).is_err());
    }

    #[test]
    fn no_tracks_empty_file() {
        assert_eq!(format_tracks(&[]), "");
    }
}

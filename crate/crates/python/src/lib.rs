//! Python bindings for the panotrack library.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use panotrack::association::{brute_force_matching, solve_matching_with, MatchObjective};
use panotrack::detection::{Detection, Embedding, Location};
use panotrack::eval::FrameAnnotations;
use panotrack::fusion::DepthBand;
use panotrack::geometry::{NmsMode, NmsParams, SliceLayout};
use panotrack::matrix::{AffinityMatrix, MatchingMatrix};
use panotrack::pano_box::PanoBox;
use panotrack::synthetic::{Scenario, ScenarioSpec};
use panotrack::tracker::{TrackOutput, TrackerConfig};

fn value_error(e: panotrack::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Axis-aligned box on a panorama whose columns wrap around.
#[pyclass(name = "PanoBox", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPanoBox {
    inner: PanoBox,
}

#[pymethods]
impl PyPanoBox {
    #[new]
    #[pyo3(signature = (x, y, w, h, pano_width, score = 1.0))]
    fn new(x: f64, y: f64, w: f64, h: f64, pano_width: f64, score: f64) -> PyResult<Self> {
        PanoBox::new(x, y, w, h, score, pano_width)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    #[staticmethod]
    #[pyo3(signature = (cx, cy, w, h, pano_width, score = 1.0))]
    fn from_center(cx: f64, cy: f64, w: f64, h: f64, pano_width: f64, score: f64) -> PyResult<Self> {
        PanoBox::from_center(cx, cy, w, h, score, pano_width)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x()
    }
    #[getter]
    fn y(&self) -> f64 {
        self.inner.y()
    }
    #[getter]
    fn w(&self) -> f64 {
        self.inner.w()
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }
    #[getter]
    fn score(&self) -> f64 {
        self.inner.score()
    }
    #[getter]
    fn pano_width(&self) -> f64 {
        self.inner.pano_width()
    }
    #[getter]
    fn center_x(&self) -> f64 {
        self.inner.center_x()
    }
    #[getter]
    fn wraps(&self) -> bool {
        self.inner.wraps()
    }

    /// Column intervals `[(start, end), ...]` covered by the box.
    fn columns(&self) -> Vec<(f64, f64)> {
        self.inner.columns().spans().map(|s| (s.start, s.end)).collect()
    }

    fn shifted(&self, delta: f64) -> Self {
        Self {
            inner: self.inner.shifted(delta),
        }
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!(
            "PanoBox(x={}, y={}, w={}, h={}, pano_width={}, score={})",
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            b.pano_width(),
            b.score()
        )
    }
}

#[pyfunction]
fn circular_iou(a: PyRef<'_, PyPanoBox>, b: PyRef<'_, PyPanoBox>) -> PyResult<f64> {
    panotrack::geometry::circular_iou(&a.inner, &b.inner).map_err(value_error)
}

#[pyclass(name = "SliceLayout", frozen)]
pub struct PySliceLayout {
    inner: SliceLayout,
}

#[pymethods]
impl PySliceLayout {
    #[getter]
    fn slice_width(&self) -> u32 {
        self.inner.slice_width()
    }
    #[getter]
    fn offsets(&self) -> Vec<u32> {
        self.inner.offsets().to_vec()
    }
    #[getter]
    fn pano_width(&self) -> u32 {
        self.inner.pano_width()
    }

    fn __repr__(&self) -> String {
        format!(
            "SliceLayout(pano_width={}, slice_width={}, offsets={:?})",
            self.inner.pano_width(),
            self.inner.slice_width(),
            self.inner.offsets()
        )
    }
}

#[pyfunction]
fn make_layout(width: u32, n_slices: usize, overlap: f64) -> PyResult<PySliceLayout> {
    panotrack::geometry::make_layout(width, n_slices, overlap)
        .map(|inner| PySliceLayout { inner })
        .map_err(value_error)
}

fn nms_mode(name: &str) -> PyResult<NmsMode> {
    match name {
        "hard" => Ok(NmsMode::Hard),
        "soft" => Ok(NmsMode::Soft),
        other => Err(PyValueError::new_err(format!("unknown NMS mode {other:?}"))),
    }
}

/// Merge per-slice box lists into one panorama list.
#[pyfunction]
#[pyo3(signature = (per_slice, mode = "hard", iou_threshold = 0.5, sigma = 0.5, score_floor = 0.05))]
fn nms(
    per_slice: Vec<Vec<PyRef<'_, PyPanoBox>>>,
    mode: &str,
    iou_threshold: f64,
    sigma: f64,
    score_floor: f64,
) -> PyResult<Vec<PyPanoBox>> {
    let params = NmsParams {
        mode: nms_mode(mode)?,
        iou_threshold,
        sigma,
        score_floor,
    };
    let boxes: Vec<Vec<PanoBox>> = per_slice
        .iter()
        .map(|s| s.iter().map(|b| b.inner).collect())
        .collect();
    panotrack::geometry::nms_merge(&boxes, &params)
        .map(|v| v.into_iter().map(|inner| PyPanoBox { inner }).collect())
        .map_err(value_error)
}

fn affinity(rows: &[Vec<f64>]) -> PyResult<AffinityMatrix> {
    if rows.is_empty() {
        return Ok(AffinityMatrix::zeros(0, 0));
    }
    AffinityMatrix::from_rows(rows).map_err(value_error)
}

fn objective(name: &str) -> PyResult<MatchObjective> {
    match name {
        "l2" => Ok(MatchObjective::L2),
        "linear-sum" => Ok(MatchObjective::LinearSum),
        other => Err(PyValueError::new_err(format!("unknown objective {other:?}"))),
    }
}

/// Optimal one-to-one matching of rows to columns; returns `(row, col)`
/// pairs.
#[pyfunction]
#[pyo3(signature = (matrix, objective = "l2"))]
fn solve_matching(matrix: Vec<Vec<f64>>, objective: &str) -> PyResult<Vec<(usize, usize)>> {
    let a = affinity(&matrix)?;
    let x = solve_matching_with(&a, self::objective(objective)?).map_err(value_error)?;
    Ok(x.pairs().to_vec())
}

/// Exhaustive search for the best matching; returns `(objective, pairs)`.
#[pyfunction(name = "brute_force_matching")]
fn py_brute_force_matching(matrix: Vec<Vec<f64>>) -> PyResult<(f64, Vec<(usize, usize)>)> {
    let a = affinity(&matrix)?;
    let (best, x) = brute_force_matching(&a).map_err(value_error)?;
    Ok((best, x.pairs().to_vec()))
}

/// `‖A ⊙ X‖₂` of a set of `(row, col)` pairs.
#[pyfunction]
fn matching_objective(matrix: Vec<Vec<f64>>, pairs: Vec<(usize, usize)>) -> PyResult<f64> {
    let a = affinity(&matrix)?;
    let x = MatchingMatrix::from_pairs(a.rows(), a.cols(), pairs).map_err(value_error)?;
    Ok(x.objective(&a))
}

#[pyclass(name = "Detection", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDetection {
    inner: Detection,
}

#[pymethods]
impl PyDetection {
    #[new]
    #[pyo3(signature = (bbox, embedding, frame, location = None))]
    fn new(
        bbox: PyRef<'_, PyPanoBox>,
        embedding: Vec<f64>,
        frame: u64,
        location: Option<(f64, f64, f64)>,
    ) -> PyResult<Self> {
        let emb = Embedding::normalized(embedding).map_err(value_error)?;
        let loc = location.map(|(x, y, z)| Location::new(x, y, z));
        Detection::new(bbox.inner, emb, loc, frame)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    #[getter]
    fn bbox(&self) -> PyPanoBox {
        PyPanoBox {
            inner: self.inner.bbox,
        }
    }
    #[getter]
    fn frame(&self) -> u64 {
        self.inner.frame
    }
    #[getter]
    fn embedding(&self) -> Vec<f64> {
        self.inner.embedding.as_slice().to_vec()
    }
    #[getter]
    fn location(&self) -> Option<(f64, f64, f64)> {
        self.inner.location.map(|l| (l.x, l.y, l.z))
    }
}

type TrackTuple = (u64, u64, PyPanoBox);

fn track_tuple(t: &TrackOutput) -> TrackTuple {
    (t.frame, t.id, PyPanoBox { inner: t.bbox })
}

#[pyclass(name = "Tracker")]
pub struct PyTracker {
    inner: panotrack::tracker::Tracker,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (confirm_hits = 3, max_misses = 30, tentative_max_misses = 0, gate = 0.3, objective = "l2"))]
    fn new(
        confirm_hits: u32,
        max_misses: u32,
        tentative_max_misses: u32,
        gate: f64,
        objective: &str,
    ) -> PyResult<Self> {
        let mut cfg = TrackerConfig {
            confirm_hits,
            max_misses,
            tentative_max_misses,
            objective: self::objective(objective)?,
            ..TrackerConfig::default()
        };
        cfg.affinity.gate = gate;
        panotrack::tracker::Tracker::new(cfg)
            .map(|inner| Self { inner })
            .map_err(value_error)
    }

    /// Feed one frame; returns confirmed `(frame, id, box)` tuples.
    fn step(&mut self, frame: u64, detections: Vec<PyRef<'_, PyDetection>>) -> PyResult<Vec<TrackTuple>> {
        let dets: Vec<Detection> = detections.iter().map(|d| d.inner.clone()).collect();
        let out = self.inner.step(frame, &dets).map_err(value_error)?;
        Ok(out.iter().map(track_tuple).collect())
    }

    #[getter]
    fn active(&self) -> usize {
        self.inner.trajectories().len()
    }
}

fn annotations(tracks: &[(u64, u64, PyRef<'_, PyPanoBox>)]) -> PyResult<FrameAnnotations> {
    let mut ann = FrameAnnotations::new();
    for (frame, id, b) in tracks {
        ann.insert(*frame, *id, b.inner).map_err(value_error)?;
    }
    Ok(ann)
}

/// CLEAR-MOT metrics of `hyp` against `gt`, both lists of
/// `(frame, id, box)`.
#[pyfunction]
#[pyo3(signature = (gt, hyp, iou_match = 0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    gt: Vec<(u64, u64, PyRef<'py, PyPanoBox>)>,
    hyp: Vec<(u64, u64, PyRef<'py, PyPanoBox>)>,
    iou_match: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = panotrack::eval::evaluate(&annotations(&gt)?, &annotations(&hyp)?, iou_match)
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("mota", m.mota)?;
    d.set_item("ids", m.ids)?;
    d.set_item("fp", m.fp)?;
    d.set_item("fn", m.fn_)?;
    d.set_item("gt", m.gt_count)?;
    Ok(d)
}

#[pyclass(name = "Scenario", frozen)]
pub struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[getter]
    fn n_frames(&self) -> u64 {
        self.inner.spec.n_frames
    }

    fn detections(&self, frame: usize) -> PyResult<Vec<PyDetection>> {
        let dets = self
            .inner
            .detections
            .get(frame)
            .ok_or_else(|| PyValueError::new_err(format!("no frame {frame}")))?;
        Ok(dets.iter().map(|d| PyDetection { inner: d.clone() }).collect())
    }

    /// Ground truth as `(frame, id, box)` tuples.
    fn ground_truth(&self) -> Vec<TrackTuple> {
        self.inner
            .truth
            .iter()
            .enumerate()
            .flat_map(|(f, states)| {
                states.iter().map(move |s| (f as u64, s.id, PyPanoBox { inner: s.bbox }))
            })
            .collect()
    }

    /// Run the full pipeline, including LiDAR fusion, with default settings.
    fn track(&self) -> PyResult<Vec<TrackTuple>> {
        let out = panotrack::pipeline::track_scenario(&self.inner, Some(DepthBand::default()), TrackerConfig::default())
            .map_err(value_error)?;
        Ok(out.iter().map(track_tuple).collect())
    }
}

/// Generate a synthetic scenario from a TOML scenario description.
#[pyfunction]
#[pyo3(signature = (spec_toml = ""))]
fn generate(spec_toml: &str) -> PyResult<PyScenario> {
    let spec: ScenarioSpec = toml::from_str(spec_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    panotrack::synthetic::generate(&spec)
        .map(|inner| PyScenario { inner })
        .map_err(value_error)
}

#[pymodule]
fn panotrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanoBox>()?;
    m.add_class::<PySliceLayout>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyTracker>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(circular_iou, m)?)?;
    m.add_function(wrap_pyfunction!(make_layout, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(solve_matching, m)?)?;
    m.add_function(wrap_pyfunction!(py_brute_force_matching, m)?)?;
    m.add_function(wrap_pyfunction!(matching_objective, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}

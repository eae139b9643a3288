//! Python bindings for the cinetrack pipeline.
//!
//! Images and masks cross the boundary as flat row-major lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cinetrack_core as core;
use cinetrack_core::propagation::{CellTarget, SuperpixelParams};
use cinetrack_core::superpixels::{
    DEFAULT_CELL_AREA, DEFAULT_COMPACTNESS, DEFAULT_CONVERGENCE_TOL, DEFAULT_MAX_ITERATIONS,
};

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "GrayFrame", module = "cinetrack", frozen)]
struct PyGrayFrame {
    inner: core::GrayFrame,
}

#[pymethods]
impl PyGrayFrame {
    /// Intensities must already lie in `[0, 1]`.
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<Self> {
        core::GrayFrame::new(width, height, pixels)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Min-max normalizes raw intensities into a frame.
    #[staticmethod]
    fn normalized(width: usize, height: usize, raw: Vec<f64>) -> PyResult<Self> {
        core::normalize_intensity(width, height, &raw)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        check_xy(x, y, self.inner.dims())?;
        Ok(self.inner.get(x, y))
    }

    fn smoothed(&self, sigma: f64) -> PyResult<Self> {
        core::filters::gaussian_smooth(&self.inner, sigma)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("GrayFrame({}x{})", self.inner.width(), self.inner.height())
    }
}

#[pyclass(name = "LabelMask", module = "cinetrack", frozen)]
struct PyLabelMask {
    inner: core::LabelMask,
}

#[pymethods]
impl PyLabelMask {
    #[new]
    fn new(width: usize, height: usize, labels: Vec<u8>) -> PyResult<Self> {
        core::LabelMask::new(width, height, labels)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<u8> {
        check_xy(x, y, self.inner.dims())?;
        Ok(self.inner.get(x, y))
    }

    fn count(&self, label: u8) -> PyResult<usize> {
        Ok(self
            .inner
            .count(core::Label::from_u8(label).map_err(to_py)?))
    }

    fn one_hot(&self, label: u8) -> PyResult<Vec<u8>> {
        self.inner
            .one_hot(label)
            .map(|b| b.bits().to_vec())
            .map_err(to_py)
    }

    fn median_filtered(&self, kernel: usize) -> PyResult<Self> {
        core::filters::median_filter_mask(&self.inner, kernel)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("LabelMask({}x{})", self.inner.width(), self.inner.height())
    }
}

fn check_xy(x: usize, y: usize, (w, h): (usize, usize)) -> PyResult<()> {
    if x >= w || y >= h {
        return Err(PyValueError::new_err(format!(
            "pixel ({x}, {y}) outside {w}x{h}"
        )));
    }
    Ok(())
}

#[pyclass(name = "PipelineConfig", module = "cinetrack", frozen)]
struct PyPipelineConfig {
    inner: core::PipelineConfig,
}

#[pymethods]
impl PyPipelineConfig {
    /// `cells` overrides `cell_area` when given.
    #[new]
    #[pyo3(signature = (
        sigma = core::propagation::DEFAULT_GAUSSIAN_SIGMA,
        kernel = core::propagation::DEFAULT_MEDIAN_KERNEL,
        cell_area = DEFAULT_CELL_AREA,
        cells = None,
        compactness = DEFAULT_COMPACTNESS,
        max_iterations = DEFAULT_MAX_ITERATIONS,
    ))]
    fn new(
        sigma: f64,
        kernel: usize,
        cell_area: f64,
        cells: Option<usize>,
        compactness: f64,
        max_iterations: usize,
    ) -> PyResult<Self> {
        let inner = core::PipelineConfig {
            gaussian_sigma: sigma,
            median_kernel: kernel,
            superpixel: SuperpixelParams {
                cells: cells.map_or(CellTarget::MeanArea(cell_area), CellTarget::Absolute),
                compactness,
                max_iterations,
                convergence_tol: DEFAULT_CONVERGENCE_TOL,
            },
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.gaussian_sigma
    }

    #[getter]
    fn kernel(&self) -> usize {
        self.inner.median_kernel
    }

    #[getter]
    fn compactness(&self) -> f64 {
        self.inner.superpixel.compactness
    }
}

fn config_or_default(config: Option<PyRef<'_, PyPipelineConfig>>) -> core::PipelineConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// Superpixel cell index per pixel, row-major, and the cell count.
#[pyfunction]
#[pyo3(signature = (frame, cells, compactness = DEFAULT_COMPACTNESS))]
fn slic(
    frame: PyRef<'_, PyGrayFrame>,
    cells: usize,
    compactness: f64,
) -> PyResult<(Vec<u32>, usize)> {
    let config = core::SuperpixelConfig {
        compactness,
        ..core::SuperpixelConfig::new(cells)
    };
    let map = core::slic_segment(&frame.inner, &config).map_err(to_py)?;
    Ok((map.cells().to_vec(), map.cell_count()))
}

/// Majority label of `mask` over `(x, y)` pixels, ties to the smallest.
#[pyfunction]
fn majority_label(mask: PyRef<'_, PyLabelMask>, pixels: Vec<(usize, usize)>) -> PyResult<u8> {
    core::majority_label(&mask.inner, &pixels)
        .map(core::Label::value)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (prev_mask, frame, config = None))]
fn propagate_step(
    prev_mask: PyRef<'_, PyLabelMask>,
    frame: PyRef<'_, PyGrayFrame>,
    config: Option<PyRef<'_, PyPipelineConfig>>,
) -> PyResult<PyLabelMask> {
    let config = config_or_default(config);
    core::propagate_step(&prev_mask.inner, &frame.inner, &config)
        .map(|inner| PyLabelMask { inner })
        .map_err(to_py)
}

/// Forward and backward frame indices from `ed` to `es`.
#[pyfunction]
fn build_paths(frame_count: usize, ed: usize, es: usize) -> PyResult<(Vec<usize>, Vec<usize>)> {
    core::build_paths(frame_count, ed, es).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, kernel = core::propagation::DEFAULT_MEDIAN_KERNEL))]
fn fuse_masks(
    a: PyRef<'_, PyLabelMask>,
    b: PyRef<'_, PyLabelMask>,
    kernel: usize,
) -> PyResult<PyLabelMask> {
    core::fuse_masks(&a.inner, &b.inner, kernel)
        .map(|inner| PyLabelMask { inner })
        .map_err(to_py)
}

#[pyfunction]
fn dice(a: PyRef<'_, PyLabelMask>, b: PyRef<'_, PyLabelMask>, label: u8) -> PyResult<f64> {
    core::dice(&a.inner, &b.inner, label).map_err(to_py)
}

/// Bidirectional tracking of `ed_mask` from frame `ed` to frame `es`.
///
/// Returns a dict with `forward_path`, `backward_path`, `forward_es`,
/// `backward_es`, `fused_es` and, when `es_truth` is given, `dice`
/// (`{"rv", "myo", "lv"}`).
#[pyfunction]
#[pyo3(signature = (frames, ed, es, ed_mask, es_truth = None, config = None))]
fn track<'py>(
    py: Python<'py>,
    frames: Vec<PyRef<'py, PyGrayFrame>>,
    ed: usize,
    es: usize,
    ed_mask: PyRef<'py, PyLabelMask>,
    es_truth: Option<PyRef<'py, PyLabelMask>>,
    config: Option<PyRef<'py, PyPipelineConfig>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = config_or_default(config);
    let frames: Vec<core::GrayFrame> = frames.iter().map(|f| f.inner.clone()).collect();
    let seq = core::CineSequence::new(
        frames,
        ed,
        es,
        ed_mask.inner.clone(),
        es_truth.map(|m| m.inner.clone()),
    )
    .map_err(to_py)?;
    let result = py
        .detach(|| core::track_bidirectional(&seq, &config))
        .map_err(to_py)?;
    sequence_result(py, result)
}

fn sequence_result(py: Python<'_>, r: core::TrackResult) -> PyResult<Bound<'_, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("forward_path", &r.forward_path)?;
    out.set_item("backward_path", &r.backward_path)?;
    out.set_item(
        "forward_es",
        PyLabelMask {
            inner: r.forward_es().clone(),
        },
    )?;
    out.set_item(
        "backward_es",
        PyLabelMask {
            inner: r.backward_es().clone(),
        },
    )?;
    if let Some(d) = r.dice_per_structure {
        let dice = PyDict::new(py);
        dice.set_item("rv", d.rv)?;
        dice.set_item("myo", d.myo)?;
        dice.set_item("lv", d.lv)?;
        out.set_item("dice", dice)?;
    }
    out.set_item("fused_es", PyLabelMask { inner: r.fused_es })?;
    Ok(out)
}

type PhantomTuple = (Vec<PyGrayFrame>, Vec<PyLabelMask>, usize, usize);

fn phantom_tuple(p: core::phantom::Phantom) -> PhantomTuple {
    let (ed, es) = (p.sequence.ed_index(), p.sequence.es_index());
    let frames = p
        .sequence
        .frames()
        .iter()
        .map(|f| PyGrayFrame { inner: f.clone() })
        .collect();
    let truth = p
        .truth
        .into_iter()
        .map(|inner| PyLabelMask { inner })
        .collect();
    (frames, truth, ed, es)
}

/// `(frames, truth, ed, es)` for a disk translating by `shift` per frame.
#[pyfunction]
#[pyo3(signature = (width = 64, height = 64, frames = 10, radius = 20.0, shift = (1.0, 0.0), noise = 0.05, seed = 0))]
fn moving_circle(
    width: usize,
    height: usize,
    frames: usize,
    radius: f64,
    shift: (f64, f64),
    noise: f64,
    seed: u64,
) -> PyResult<PhantomTuple> {
    use core::phantom::{CircleParams, PhantomSpec};
    if width < 2 || height < 2 {
        return Err(PyValueError::new_err("phantom canvas must be at least 2x2"));
    }
    let spec = PhantomSpec {
        noise_sigma: noise,
        seed,
        ..PhantomSpec::new(width, height, frames)
    };
    let circle = CircleParams::centered(&spec, radius, shift);
    core::phantom::moving_circle(&spec, &circle)
        .map(phantom_tuple)
        .map_err(to_py)
}

/// `(frames, truth, ed, es)` for a cyclically contracting annulus.
#[pyfunction]
#[pyo3(signature = (width = 96, height = 96, frames = 20, inner = 16.0, outer = 28.0, contraction = 0.3, noise = 0.05, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn beating_annulus(
    width: usize,
    height: usize,
    frames: usize,
    inner: f64,
    outer: f64,
    contraction: f64,
    noise: f64,
    seed: u64,
) -> PyResult<PhantomTuple> {
    use core::phantom::{AnnulusParams, PhantomSpec};
    if width < 2 || height < 2 {
        return Err(PyValueError::new_err("phantom canvas must be at least 2x2"));
    }
    let spec = PhantomSpec {
        noise_sigma: noise,
        seed,
        ..PhantomSpec::new(width, height, frames)
    };
    let params = AnnulusParams::centered(&spec, inner, outer, contraction);
    core::phantom::beating_annulus(&spec, &params)
        .map(phantom_tuple)
        .map_err(to_py)
}

/// Loads an ACDC-layout patient directory and tracks every slice.
///
/// Returns a dict with `id`, `group`, `ed_frame`, `es_frame` (1-based),
/// `dice` for the whole volume and `slices`, one tracking dict per slice.
#[pyfunction]
#[pyo3(signature = (path, config = None))]
fn track_patient<'py>(
    py: Python<'py>,
    path: &str,
    config: Option<PyRef<'py, PyPipelineConfig>>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = config_or_default(config);
    let patient = core::dataio::load_acdc_patient(path).map_err(to_py)?;
    let seqs = patient.sequences().map_err(to_py)?;
    let results = py
        .detach(|| core::tracking::track_slices(&seqs, &config))
        .map_err(to_py)?;
    let fused: Vec<core::LabelMask> = results.iter().map(|r| r.fused_es.clone()).collect();
    let d = core::metrics::volume_structure_dice(&fused, &patient.es_masks().map_err(to_py)?)
        .map_err(to_py)?;

    let out = PyDict::new(py);
    out.set_item("id", &patient.id)?;
    out.set_item("group", patient.group.as_str())?;
    out.set_item("ed_frame", patient.ed_frame)?;
    out.set_item("es_frame", patient.es_frame)?;
    let dice = PyDict::new(py);
    dice.set_item("rv", d.rv)?;
    dice.set_item("myo", d.myo)?;
    dice.set_item("lv", d.lv)?;
    out.set_item("dice", dice)?;
    let slices = results
        .into_iter()
        .map(|r| sequence_result(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("slices", slices)?;
    Ok(out)
}

#[pymodule]
fn cinetrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrayFrame>()?;
    m.add_class::<PyLabelMask>()?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_function(wrap_pyfunction!(slic, m)?)?;
    m.add_function(wrap_pyfunction!(majority_label, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_step, m)?)?;
    m.add_function(wrap_pyfunction!(build_paths, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_masks, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(moving_circle, m)?)?;
    m.add_function(wrap_pyfunction!(beating_annulus, m)?)?;
    m.add_function(wrap_pyfunction!(track_patient, m)?)?;
    Ok(())
}

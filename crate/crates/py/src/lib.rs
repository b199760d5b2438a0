//! Python view of the codec: images, priors, dictionaries, checkpoints and metrics.
//!
//! Images cross the boundary as flat channel-major float lists (`[3, H, W]`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use rfdc::bitstream::container::inspect as inspect_container;
use rfdc::dictionary::{load_dictionary, FeatureDictionary};
use rfdc::eval::{bd_metrics as bd, psnr as psnr_planes, RDCurve};
use rfdc::physical::{self, DepthMap, UnderwaterPriors};
use rfdc::codec::BackboneConfig;
use rfdc::rfd::{Ablation, RfdConfig, RfdModel};
use rfdc::{Error, Planes};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Image", module = "rfdc_py")]
#[derive(Clone)]
pub struct PyImage {
    inner: rfdc::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyImage { inner: rfdc::Image::new(height, width, data).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyImage { inner: rfdc::Image::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_png(path).map_err(err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.height(), self.inner.width())
    }
}

/// Degrades a clear image with uniform distance `depth`.
#[pyfunction]
fn degrade(image: &PyImage, alpha: [f64; 3], depth: f64, ambient: [f64; 3]) -> PyResult<PyImage> {
    let (h, w) = (image.inner.height(), image.inner.width());
    let d = DepthMap::constant(h, w, depth).map_err(err)?;
    let p = UnderwaterPriors::from_depth(alpha, d, ambient).map_err(err)?;
    Ok(PyImage { inner: physical::degrade(&image.inner, &p).map_err(err)? })
}

/// Restores with uniform transmission `t` and ambient light.
#[pyfunction]
fn restore(image: &PyImage, t: [f64; 3], ambient: [f64; 3]) -> PyResult<PyImage> {
    let p = UnderwaterPriors::uniform(image.inner.height(), image.inner.width(), t, ambient).map_err(err)?;
    Ok(PyImage { inner: physical::restore(&image.inner, &p).map_err(err)? })
}

/// Dark-channel priors: `{"A": [r, g, b], "T": flat [3, H, W] list, "height", "width"}`.
#[pyfunction]
fn estimate_priors<'py>(py: Python<'py>, image: &PyImage) -> PyResult<Bound<'py, PyDict>> {
    let p = physical::estimate_priors(&image.inner);
    let d = PyDict::new(py);
    d.set_item("A", p.ambient.to_vec())?;
    d.set_item("T", p.transmission.data.clone())?;
    d.set_item("height", p.height())?;
    d.set_item("width", p.width())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (a, b, peak = 1.0))]
fn psnr(a: &PyImage, b: &PyImage, peak: f64) -> PyResult<f64> {
    psnr_planes(a.inner.planes(), b.inner.planes(), peak).map_err(err)
}

/// `lambda * MSE + rate_bits / n_pixels` on flat lists.
#[pyfunction]
fn rd_loss(x: Vec<f64>, x_hat: Vec<f64>, rate_bits: f64, lmbda: f64, n_pixels: usize) -> PyResult<f64> {
    let as_planes = |v: Vec<f64>| Planes::new(1, v.len() / 3, v);
    let (a, b) = (as_planes(x).map_err(err)?, as_planes(x_hat).map_err(err)?);
    rfdc::training::rd_loss(&a, &b, rate_bits, lmbda, n_pixels).map_err(err)
}

/// BD metrics between two `[(bpp, psnr), ...]` lists.
#[pyfunction]
#[pyo3(signature = (curve, anchor, bpp_max = 0.1))]
fn bd_metrics<'py>(py: Python<'py>, curve: Vec<[f64; 2]>, anchor: Vec<[f64; 2]>, bpp_max: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = RDCurve::from_unsorted("curve", curve).map_err(err)?;
    let a = RDCurve::from_unsorted("anchor", anchor).map_err(err)?;
    let r = bd(&c, &a, bpp_max).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("bd_rate_percent", r.bd_rate_percent)?;
    d.set_item("bd_psnr_db", r.bd_psnr_db)?;
    Ok(d)
}

/// Bit breakdown of a container: bits_z, bits_W, bits_index, bpp, dims.
#[pyfunction]
fn inspect<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let r = inspect_container(data).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("bits_z", r.bits_z)?;
    d.set_item("bits_W", r.bits_w)?;
    d.set_item("bits_index", r.bits_index)?;
    d.set_item("bpp", r.bpp)?;
    d.set_item("dims", r.dims.to_vec())?;
    Ok(d)
}

#[pyclass(name = "Dictionary", module = "rfdc_py")]
pub struct PyDictionary {
    inner: FeatureDictionary,
}

#[pymethods]
impl PyDictionary {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDictionary { inner: load_dictionary(path).map_err(err)? })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    #[getter]
    fn scales(&self) -> Vec<usize> {
        self.inner.scale_list()
    }
}

#[pyclass(name = "Model", module = "rfdc_py")]
pub struct PyModel {
    inner: RfdModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel { inner: RfdModel::load(std::path::Path::new(path)).map_err(err)? })
    }

    /// Untrained reference-free codec with the small desk-scale widths.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn untrained(seed: u64) -> PyResult<Self> {
        let cfg = RfdConfig::baseline(BackboneConfig::toy());
        Ok(PyModel { inner: RfdModel::new(cfg, seed).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(err)
    }

    #[getter]
    fn lmbda(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn scales(&self) -> Vec<usize> {
        self.inner.config.scales.clone()
    }

    /// Same model with parts switched off.
    #[pyo3(signature = (no_usnb = false, no_rfvm = false, scales = None))]
    fn ablate(&self, no_usnb: bool, no_rfvm: bool, scales: Option<Vec<usize>>) -> PyResult<PyModel> {
        Ok(PyModel { inner: self.inner.with_ablation(&Ablation { no_usnb, no_rfvm, scales }).map_err(err)? })
    }

    #[pyo3(signature = (image, dictionary = None))]
    fn encode<'py>(&self, py: Python<'py>, image: &PyImage, dictionary: Option<&PyDictionary>) -> PyResult<Bound<'py, PyBytes>> {
        let enc = self.inner.encode(&image.inner, dictionary.map(|d| &d.inner)).map_err(err)?;
        Ok(PyBytes::new(py, &enc.bytes))
    }

    #[pyo3(signature = (data, dictionary = None))]
    fn decode(&self, data: &[u8], dictionary: Option<&PyDictionary>) -> PyResult<PyImage> {
        Ok(PyImage { inner: self.inner.decode(data, dictionary.map(|d| &d.inner)).map_err(err)? })
    }
}

#[pymodule]
fn rfdc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_priors, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(rd_loss, m)?)?;
    m.add_function(wrap_pyfunction!(bd_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(inspect, m)?)?;
    Ok(())
}

//! Python bindings: `import s5p_ssr`.

use std::path::PathBuf;

use numpy::{PyArray1, PyArray3, PyArrayMethods, PyReadonlyArray3, PyUntypedArrayMethods};
use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use s5p_ssr::cli::Command;
use s5p_ssr::losses::{ssl_total, EqCfg, SureCfg};
use s5p_ssr::models::{bicubic_upsample_array, count_params as core_count, predict, ArchId, ModelCfg, ModelParams};
use s5p_ssr::sensor::{BandId, BandSpec, BlurKernel, HyperCube, Space, DEFAULT_TRUNCATION};
use s5p_ssr::training::{infer_shr_tiled, Checkpoint, DEFAULT_OVERLAP, DEFAULT_TILE};
use s5p_ssr::{metrics, Array3, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn band(s: &str) -> PyResult<BandId> {
    s.parse().map_err(err)
}

fn arch(s: &str) -> PyResult<ArchId> {
    s.parse().map_err(err)
}

fn to_array(x: &PyReadonlyArray3<'_, f64>) -> PyResult<Array3> {
    let s = x.shape();
    let data: Vec<f64> = x.as_array().iter().copied().collect();
    Array3::from_vec(s[0], s[1], s[2], data).map_err(err)
}

fn to_numpy<'py>(py: Python<'py>, a: &Array3) -> PyResult<Bound<'py, PyArray3<f64>>> {
    let (c, h, w) = a.shape();
    PyArray1::from_vec(py, a.as_slice().to_vec()).reshape([c, h, w])
}

/// Band metadata from the shipped table.
#[pyclass(name = "BandSpec", frozen)]
struct PyBandSpec {
    inner: BandSpec,
}

#[pymethods]
impl PyBandSpec {
    #[new]
    fn new(band_id: &str) -> PyResult<Self> {
        Ok(PyBandSpec { inner: BandSpec::default_for(band(band_id)?) })
    }

    #[getter]
    fn band_id(&self) -> String {
        self.inner.band_id.to_string()
    }
    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }
    #[getter]
    fn snr_linear(&self) -> f64 {
        self.inner.snr_linear
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn blur_sigma(&self) -> (f64, f64) {
        (self.inner.blur_sigma_along, self.inner.blur_sigma_cross)
    }
    #[getter]
    fn scale(&self) -> usize {
        self.inner.scale
    }
    #[getter]
    fn lr_patch(&self) -> usize {
        self.inner.lr_patch
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "BandSpec({}, channels={}, snr_linear={}, mu={:e}, sigma={:e})",
            s.band_id, s.channels, s.snr_linear, s.mu, s.sigma
        )
    }
}

/// Anisotropic Gaussian blur followed by centre-phase subsampling.
#[pyclass(name = "Degradation", frozen)]
struct PyDegradation {
    inner: s5p_ssr::sensor::Degradation,
}

#[pymethods]
impl PyDegradation {
    #[new]
    #[pyo3(signature = (sigma_along=1.5, sigma_cross=1.0, scale=4))]
    fn new(sigma_along: f64, sigma_cross: f64, scale: usize) -> PyResult<Self> {
        let k = BlurKernel::new(sigma_along, sigma_cross, DEFAULT_TRUNCATION).map_err(err)?;
        Ok(PyDegradation { inner: s5p_ssr::sensor::Degradation::new(k, scale).map_err(err)? })
    }

    #[staticmethod]
    fn for_band(band_id: &str) -> PyResult<Self> {
        let spec = BandSpec::default_for(band(band_id)?);
        Ok(PyDegradation { inner: s5p_ssr::sensor::Degradation::from_spec(&spec).map_err(err)? })
    }

    #[getter]
    fn scale(&self) -> usize {
        self.inner.scale
    }

    fn apply<'py>(&self, py: Python<'py>, x: PyReadonlyArray3<'py, f64>) -> PyResult<Bound<'py, PyArray3<f64>>> {
        to_numpy(py, &self.inner.apply(&to_array(&x)?).map_err(err)?)
    }

    fn adjoint<'py>(
        &self,
        py: Python<'py>,
        g: PyReadonlyArray3<'py, f64>,
        rows: usize,
        cols: usize,
    ) -> PyResult<Bound<'py, PyArray3<f64>>> {
        to_numpy(py, &self.inner.adjoint(&to_array(&g)?, rows, cols).map_err(err)?)
    }
}

/// One architecture instance with its parameters.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (arch_id, band_id="BD3", channels=None, toy=false, seed=0))]
    fn new(arch_id: &str, band_id: &str, channels: Option<usize>, toy: bool, seed: u64) -> PyResult<Self> {
        let (a, b) = (arch(arch_id)?, band(band_id)?);
        let c = channels.unwrap_or_else(|| b.default_channels());
        let cfg = if toy { ModelCfg::toy(a, c) } else { ModelCfg::preset(a, c).map_err(err)? };
        let mut inner = ModelParams::init(a, b, cfg, s5p_ssr::sensor::DEFAULT_SCALE, seed).map_err(err)?;
        inner.zero_residual();
        Ok(PyModel { inner })
    }

    /// Parameters stored in a training checkpoint.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: Checkpoint::load(&path).map_err(err)?.params })
    }

    #[getter]
    fn arch(&self) -> &'static str {
        self.inner.arch.as_str()
    }
    #[getter]
    fn band_id(&self) -> String {
        self.inner.band_id.to_string()
    }
    #[getter]
    fn param_count(&self) -> usize {
        self.inner.count()
    }
    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint.clone()
    }

    fn zero_residual(&mut self) {
        self.inner.zero_residual();
    }

    fn randomize(&mut self, seed: u64, amp: f64) {
        self.inner.randomize(seed, amp);
    }

    fn predict<'py>(&self, py: Python<'py>, y: PyReadonlyArray3<'py, f64>) -> PyResult<Bound<'py, PyArray3<f64>>> {
        to_numpy(py, &predict(&self.inner, &to_array(&y)?).map_err(err)?)
    }

    /// Tiled super-resolution of a normalized cube.
    #[pyo3(signature = (y, tile=DEFAULT_TILE, overlap=DEFAULT_OVERLAP))]
    fn superresolve<'py>(
        &self,
        py: Python<'py>,
        y: PyReadonlyArray3<'py, f64>,
        tile: usize,
        overlap: usize,
    ) -> PyResult<Bound<'py, PyArray3<f64>>> {
        let cube = HyperCube::new(to_array(&y)?, self.inner.band_id, Space::Normalized).map_err(err)?;
        let out = infer_shr_tiled(&self.inner, &cube, tile, overlap).map_err(err)?;
        to_numpy(py, &out.data)
    }

    /// SURE and equivariance terms on one measurement.
    #[pyo3(signature = (y, degradation, sigma, probes=1, seed=0, eq_lambda=Some(1.0)))]
    fn ssl_terms<'py>(
        &self,
        py: Python<'py>,
        y: PyReadonlyArray3<'py, f64>,
        degradation: &PyDegradation,
        sigma: f64,
        probes: usize,
        seed: u64,
        eq_lambda: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sure = SureCfg { sigma, mc_probes: probes, ..SureCfg::default() };
        let eq = eq_lambda.map(|lambda| EqCfg { lambda, ..EqCfg::default() });
        let t = ssl_total(&self.inner, &to_array(&y)?, &degradation.inner, &sure, eq.as_ref(), seed).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("sure_fidelity", t.sure_fidelity)?;
        d.set_item("sure_penalty", t.sure_penalty)?;
        d.set_item("divergence", t.divergence)?;
        d.set_item("eq", t.eq)?;
        d.set_item("total", t.total)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model({}, {}, params={})", self.inner.arch.as_str(), self.inner.band_id, self.inner.count())
    }
}

#[pyfunction]
fn count_params(arch_id: &str, band_id: &str) -> PyResult<usize> {
    core_count(arch(arch_id)?, band(band_id)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, scale=4))]
fn bicubic_upsample<'py>(py: Python<'py>, x: PyReadonlyArray3<'py, f64>, scale: usize) -> PyResult<Bound<'py, PyArray3<f64>>> {
    to_numpy(py, &bicubic_upsample_array(&to_array(&x)?, scale))
}

/// Clips small negatives and replaces outliers in a raw cube.
#[pyfunction]
#[pyo3(signature = (x, threshold=1e-2, band_id="BD3"))]
fn clean<'py>(
    py: Python<'py>,
    x: PyReadonlyArray3<'py, f64>,
    threshold: f64,
    band_id: &str,
) -> PyResult<Bound<'py, PyArray3<f64>>> {
    let cube = HyperCube::new(to_array(&x)?, band(band_id)?, Space::Raw).map_err(err)?;
    to_numpy(py, &s5p_ssr::hsio::clean(&cube, threshold).map_err(err)?.data)
}

#[pyfunction]
#[pyo3(signature = (band_id, channels, rows, cols, seed=0, smoothness=3.0, spectral_rank=4))]
fn synth_scene<'py>(
    py: Python<'py>,
    band_id: &str,
    channels: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    smoothness: f64,
    spectral_rank: usize,
) -> PyResult<Bound<'py, PyArray3<f64>>> {
    let c = s5p_ssr::hsio::synth_scene(band(band_id)?, channels, rows, cols, seed, smoothness, spectral_rank)
        .map_err(err)?;
    to_numpy(py, &c.data)
}

/// Returns `(db, capped)`.
#[pyfunction]
fn psnr(xhat: PyReadonlyArray3<'_, f64>, x: PyReadonlyArray3<'_, f64>, range: f64) -> PyResult<(f64, bool)> {
    let p = metrics::psnr(&to_array(&xhat)?, &to_array(&x)?, range).map_err(err)?;
    Ok((p.db, p.capped))
}

#[pyfunction]
fn ssim(xhat: PyReadonlyArray3<'_, f64>, x: PyReadonlyArray3<'_, f64>, range: f64) -> PyResult<f64> {
    metrics::ssim(&to_array(&xhat)?, &to_array(&x)?, range).map_err(err)
}

#[pyfunction]
fn scc(xhat: PyReadonlyArray3<'_, f64>, x: PyReadonlyArray3<'_, f64>) -> PyResult<f64> {
    metrics::scc(&to_array(&xhat)?, &to_array(&x)?).map_err(err)
}

#[pyfunction]
fn sharpness(x: PyReadonlyArray3<'_, f64>) -> PyResult<f64> {
    Ok(metrics::sharpness(&to_array(&x)?))
}

/// PSNR of `A(xhat)` against `y`; returns `(db, capped)`.
#[pyfunction]
fn consistency(
    xhat: PyReadonlyArray3<'_, f64>,
    y: PyReadonlyArray3<'_, f64>,
    degradation: &PyDegradation,
) -> PyResult<(f64, bool)> {
    let p = metrics::consistency(&to_array(&xhat)?, &to_array(&y)?, &degradation.inner).map_err(err)?;
    Ok((p.db, p.capped))
}

/// Runs a CLI command and returns the artifact paths.
#[pyfunction]
#[pyo3(signature = (command, config, overrides=Vec::new()))]
fn run(command: &str, config: PathBuf, overrides: Vec<String>) -> PyResult<Vec<PathBuf>> {
    let c: Command = command.parse().map_err(err)?;
    s5p_ssr::cli::run(c, &config, &overrides).map_err(err)
}

#[pymodule]
#[pyo3(name = "s5p_ssr")]
fn python_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBandSpec>()?;
    m.add_class::<PyDegradation>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(bicubic_upsample, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(scc, m)?)?;
    m.add_function(wrap_pyfunction!(sharpness, m)?)?;
    m.add_function(wrap_pyfunction!(consistency, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

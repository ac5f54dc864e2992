//! Python bindings for the drivesplat engine.

use std::path::PathBuf;

use drivesplat_core as core;
use nalgebra::{Matrix3, Vector3};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(pydrivesplat, DrivesplatError, PyException);

fn err(e: core::Error) -> PyErr {
    DrivesplatError::new_err(e.to_string())
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

#[pyclass(name = "SE3", module = "pydrivesplat", from_py_object)]
#[derive(Clone)]
struct PySE3 {
    inner: core::SE3,
}

#[pymethods]
impl PySE3 {
    /// Rigid transform from a row-major 3x3 rotation and a translation.
    #[new]
    #[pyo3(signature = (rotation=None, translation=[0.0, 0.0, 0.0]))]
    fn new(rotation: Option<[[f64; 3]; 3]>, translation: [f64; 3]) -> PyResult<Self> {
        let r = rotation.map(|r| Matrix3::from_fn(|i, j| r[i][j])).unwrap_or_else(Matrix3::identity);
        let inner = core::SE3::new(r, Vector3::from(translation));
        if inner.orthonormality_error() > 1e-9 {
            return Err(DrivesplatError::new_err("rotation is not orthonormal"));
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity() -> Self {
        Self { inner: core::SE3::identity() }
    }

    /// From a unit quaternion in (w, x, y, z) order.
    #[staticmethod]
    #[pyo3(signature = (wxyz, translation=[0.0, 0.0, 0.0]))]
    fn from_quaternion(wxyz: [f64; 4], translation: [f64; 3]) -> PyResult<Self> {
        let q = core::geom::quaternion_from_wxyz(wxyz).py()?;
        Ok(Self { inner: core::SE3::from_quaternion(&q, Vector3::from(translation)) })
    }

    #[staticmethod]
    fn rot_z(angle: f64) -> Self {
        Self { inner: core::SE3::rot_z(angle) }
    }

    #[getter]
    fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.inner.rotation;
        [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]])
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        self.inner.translation.into()
    }

    fn inverse(&self) -> Self {
        Self { inner: self.inner.inverse() }
    }

    fn compose(&self, other: &PySE3) -> Self {
        Self { inner: self.inner.compose(&other.inner) }
    }

    fn __matmul__(&self, other: &PySE3) -> Self {
        self.compose(other)
    }

    fn apply(&self, point: [f64; 3]) -> [f64; 3] {
        self.inner.apply(&Vector3::from(point)).into()
    }

    fn max_abs_diff(&self, other: &PySE3) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("SE3(rotation={:?}, translation={:?})", self.rotation(), self.translation())
    }
}

#[pyclass(name = "Intrinsics", module = "pydrivesplat", from_py_object)]
#[derive(Clone)]
struct PyIntrinsics {
    inner: core::Intrinsics,
}

#[pymethods]
impl PyIntrinsics {
    #[new]
    fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> PyResult<Self> {
        Ok(Self { inner: core::Intrinsics::new(fx, fy, cx, cy, width, height).py()? })
    }

    #[getter]
    fn fx(&self) -> f64 {
        self.inner.fx
    }
    #[getter]
    fn fy(&self) -> f64 {
        self.inner.fy
    }
    #[getter]
    fn cx(&self) -> f64 {
        self.inner.cx
    }
    #[getter]
    fn cy(&self) -> f64 {
        self.inner.cy
    }
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }
    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    fn __repr__(&self) -> String {
        let k = &self.inner;
        format!("Intrinsics(fx={}, fy={}, cx={}, cy={}, width={}, height={})", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
    }
}

/// Camera-frame point at `depth` along the ray through `pixel`.
#[pyfunction]
fn backproject(pixel: (f64, f64), depth: f64, k: &PyIntrinsics) -> PyResult<[f64; 3]> {
    Ok(core::geom::backproject(pixel, depth, &k.inner).py()?.into())
}

/// Pixel and depth of a camera-frame point.
#[pyfunction]
fn project(point: [f64; 3], k: &PyIntrinsics) -> PyResult<((f64, f64), f64)> {
    core::geom::project(&Vector3::from(point), &k.inner).py()
}

/// Clamps depths to the supported range.
#[pyfunction]
fn clamp_depth(values: Vec<f64>) -> PyResult<Vec<f64>> {
    let n = values.len();
    let raster = core::Raster::from_vec(n, 1, 1, values).py()?;
    Ok(core::build::clamp_depth(&raster).py()?.into_vec())
}

/// Row-major float raster (height x width x channels).
#[pyclass(name = "Image", module = "pydrivesplat", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: core::Raster<f64>,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: core::Raster::from_vec(width, height, channels, data).py()? })
    }

    #[staticmethod]
    fn load_ppm(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: core::io::load_ppm(&path).py()? })
    }

    fn save_ppm(&self, path: PathBuf) -> PyResult<()> {
        core::io::save_ppm(&path, &self.inner).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }
    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }
    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.height(), self.inner.width(), self.inner.channels())
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn pixel(&self, u: usize, v: usize) -> PyResult<Vec<f64>> {
        if u >= self.inner.width() || v >= self.inner.height() {
            return Err(DrivesplatError::new_err(format!("pixel ({u}, {v}) out of bounds")));
        }
        Ok(self.inner.pixel(u, v).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.inner.width(), self.inner.height(), self.inner.channels())
    }
}

#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    core::photo::psnr(&a.inner, &b.inner).py()
}

#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    core::photo::ssim(&a.inner, &b.inner).py()
}

/// Analytic box-world scene with exact images, depth and instance masks.
#[pyclass(name = "SynthScene", module = "pydrivesplat")]
struct PySynthScene {
    inner: core::synth::SynthScene,
}

#[pymethods]
impl PySynthScene {
    /// `spec_json` overrides fields of the built-in scene.
    #[new]
    #[pyo3(signature = (spec_json=None, seed=None))]
    fn new(spec_json: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut spec: core::synth::SynthSpec = match spec_json {
            Some(text) => serde_json::from_str(text).map_err(|e| DrivesplatError::new_err(e.to_string()))?,
            None => Default::default(),
        };
        if let Some(seed) = seed {
            spec.seed = seed;
        }
        Ok(Self { inner: core::synth::SynthScene::new(&spec).py()? })
    }

    #[getter]
    fn cameras(&self) -> Vec<String> {
        self.inner.rig().cameras().iter().map(|c| c.id.clone()).collect()
    }

    #[getter]
    fn context_times(&self) -> Vec<f64> {
        self.inner.spec().context_times.clone()
    }

    #[getter]
    fn background(&self) -> [f64; 3] {
        self.inner.background()
    }

    fn ego_pose(&self, t: f64) -> PyResult<PySE3> {
        Ok(PySE3 { inner: self.inner.ego_pose(t).py()? })
    }

    /// Oracle (image, depth) at time t.
    fn frame(&self, t: f64, camera: &str) -> PyResult<(PyImage, PyImage)> {
        let f = self.inner.generate_frame(t, camera).py()?;
        Ok((PyImage { inner: f.image }, PyImage { inner: f.depth }))
    }

    /// Writes the manifest and rasters; returns the manifest path.
    fn write(&self, out: PathBuf) -> PyResult<PathBuf> {
        core::io::write_synth_scene(&self.inner, &out).py()
    }

    /// Builds and fuses every context frame in memory.
    fn fuse(&self) -> PyResult<PyScene> {
        let frames = self.inner.frame_inputs().py()?;
        let agg = core::fuse::aggregate_scene(&frames, self.inner.rig(), &self.inner.ego_poses().py()?).py()?;
        Ok(PyScene { inner: agg.scene, background: self.inner.background(), builds: agg.builds })
    }
}

/// Fused time-segmented scene.
#[pyclass(name = "Scene", module = "pydrivesplat")]
struct PyScene {
    inner: core::Scene4D,
    background: [f64; 3],
    builds: usize,
}

#[pymethods]
impl PyScene {
    /// Reads a segment directory written by `save` or the `fuse` command.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (inner, background) = core::io::load_segments(&dir).py()?;
        Ok(Self { inner, background, builds: 0 })
    }

    /// Loads a scene manifest and fuses it.
    #[staticmethod]
    fn from_manifest(path: PathBuf) -> PyResult<Self> {
        let scene = core::io::load_scene(&path).py()?;
        let agg = core::pipeline::fuse_scene(&scene, None).py()?;
        Ok(Self { inner: agg.scene, background: scene.background, builds: agg.builds })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        let cameras: Vec<_> = self.inner.rig.cameras().iter().map(core::synth::CameraSpec::from_entry).collect();
        core::io::save_segments(&dir, &self.inner, &cameras, self.background).py()
    }

    #[getter]
    fn segment_count(&self) -> usize {
        self.inner.segments().len()
    }

    #[getter]
    fn kernel_count(&self) -> usize {
        self.inner.kernel_count()
    }

    /// Frame builds performed while fusing (0 when loaded from disk).
    #[getter]
    fn builds(&self) -> usize {
        self.builds
    }

    #[getter]
    fn timeline(&self) -> (f64, f64) {
        self.inner.timeline()
    }

    #[getter]
    fn cameras(&self) -> Vec<String> {
        self.inner.rig.cameras().iter().map(|c| c.id.clone()).collect()
    }

    /// Renders `camera` at time t with an optional ego-frame offset.
    #[pyo3(signature = (t, camera, ego_offset=[0.0, 0.0, 0.0], background=None, threads=None))]
    fn render(
        &self,
        py: Python<'_>,
        t: f64,
        camera: &str,
        ego_offset: [f64; 3],
        background: Option<[f64; 3]>,
        threads: Option<usize>,
    ) -> PyResult<PyImage> {
        let bg = background.unwrap_or(self.background);
        let out = py
            .detach(|| core::pipeline::render_view(&self.inner, t, camera, &Vector3::from(ego_offset), bg, threads))
            .py()?;
        Ok(PyImage { inner: out.rgb })
    }
}

/// Warps the source frame into the target frame of a manifest and returns
/// (warped image, loss dict).
#[pyfunction]
#[pyo3(signature = (manifest, target, source, camera, weights_json=None))]
fn warp_eval(
    py: Python<'_>,
    manifest: PathBuf,
    target: f64,
    source: f64,
    camera: &str,
    weights_json: Option<&str>,
) -> PyResult<(PyImage, Py<pyo3::types::PyDict>)> {
    let weights: core::photo::LossWeights = match weights_json {
        Some(text) => serde_json::from_str(text).map_err(|e| DrivesplatError::new_err(e.to_string()))?,
        None => Default::default(),
    };
    let scene = core::io::load_scene(&manifest).py()?;
    let (result, loss) = core::pipeline::warp_eval(&scene, target, source, camera, &weights).py()?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("l1", loss.l1)?;
    d.set_item("ssim", loss.ssim)?;
    d.set_item("combined", loss.combined)?;
    Ok((PyImage { inner: result.warped }, d.unbind()))
}

#[pymodule]
pub fn pydrivesplat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DrivesplatError", m.py().get_type::<DrivesplatError>())?;
    m.add_class::<PySE3>()?;
    m.add_class::<PyIntrinsics>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PySynthScene>()?;
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(backproject, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(clamp_depth, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(warp_eval, m)?)?;
    Ok(())
}

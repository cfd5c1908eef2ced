//! Python bindings for `flatkern`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flatkern::clifford::Multivector;
use flatkern::geometry::{lattice_from_basis, ManifoldKind, ManifoldSpec, SpinStructure};
use flatkern::kernel::{self, RegKernelParams};
use flatkern::periodize::{self, TruncationPolicy};
use flatkern::semigroup::{self, make_grid_with_box, GridFunction, TransverseBox};
use flatkern::verify::{run_verification, VerifyConfig};
use flatkern::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::TruncationRadius { .. }
        | Error::TruncationUnsound { .. }
        | Error::NonFinite { .. }
        | Error::NonFiniteSample { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Regularized kernel parameters `(ε, n)`.
#[pyclass(name = "KernelParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: RegKernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    fn new(epsilon: f64, dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: RegKernelParams::new(epsilon, dim).map_err(py_err)?,
        })
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kappa(&self) -> Complex64 {
        self.inner.kappa()
    }

    fn mass_constant(&self) -> Complex64 {
        kernel::mass_constant(&self.inner)
    }

    fn eval(&self, x: Vec<f64>, t: f64) -> PyResult<Complex64> {
        kernel::eval_regularized(&x, t, &self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("KernelParams(epsilon={}, dim={})", self.inner.epsilon(), self.inner.dim())
    }
}

/// A flat manifold: kind, lattice basis rows and a 0-based spin subset.
#[pyclass(name = "Manifold", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyManifold {
    inner: ManifoldSpec,
}

#[pymethods]
impl PyManifold {
    #[new]
    #[pyo3(signature = (kind, basis, spin = Vec::new()))]
    fn new(kind: &str, basis: Vec<Vec<f64>>, spin: Vec<usize>) -> PyResult<Self> {
        let kind: ManifoldKind = kind.parse().map_err(py_err)?;
        let lattice = lattice_from_basis(basis).map_err(py_err)?;
        let spin = SpinStructure::from_indices(lattice.rank(), &spin).map_err(py_err)?;
        Ok(Self {
            inner: ManifoldSpec::new(kind, lattice, spin).map_err(py_err)?,
        })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn basis(&self) -> Vec<Vec<f64>> {
        self.inner.lattice().basis().to_vec()
    }

    #[getter]
    fn spin(&self) -> Vec<usize> {
        self.inner.spin().indices()
    }

    #[pyo3(signature = (x, t, params, tol = 1e-12))]
    fn kernel(&self, x: Vec<f64>, t: f64, params: &PyKernelParams, tol: f64) -> PyResult<Complex64> {
        let policy = TruncationPolicy::with_tol(tol).map_err(py_err)?;
        periodize::manifold_kernel(&x, t, &self.inner, &params.inner, &policy).map_err(py_err)
    }

    #[pyo3(signature = (x, y, t, params, tol = 1e-12))]
    fn two_point_kernel(
        &self,
        x: Vec<f64>,
        y: Vec<f64>,
        t: f64,
        params: &PyKernelParams,
        tol: f64,
    ) -> PyResult<Complex64> {
        let policy = TruncationPolicy::with_tol(tol).map_err(py_err)?;
        periodize::two_point_kernel(&x, &y, t, &self.inner, &params.inner, &policy).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifold(kind={:?}, basis={:?}, spin={:?})",
            self.kind(),
            self.basis(),
            self.spin()
        )
    }
}

/// Samples of a section on a grid over the fundamental domain.
#[pyclass(name = "Grid", skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: GridFunction,
}

#[pymethods]
impl PyGrid {
    /// Grid with `resolution` nodes per lattice direction, filled from
    /// `samples` (node order as in `points`) or with zeros.
    #[new]
    #[pyo3(signature = (manifold, resolution, samples = None, transverse = None))]
    fn new(
        manifold: &PyManifold,
        resolution: usize,
        samples: Option<Vec<Complex64>>,
        transverse: Option<(f64, usize)>,
    ) -> PyResult<Self> {
        let box_ = match transverse {
            Some((w, r)) => Some(TransverseBox::new(w, r).map_err(py_err)?),
            None => None,
        };
        let zero = make_grid_with_box(&manifold.inner, resolution, box_, |_| Complex64::new(0.0, 0.0))
            .map_err(py_err)?;
        let inner = match samples {
            Some(s) => GridFunction::from_samples(&manifold.inner, resolution, box_, s).map_err(py_err)?,
            None => zero,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points()
    }

    fn samples(&self) -> Vec<Complex64> {
        self.inner.samples().to_vec()
    }

    fn lp_norm(&self, p: f64) -> PyResult<f64> {
        semigroup::lp_norm(&self.inner, p).map_err(py_err)
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn evolve_spectral(&self, t: f64, params: &PyKernelParams) -> PyResult<Self> {
        Ok(Self {
            inner: semigroup::apply_spectral(&self.inner, t, &params.inner).map_err(py_err)?,
        })
    }

    #[pyo3(signature = (t, params, tol = 1e-12))]
    fn evolve_convolution(&self, t: f64, params: &PyKernelParams, tol: f64) -> PyResult<Self> {
        let policy = TruncationPolicy::with_tol(tol).map_err(py_err)?;
        Ok(Self {
            inner: semigroup::apply_convolution(&self.inner, t, &params.inner, &policy).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Multivector in the complex Clifford algebra with `eᵢ² = −1`; blade
/// coefficients indexed by bitmask.
#[pyclass(name = "Multivector", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMultivector {
    inner: Multivector,
}

#[pymethods]
impl PyMultivector {
    #[new]
    fn new(dim: usize, coeffs: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self {
            inner: Multivector::from_coeffs(dim, coeffs).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn generator(dim: usize, i: usize) -> PyResult<Self> {
        Ok(Self {
            inner: Multivector::generator(dim, i).map_err(py_err)?,
        })
    }

    #[getter]
    fn coeffs(&self) -> Vec<Complex64> {
        self.inner.coeffs().to_vec()
    }

    fn conjugate(&self) -> Self {
        Self {
            inner: self.inner.conjugate(),
        }
    }

    fn modulus_sq(&self) -> f64 {
        self.inner.modulus_sq()
    }

    fn __mul__(&self, other: &Self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.geometric_product(&other.inner).map_err(py_err)?,
        })
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        if self.inner.dim() != other.inner.dim() {
            return Err(PyValueError::new_err("dimension mismatch"));
        }
        Ok(Self {
            inner: &self.inner + &other.inner,
        })
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyfunction]
fn eval_limit(x: Vec<f64>, t: f64) -> PyResult<Complex64> {
    let n = x.len();
    kernel::eval_limit(&x, t, n).map_err(py_err)
}

/// Runs verification suites; `config_json` is a verify section, the
/// standard configuration when omitted. Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (suite = "all", config_json = None, seed = 0))]
fn verify(suite: &str, config_json: Option<&str>, seed: u64) -> PyResult<String> {
    let config = match config_json {
        Some(s) => serde_json::from_str::<VerifyConfig>(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => VerifyConfig::standard(),
    };
    let report = run_verification(suite, &config, seed).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pyflatkern(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyManifold>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyMultivector>()?;
    m.add_function(wrap_pyfunction!(eval_limit, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

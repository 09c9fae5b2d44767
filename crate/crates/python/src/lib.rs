//! Python bindings: exposes filter loading, transfer-operator analysis,
//! infinite products and correlations to Python as the `transferwave_py`
//! module.

use num_complex::Complex;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use transferwave::cascade::ProductEvaluator;
use transferwave::cli::{analyze, builtin, load_filter, AnalyzeOptions, FilterSpec};
use transferwave::lattice::DilationSystem;
use transferwave::linalg::{CMat, CVec};
use transferwave::transfer::{
    invariant_support, spectral_data, transfer_apply, transition_operator,
};
use transferwave::trigmat::{el_condition, qmf_residual, MatTrigPoly};

type PyMatrix = Vec<Vec<Complex<f64>>>;

fn err_to_py(e: transferwave::Error) -> PyErr {
    match &e {
        transferwave::Error::ParseError(_) | transferwave::Error::UnknownBuiltin(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mat_to_py(m: &CMat) -> PyMatrix {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// A matrix trigonometric polynomial p(x) = Σ_k M_k e^{2πi k·x}.
#[pyclass(name = "TrigPoly", from_py_object)]
#[derive(Clone)]
struct PyTrigPoly {
    inner: MatTrigPoly,
}

#[pymethods]
impl PyTrigPoly {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    /// List of (frequency, matrix) coefficient pairs.
    fn coeffs(&self) -> Vec<(Vec<i64>, PyMatrix)> {
        self.inner
            .coeffs()
            .map(|(k, m)| (k.clone(), mat_to_py(m)))
            .collect()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<PyMatrix> {
        if x.len() != self.inner.n() {
            return Err(PyValueError::new_err("point dimension mismatch"));
        }
        Ok(mat_to_py(&self.inner.evaluate(&x)))
    }

    fn adjoint(&self) -> PyTrigPoly {
        PyTrigPoly {
            inner: self.inner.adjoint(),
        }
    }

    fn product(&self, other: &PyTrigPoly) -> PyResult<PyTrigPoly> {
        Ok(PyTrigPoly {
            inner: self.inner.product(&other.inner).map_err(err_to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "TrigPoly(n={}, d={}, coeffs={})",
            self.inner.n(),
            self.inner.d(),
            self.inner.num_coeffs()
        )
    }
}

/// A filter bank: dilation system plus matrix trigonometric polynomial.
#[pyclass(name = "Filter")]
struct PyFilter {
    m: MatTrigPoly,
    sys: DilationSystem,
    name: String,
}

#[pymethods]
impl PyFilter {
    /// Load one of the builtin filters: haar, haar3, stretched-haar,
    /// haar2-shift, d4.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        let (m, sys, spec) = builtin(name).map_err(err_to_py)?;
        Ok(PyFilter {
            m,
            sys,
            name: spec.name.unwrap_or_else(|| name.to_string()),
        })
    }

    /// Parse a filter spec from its JSON representation.
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let spec = FilterSpec::parse(json).map_err(err_to_py)?;
        let (m, sys) = spec.build().map_err(err_to_py)?;
        Ok(PyFilter {
            m,
            sys,
            name: spec.name.unwrap_or_else(|| "unnamed".to_string()),
        })
    }

    /// Load a filter spec from a JSON file or builtin name.
    #[staticmethod]
    fn load(source: &str) -> PyResult<Self> {
        let (m, sys, spec) = load_filter(source).map_err(err_to_py)?;
        Ok(PyFilter {
            m,
            sys,
            name: spec.name.unwrap_or_else(|| source.to_string()),
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    #[getter]
    fn n(&self) -> usize {
        self.sys.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.m.d()
    }

    #[getter]
    fn q(&self) -> usize {
        self.sys.q()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.sys.theta()
    }

    #[getter]
    fn digits(&self) -> Vec<Vec<i64>> {
        self.sys.digits().to_vec()
    }

    fn symbol(&self) -> PyTrigPoly {
        PyTrigPoly {
            inner: self.m.clone(),
        }
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<PyMatrix> {
        Ok(mat_to_py(&self.m.evaluate(&x)))
    }

    #[pyo3(signature = (grid_level = 8))]
    fn qmf_residual(&self, grid_level: u32) -> f64 {
        qmf_residual(&self.m, &self.sys, grid_level)
    }

    /// The low-pass E(l) certificate: (holds, l, spectral_margin, reason).
    #[pyo3(signature = (tol = 1e-8))]
    fn el_condition(&self, tol: f64) -> PyResult<(bool, usize, f64, Option<String>)> {
        let rep = el_condition(&self.m, &self.sys, tol).map_err(err_to_py)?;
        Ok((
            rep.holds,
            rep.l,
            rep.spectral_margin,
            rep.reason.map(|r| format!("{r:?}")),
        ))
    }

    /// Applies the transfer operator in exact coefficient form.
    fn transfer_apply(&self, h: &PyTrigPoly) -> PyResult<PyTrigPoly> {
        Ok(PyTrigPoly {
            inner: transfer_apply(&self.m, &self.sys, &h.inner).map_err(err_to_py)?,
        })
    }

    /// The invariant frequency set K*.
    fn invariant_support(&self) -> Vec<Vec<i64>> {
        invariant_support(&self.m, &self.sys).freqs().to_vec()
    }

    /// Eigenvalues of the transition operator on K*.
    fn eigenvalues(&self) -> PyResult<Vec<Complex<f64>>> {
        let support = invariant_support(&self.m, &self.sys);
        let t = transition_operator(&self.m, &self.sys, &support).map_err(err_to_py)?;
        let sd = spectral_data(&t, 1e-8, &self.sys).map_err(err_to_py)?;
        Ok(sd.eigenvalues)
    }

    /// Dimension of the space of harmonic maps.
    fn fixed_dim(&self) -> PyResult<usize> {
        let support = invariant_support(&self.m, &self.sys);
        let t = transition_operator(&self.m, &self.sys, &support).map_err(err_to_py)?;
        let sd = spectral_data(&t, 1e-8, &self.sys).map_err(err_to_py)?;
        Ok(sd.fixed_dim())
    }

    /// Truncated infinite product P(x) with certified error: (matrix, err).
    #[pyo3(signature = (x, tol = 1e-8))]
    fn product_p(&self, x: Vec<f64>, tol: f64) -> PyResult<(PyMatrix, f64)> {
        let el = el_condition(&self.m, &self.sys, 1e-8).map_err(err_to_py)?;
        let ev = ProductEvaluator::new(&self.m, &self.sys, &el).map_err(err_to_py)?;
        let p = ev.eval(&x, tol).map_err(err_to_py)?;
        Ok((mat_to_py(&p.value), p.err))
    }

    /// Minimal projection h_v for a unit vector v in E1.
    #[pyo3(signature = (v, tol = 1e-6))]
    fn minimal_projection(&self, v: Vec<Complex<f64>>, tol: f64) -> PyResult<PyTrigPoly> {
        let el = el_condition(&self.m, &self.sys, 1e-8).map_err(err_to_py)?;
        let support = invariant_support(&self.m, &self.sys);
        let t = transition_operator(&self.m, &self.sys, &support).map_err(err_to_py)?;
        let sd = spectral_data(&t, 1e-8, &self.sys).map_err(err_to_py)?;
        let vv = CVec::from_iterator(v.len(), v.into_iter());
        let mp = transferwave::harmonic::minimal_projection(
            &self.m, &self.sys, &t, &sd, &el, &vv, tol,
        )
        .map_err(err_to_py)?;
        Ok(PyTrigPoly { inner: mp.poly })
    }

    /// Full pipeline; returns the report as a JSON string.
    #[pyo3(signature = (tol = 1e-8, grid_level = 8, max_depth = 20, seed = 7))]
    fn analyze(&self, tol: f64, grid_level: u32, max_depth: usize, seed: u64) -> PyResult<String> {
        let opts = AnalyzeOptions {
            tol,
            grid_level,
            max_depth,
            seed,
        };
        let analysis = analyze(&self.m, &self.sys, &self.name, &opts).map_err(err_to_py)?;
        Ok(analysis.report.to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "Filter(name={:?}, n={}, d={}, q={})",
            self.name,
            self.sys.n(),
            self.m.d(),
            self.sys.q()
        )
    }
}

/// Names of the builtin filters.
#[pyfunction]
fn builtins() -> Vec<&'static str> {
    transferwave::cli::BUILTINS.to_vec()
}

#[pymodule]
fn transferwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFilter>()?;
    m.add_class::<PyTrigPoly>()?;
    m.add_function(wrap_pyfunction!(builtins, m)?)?;
    Ok(())
}

//! Python bindings for spanforge.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use spanforge::alg_to_sp::{self, AlgSpan};
use spanforge::circuit_ir::{fmt_bits, parse_bits, QueryAlgorithm, TruthTable};
use spanforge::cli::{self, criteria};
use spanforge::fixtures;
use spanforge::or_compose::{self, VtSearch};
use spanforge::sp_compiler::{self, Compiled, Mode};
use spanforge::span_core::{self, SpanProgram};
use spanforge::tol::Tolerances;
use spanforge::Error;
use std::collections::BTreeMap;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(m) => PyIOError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn tol() -> PyResult<Tolerances> {
    Tolerances::from_env().map_err(err)
}

/// Serialize through JSON into native Python objects.
fn to_py(py: Python<'_>, v: &impl Serialize) -> PyResult<PyObject> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn bits(s: &str) -> PyResult<Vec<bool>> {
    parse_bits(s).map_err(err)
}

fn mode(s: &str) -> PyResult<Mode> {
    match s {
        "spectral" => Ok(Mode::Spectral),
        "circuit" => Ok(Mode::Circuit),
        _ => Err(PyValueError::new_err(format!("mode must be 'spectral' or 'circuit', got {s:?}"))),
    }
}

/// A quantum query algorithm with its truth table.
#[pyclass(name = "QueryAlgorithm")]
#[derive(Clone)]
struct PyQueryAlgorithm {
    alg: QueryAlgorithm,
    table: TruthTable,
}

#[pymethods]
impl PyQueryAlgorithm {
    /// Parse circuit JSON; the table is induced by rounding when the file has none.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (alg, table) = QueryAlgorithm::from_json_str(text, &tol()?).map_err(err)?;
        let table = match table {
            Some(t) => t,
            None => alg.induced_table().map_err(err)?,
        };
        Ok(PyQueryAlgorithm { alg, table })
    }

    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let (alg, table) = fixtures::by_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown fixture {name:?}")))?;
        Ok(PyQueryAlgorithm { alg, table })
    }

    #[staticmethod]
    fn fixture_names() -> Vec<&'static str> {
        fixtures::all().into_iter().map(|f| f.0).collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.alg.to_json(Some(&self.table))).expect("serializable")
    }

    #[getter]
    fn n(&self) -> usize {
        self.alg.n
    }

    #[getter]
    fn t_len(&self) -> usize {
        self.alg.t_len()
    }

    #[getter]
    fn s_len(&self) -> usize {
        self.alg.query_set().len()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.alg.epsilon
    }

    fn truth_table(&self) -> BTreeMap<String, bool> {
        self.table.rows.iter().map(|(x, f)| (fmt_bits(x), *f)).collect()
    }

    /// (p0, p1) of the answer bit on input x.
    fn output_probabilities(&self, x: &str) -> PyResult<(f64, f64)> {
        self.alg.output_probabilities(&bits(x)?).map_err(err)
    }

    /// The invariant suite as a dict.
    fn check(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &cli::check_suite(&self.alg, &self.table, None, &tol()?))
    }

    /// Clean, pad and build P_A.
    fn span_program(&self) -> PyResult<PyAlgSpan> {
        let t = tol()?;
        Ok(PyAlgSpan { sp: cli::pipeline(&self.alg, &self.table, &t).map_err(err)?, table: self.table.clone() })
    }

    fn __repr__(&self) -> String {
        format!("QueryAlgorithm(n={}, T={}, S={}, epsilon={})", self.alg.n, self.alg.t_len(), self.s_len(), self.alg.epsilon)
    }
}

/// A span program.
#[pyclass(name = "SpanProgram")]
#[derive(Clone)]
struct PySpanProgram {
    p: SpanProgram,
}

#[pymethods]
impl PySpanProgram {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySpanProgram { p: SpanProgram::from_json_str(text).map_err(err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.p.to_json()).expect("serializable")
    }

    #[getter]
    fn n(&self) -> usize {
        self.p.n()
    }

    #[getter]
    fn dim_h(&self) -> usize {
        self.p.dim_h()
    }

    #[getter]
    fn dim_v(&self) -> usize {
        self.p.dim_v
    }

    /// ||A^+ tau||^2.
    fn minimal_witness_size(&self) -> PyResult<f64> {
        Ok(span_core::minimal_witness_with(&self.p, &tol()?).map_err(err)?.1)
    }

    /// Smallest positive witness size on x, or None when x is not positive.
    fn positive_witness_size(&self, x: &str) -> PyResult<Option<f64>> {
        let w = span_core::positive_witness_size_with(&self.p, &bits(x)?, &tol()?).map_err(err)?;
        Ok(w.size.finite())
    }

    /// (size, error) of the best approximate negative witness with error at most lambda / w_plus.
    fn negative_witness_size(&self, x: &str, lam: f64, w_plus: f64) -> PyResult<(Option<f64>, f64)> {
        let w = span_core::approx_negative_witness_with(&self.p, &bits(x)?, lam, w_plus, &tol()?).map_err(err)?;
        Ok((w.size.finite(), w.achieved_error))
    }

    /// Compile for evaluation with solver-measured bounds over a truth table {bits: value}.
    fn compile(&self, table: BTreeMap<String, bool>, lam: f64) -> PyResult<PyCompiled> {
        let rows = table.iter().map(|(k, v)| Ok((bits(k)?, *v))).collect::<PyResult<Vec<_>>>()?;
        let table = TruthTable::new(self.p.n(), rows).map_err(err)?;
        let comp = Compiled::from_table(&self.p, &table, lam, &tol()?).map_err(err)?;
        Ok(PyCompiled { comp, table })
    }

    fn __repr__(&self) -> String {
        format!("SpanProgram(n={}, dim_H={}, dim_V={})", self.p.n(), self.p.dim_h(), self.p.dim_v)
    }
}

/// The span program P_A built from a clean algorithm.
#[pyclass(name = "AlgSpan")]
struct PyAlgSpan {
    sp: AlgSpan,
    table: TruthTable,
}

#[pymethods]
impl PyAlgSpan {
    #[getter]
    fn program(&self) -> PySpanProgram {
        PySpanProgram { p: self.sp.program.clone() }
    }

    #[getter]
    fn w_plus_bound(&self) -> f64 {
        self.sp.w_plus_bound()
    }

    #[getter]
    fn w_minus_bound(&self) -> f64 {
        self.sp.w_minus_bound()
    }

    #[getter]
    fn negative_error_cap(&self) -> f64 {
        self.sp.negative_error_cap()
    }

    /// Closed-form ||w0||^2.
    fn analytic_witness_size(&self) -> f64 {
        alg_to_sp::analytic_w0(&self.sp).1
    }

    /// Index tables of H and V and the weights of A.
    fn layout(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &cli::layout_file(&self.sp))
    }

    /// Sizes and errors of the constructed witnesses on every table input.
    fn witness_checks(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &alg_to_sp::witness_checks(&self.sp, &self.table).map_err(err)?)
    }

    fn compile(&self) -> PyResult<PyCompiled> {
        let (comp, _) = sp_compiler::compile_alg_span(&self.sp, &self.table, &tol()?).map_err(err)?;
        Ok(PyCompiled { comp, table: self.table.clone() })
    }
}

/// A span program prepared for evaluation.
#[pyclass(name = "Compiled")]
struct PyCompiled {
    comp: Compiled,
    table: TruthTable,
}

#[pymethods]
impl PyCompiled {
    #[getter]
    fn lambda_(&self) -> f64 {
        self.comp.base_lambda
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.comp.pb.beta
    }

    #[getter]
    fn phase_bits(&self) -> usize {
        self.comp.params.phase_bits()
    }

    #[getter]
    fn controlled_u_calls(&self) -> u64 {
        self.comp.params.controlled_u_calls()
    }

    #[pyo3(signature = (x, mode = "spectral"))]
    fn acceptance(&self, x: &str, mode: &str) -> PyResult<f64> {
        self.comp.acceptance(&bits(x)?, self::mode(mode)?).map_err(err)
    }

    /// Calibrated decisions over the truth table as {bits: accepted}.
    #[pyo3(signature = (mode = "spectral"))]
    fn decide_all(&self, mode: &str) -> PyResult<BTreeMap<String, bool>> {
        let cal = self.comp.calibrate(&self.table, self::mode(mode)?).map_err(err)?;
        Ok(cal.values.iter().map(|v| (v.0.clone(), v.2 > cal.threshold)).collect())
    }
}

/// Run one acceptance criterion (1-8 or its name).
#[pyfunction]
fn run_criterion(py: Python<'_>, which: &str) -> PyResult<PyObject> {
    let id = criteria::by_name(which).ok_or_else(|| PyValueError::new_err(format!("unknown criterion {which:?}")))?;
    to_py(py, &criteria::run(id, &tol()?).map_err(err)?)
}

#[pyfunction]
fn criterion_names() -> Vec<&'static str> {
    criteria::NAMES.to_vec()
}

/// Bin boundaries of a sorted positive sequence.
#[pyfunction]
fn bin_gammas(gammas: Vec<f64>) -> PyResult<Vec<usize>> {
    or_compose::bin_gammas(&gammas).map_err(err)
}

/// Variable-time search over child algorithms; returns the full report.
#[pyfunction]
#[pyo3(signature = (children, mode = "spectral"))]
fn vt_search(py: Python<'_>, children: Vec<PyQueryAlgorithm>, mode: &str) -> PyResult<PyObject> {
    let algs: Vec<_> = children.into_iter().map(|c| (c.alg, c.table)).collect();
    let mut vt = VtSearch::new(&algs, &tol()?).map_err(err)?;
    to_py(py, &vt.run(self::mode(mode)?).map_err(err)?)
}

/// Counter CSV for the OR family sizes and fixed-S padding family.
#[pyfunction]
#[pyo3(name = "bench", signature = (or_sizes = Vec::new(), t_pads = Vec::new()))]
fn bench_csv(or_sizes: Vec<usize>, t_pads: Vec<usize>) -> PyResult<String> {
    cli::cmd_bench(&or_sizes, &t_pads, &[], &tol()?).map_err(err)
}

/// Tolerances in use and their hash.
#[pyfunction]
fn tolerances(py: Python<'_>) -> PyResult<(PyObject, String)> {
    let t = tol()?;
    Ok((to_py(py, &t)?, t.hash()))
}

#[pymodule]
fn spanforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQueryAlgorithm>()?;
    m.add_class::<PySpanProgram>()?;
    m.add_class::<PyAlgSpan>()?;
    m.add_class::<PyCompiled>()?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(criterion_names, m)?)?;
    m.add_function(wrap_pyfunction!(bin_gammas, m)?)?;
    m.add_function(wrap_pyfunction!(vt_search, m)?)?;
    m.add_function(wrap_pyfunction!(bench_csv, m)?)?;
    m.add_function(wrap_pyfunction!(tolerances, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

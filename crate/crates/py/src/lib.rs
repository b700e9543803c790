use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use schema_audit_core as core;
use schema_audit_core::normalize::{normalize_response, NormalizationRules};
use schema_audit_core::report::{LoadedTensor, LooOptions};
use serde::Serialize;

create_exception!(schema_audit, AuditError, PyException);

fn err(e: core::AuditError) -> PyErr {
    AuditError::new_err(e.to_string())
}

/// Serializes through JSON so results arrive as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| AuditError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rules(path: Option<PathBuf>) -> PyResult<NormalizationRules> {
    match path {
        Some(p) => NormalizationRules::load(p).map_err(err),
        None => Ok(NormalizationRules::default()),
    }
}

#[pyclass(name = "Schema", module = "schema_audit", frozen)]
struct PySchema {
    inner: core::Schema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        core::Schema::load(path).map(|inner| PySchema { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        core::Schema::from_json_str(text).map(|inner| PySchema { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn criterion_ids(&self) -> Vec<String> {
        self.inner.criterion_ids()
    }

    #[getter]
    fn category_ids(&self) -> Vec<String> {
        self.inner.categories().iter().map(|c| c.id.clone()).collect()
    }

    /// Criterion id to category id.
    fn mapping(&self) -> Vec<(String, String)> {
        self.inner.criteria().iter().map(|q| (q.id.clone(), q.category_id.clone())).collect()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schema({} criteria, {} categories)",
            self.inner.criteria().len(),
            self.inner.categories().len()
        )
    }
}

#[pyclass(name = "Tensor", module = "schema_audit", frozen)]
struct PyTensor {
    loaded: LoadedTensor,
}

impl PyTensor {
    fn tensor(&self) -> &core::ResponseTensor {
        &self.loaded.tensor
    }
}

#[pymethods]
impl PyTensor {
    /// Loads a binary or raw long-form CSV; the format is picked from the header.
    #[staticmethod]
    #[pyo3(signature = (path, schema, rules_path=None))]
    fn load(path: PathBuf, schema: &PySchema, rules_path: Option<PathBuf>) -> PyResult<Self> {
        let rules = rules(rules_path)?;
        core::report::load_tensor(path, &schema.inner, &rules).map(|loaded| PyTensor { loaded }).map_err(err)
    }

    /// Builds a tensor from `(unit_id, annotator_id, criterion_id, value)` rows.
    #[staticmethod]
    fn from_records(rows: Vec<(String, String, String, u8)>, schema: &PySchema) -> PyResult<Self> {
        let records: Vec<core::ResponseRecord> = rows
            .into_iter()
            .map(|(unit_id, annotator_id, criterion_id, value)| core::ResponseRecord {
                unit_id,
                annotator_id,
                criterion_id,
                value,
            })
            .collect();
        let (tensor, drops) = core::build_tensor(&records, &schema.inner).map_err(err)?;
        Ok(PyTensor { loaded: in_memory(tensor, drops) })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.tensor().shape()
    }

    #[getter]
    fn unit_ids(&self) -> Vec<String> {
        self.tensor().unit_ids().to_vec()
    }

    #[getter]
    fn annotator_ids(&self) -> Vec<String> {
        self.tensor().annotator_ids().to_vec()
    }

    #[getter]
    fn criterion_ids(&self) -> Vec<String> {
        self.tensor().criterion_ids().to_vec()
    }

    fn provenance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.loaded.provenance)
    }

    fn get(&self, unit: usize, annotator: usize, criterion: usize) -> PyResult<u8> {
        let (s, a, q) = self.tensor().shape();
        if unit >= s || annotator >= a || criterion >= q {
            return Err(AuditError::new_err(format!("index ({unit}, {annotator}, {criterion}) out of range")));
        }
        Ok(self.tensor().get(unit, annotator, criterion))
    }

    /// Restricts the annotator axis to `annotators`, in the given order.
    fn select(&self, annotators: Vec<String>) -> PyResult<Self> {
        let tensor = self.tensor().select_annotators(&annotators).map_err(err)?;
        let mut loaded = self.loaded.clone();
        loaded.provenance.annotators = tensor.num_annotators();
        loaded.tensor = tensor;
        Ok(PyTensor { loaded })
    }

    /// Vote counts as a list of rows, one per unit, in criterion order.
    fn vote_counts(&self) -> Vec<Vec<u32>> {
        let votes = core::vote_counts(self.tensor());
        (0..votes.num_units()).map(|s| votes.unit_row(s).to_vec()).collect()
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| err(core::AuditError::Io { path: path.clone(), source: e }))?;
        core::tensor::write_long_csv(file, &self.tensor().to_records()).map_err(err)
    }

    fn __repr__(&self) -> String {
        let (s, a, q) = self.tensor().shape();
        format!("Tensor(units={s}, annotators={a}, criteria={q})")
    }
}

fn in_memory(tensor: core::ResponseTensor, drops: core::tensor::DropReport) -> LoadedTensor {
    let (units, annotators, criteria) = tensor.shape();
    LoadedTensor {
        tensor,
        provenance: core::report::Provenance {
            source: "<memory>".into(),
            sha256: String::new(),
            format: core::report::TensorFormat::Binary,
            cleaning: None,
            drops,
            units,
            annotators,
            criteria,
        },
    }
}

#[pyfunction]
fn stability<'py>(py: Python<'py>, tensor: &PyTensor, schema: &PySchema, t: u32) -> PyResult<Bound<'py, PyAny>> {
    let votes = core::vote_counts(tensor.tensor());
    to_py(py, &core::stability::stability_table(&votes, &schema.inner, t).map_err(err)?)
}

#[pyfunction]
fn overlap<'py>(py: Python<'py>, tensor: &PyTensor, schema: &PySchema, t: u32) -> PyResult<Bound<'py, PyAny>> {
    let votes = core::vote_counts(tensor.tensor());
    to_py(py, &core::separability::overlap_summary(&votes, &schema.inner, t).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (tensor, schema, t, mask_within=true))]
fn condov_matrix<'py>(
    py: Python<'py>,
    tensor: &PyTensor,
    schema: &PySchema,
    t: u32,
    mask_within: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let votes = core::vote_counts(tensor.tensor());
    to_py(py, &core::separability::leakage_matrix(&votes, &schema.inner, t, mask_within).map_err(err)?)
}

#[pyfunction]
fn conditional_overlap(tensor: &PyTensor, source: &str, target: &str, t: u32) -> PyResult<Option<f64>> {
    let votes = core::vote_counts(tensor.tensor());
    core::separability::conditional_overlap(&votes, source, target, t).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (tensor, schema, thresholds=None))]
fn sweep<'py>(
    py: Python<'py>,
    tensor: &PyTensor,
    schema: &PySchema,
    thresholds: Option<Vec<u32>>,
) -> PyResult<Bound<'py, PyAny>> {
    let votes = core::vote_counts(tensor.tensor());
    let ts = thresholds.unwrap_or_else(|| core::robustness::default_thresholds(votes.panel_size()));
    to_py(py, &core::robustness::threshold_sweep(&votes, &schema.inner, &ts).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (tensor, schema, pool, panel_size, t=1, top_k=3))]
fn loo<'py>(
    py: Python<'py>,
    tensor: &PyTensor,
    schema: &PySchema,
    pool: Vec<String>,
    panel_size: usize,
    t: u32,
    top_k: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let analysis =
        core::robustness::loo_analysis(tensor.tensor(), &schema.inner, &pool, panel_size, t, top_k).map_err(err)?;
    to_py(py, &analysis)
}

/// Fleiss' kappa, test-retest and boundary alignment for an expert label file.
#[pyfunction]
#[pyo3(signature = (labels_path, schema, tensor=None, t=1))]
fn validate<'py>(
    py: Python<'py>,
    labels_path: PathBuf,
    schema: &PySchema,
    tensor: Option<&PyTensor>,
    t: u32,
) -> PyResult<Bound<'py, PyAny>> {
    let labels = core::validation::read_labels_path(labels_path, &schema.inner).map_err(err)?;
    match tensor {
        Some(tensor) => {
            let votes = core::vote_counts(tensor.tensor());
            to_py(py, &core::validation::validation_report(&labels, &votes, &schema.inner, t).map_err(err)?)
        }
        None => to_py(py, &core::validation::fleiss_kappa(&labels).map_err(err)?),
    }
}

/// Maps one raw panel answer to 1, 0 or None (malformed).
#[pyfunction]
fn normalize(text: &str) -> Option<u8> {
    normalize_response(text).as_bit()
}

/// Normalizes a raw response CSV into a binary long-form CSV and returns the cleaning report.
#[pyfunction]
#[pyo3(signature = (input, output, rules_path=None))]
fn normalize_file<'py>(
    py: Python<'py>,
    input: PathBuf,
    output: PathBuf,
    rules_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let rules = rules(rules_path)?;
    let raw = core::normalize::read_raw_csv_path(&input).map_err(err)?;
    let (records, report) = core::normalize::clean_grid(&raw, &rules).map_err(err)?;
    let file = std::fs::File::create(&output).map_err(|e| err(core::AuditError::Io { path: output.clone(), source: e }))?;
    core::tensor::write_long_csv(file, &records).map_err(err)?;
    to_py(py, &report)
}

/// Draws a seeded synthetic tensor with the same vote distribution for every criterion.
#[pyfunction]
#[pyo3(signature = (schema, distribution, units, seed=0))]
fn synth(schema: &PySchema, distribution: Vec<f64>, units: usize, seed: u64) -> PyResult<PyTensor> {
    let panel_size = distribution.len().saturating_sub(1) as u32;
    let spec = core::synth::PlantedSpec::uniform(&schema.inner, panel_size, distribution, seed).map_err(err)?;
    synth_from(spec, units)
}

/// Draws a synthetic tensor from a planted-spec JSON document.
#[pyfunction]
fn synth_spec(spec_json: &str, units: usize) -> PyResult<PyTensor> {
    let spec = core::synth::PlantedSpec::from_json_str(spec_json).map_err(err)?;
    synth_from(spec, units)
}

fn synth_from(spec: core::synth::PlantedSpec, units: usize) -> PyResult<PyTensor> {
    let out = core::synth::generate(&spec, units).map_err(err)?;
    Ok(PyTensor { loaded: in_memory(out.tensor, Default::default()) })
}

/// Runs the full audit and returns the report; writes the bundle when `out_dir` is given.
#[pyfunction]
#[pyo3(signature = (schema_path, tensor_path, out_dir=None, thresholds=None, mask_within=true, labels=None, loo_pool=None, panel_size=None, top_k=3))]
#[allow(clippy::too_many_arguments)]
fn run_audit<'py>(
    py: Python<'py>,
    schema_path: PathBuf,
    tensor_path: PathBuf,
    out_dir: Option<PathBuf>,
    thresholds: Option<Vec<u32>>,
    mask_within: bool,
    labels: Option<PathBuf>,
    loo_pool: Option<Vec<String>>,
    panel_size: Option<usize>,
    top_k: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let loo = loo_pool.map(|pool| LooOptions {
        panel_size: panel_size.unwrap_or(pool.len().saturating_sub(1)),
        pool,
        threshold: 1,
        top_k,
    });
    let options = core::AuditOptions { thresholds, mask_within, labels, loo, top_k, ..Default::default() };
    let report = core::run_audit(&schema_path, &tensor_path, &options).map_err(err)?;
    if let Some(dir) = out_dir {
        let schema = core::Schema::load(&schema_path).map_err(err)?;
        core::write_bundle(&report, &schema, dir).map_err(err)?;
    }
    to_py(py, &report)
}

#[pymodule]
fn schema_audit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AuditError", m.py().get_type::<AuditError>())?;
    m.add_class::<PySchema>()?;
    m.add_class::<PyTensor>()?;
    m.add_function(wrap_pyfunction!(stability, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(condov_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(loo, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_file, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(synth_spec, m)?)?;
    m.add_function(wrap_pyfunction!(run_audit, m)?)?;
    Ok(())
}

//! Thin Python bindings over the core crate: enough surface to load data,
//! train and serialize trees, run the extraction attack, and score results.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use autolycus::attack::{self, AttackConfig, FrontierDiscipline};
use autolycus::data::{self, DatasetSchema, LabeledSample, Sample};
use autolycus::error::Error;
use autolycus::eval;
use autolycus::explain::{build_discretizer, ExplainerConfig};
use autolycus::service::{LocalOracle, OracleCore, Pricing};
use autolycus::tree::{DecisionTree, TreeParams};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Argument(_) | Error::Validation(_) | Error::Schema(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Dataset")]
struct PyDataset {
    schema: DatasetSchema,
    samples: Vec<LabeledSample>,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(data_path: &str, schema_path: &str) -> PyResult<Self> {
        let (schema, samples) = data::load_dataset(data_path, schema_path).map_err(to_py_err)?;
        Ok(Self { schema, samples })
    }

    fn __len__(&self) -> usize {
        self.samples.len()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.schema.features.iter().map(|f| f.name.clone()).collect()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.schema.label_names.clone()
    }

    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
        let (train, test) =
            data::split(&self.samples, train_fraction, seed).map_err(to_py_err)?;
        Ok((
            PyDataset { schema: self.schema.clone(), samples: train },
            PyDataset { schema: self.schema.clone(), samples: test },
        ))
    }
}

#[pyclass(name = "Tree")]
struct PyTree {
    tree: DecisionTree,
}

#[pymethods]
impl PyTree {
    #[staticmethod]
    #[pyo3(signature = (dataset, max_depth, min_samples_split = 2, seed = 0))]
    fn fit(
        dataset: &PyDataset,
        max_depth: usize,
        min_samples_split: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let params = TreeParams { max_depth, min_samples_split, rng_seed: seed };
        let tree = DecisionTree::fit(&dataset.samples, &dataset.schema, params)
            .map_err(to_py_err)?;
        Ok(Self { tree })
    }

    #[staticmethod]
    fn load(path: &str, dataset: &PyDataset) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let tree =
            DecisionTree::from_json(&text, Some(&dataset.schema)).map_err(to_py_err)?;
        Ok(Self { tree })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.tree.to_json())
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn predict(&self, values: Vec<f64>) -> usize {
        self.tree.predict(&Sample { values })
    }

    fn depth(&self) -> usize {
        self.tree.describe().depth
    }

    fn leaf_count(&self) -> usize {
        self.tree.describe().leaf_count
    }

    fn accuracy(&self, dataset: &PyDataset) -> PyResult<f64> {
        eval::accuracy(&self.tree, &dataset.samples).map_err(to_py_err)
    }

    /// Agreement rate between this tree and another on the dataset's inputs.
    fn agreement(&self, other: &PyTree, dataset: &PyDataset) -> PyResult<f64> {
        let inputs: Vec<Sample> =
            dataset.samples.iter().map(|s| s.sample.clone()).collect();
        eval::r_test(
            |s| self.tree.predict(s),
            |s| other.tree.predict(s),
            &inputs,
        )
        .map_err(to_py_err)
    }
}

#[pyclass(name = "AttackResult")]
struct PyAttackResult {
    #[pyo3(get)]
    queries: u64,
    #[pyo3(get)]
    visited: usize,
    #[pyo3(get)]
    stop_reason: String,
    surrogate: DecisionTree,
}

#[pymethods]
impl PyAttackResult {
    fn surrogate(&self) -> PyTree {
        PyTree { tree: self.surrogate.clone() }
    }
}

/// Runs TRAV-A against an in-process oracle built from `target` + `dataset`.
#[pyfunction]
#[pyo3(signature = (
    target, dataset, seeds, max_queries,
    lower_bound = 1, upper_bound = u64::MAX, epsilon = 0.01, integer_step = 1,
    discipline = "lifo", surrogate_max_depth = 10, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn run_attack(
    target: &PyTree,
    dataset: &PyDataset,
    seeds: Vec<Vec<f64>>,
    max_queries: u64,
    lower_bound: u64,
    upper_bound: u64,
    epsilon: f64,
    integer_step: i64,
    discipline: &str,
    surrogate_max_depth: usize,
    seed: u64,
) -> PyResult<PyAttackResult> {
    let discipline = match discipline {
        "lifo" => FrontierDiscipline::Lifo,
        "fifo" => FrontierDiscipline::Fifo,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown discipline {other:?}; expected \"lifo\" or \"fifo\""
            )))
        }
    };
    let discretizer =
        build_discretizer(&dataset.samples, &dataset.schema).map_err(to_py_err)?;
    let explainer = ExplainerConfig::defaults(dataset.schema.feature_count(), seed);
    let oracle = LocalOracle(Arc::new(OracleCore::new(
        target.tree.clone(),
        discretizer,
        dataset.schema.clone(),
        explainer,
        Pricing::PerCall,
    )));
    let seed_samples: Vec<Sample> =
        seeds.into_iter().map(|values| Sample { values }).collect();
    let config = AttackConfig {
        lower_bound,
        upper_bound,
        epsilon,
        integer_step,
        discipline,
        max_queries,
        rng_seed: seed,
    };
    let params = TreeParams {
        max_depth: surrogate_max_depth,
        min_samples_split: 2,
        rng_seed: seed,
    };
    let (surrogate, trace) =
        attack::extract(&oracle, &seed_samples, &dataset.schema, params, &config)
            .map_err(to_py_err)?;
    Ok(PyAttackResult {
        queries: trace.queries,
        visited: trace.visited.len(),
        stop_reason: trace.stop_reason.to_string(),
        surrogate,
    })
}

#[pymodule]
fn autolycus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTree>()?;
    m.add_class::<PyAttackResult>()?;
    m.add_function(wrap_pyfunction!(run_attack, m)?)?;
    Ok(())
}

//! Python bindings for the tuning harness: dataset loading and
//! preprocessing, split plans, the four trainers, search strategies and the
//! rank statistics, exposed as the `tunebench_rs` extension module.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use tunebench_core::data;
use tunebench_core::nn;
use tunebench_core::search;
use tunebench_core::splits;
use tunebench_core::stats;

fn err(e: tunebench_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> PyResult<ndarray::Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("no rows"));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    let n = rows.len();
    ndarray::Array2::from_shape_vec((n, width), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A loaded tabular dataset (rows x features + one label column).
#[pyclass(name = "DataTable", skip_from_py_object)]
#[derive(Clone)]
struct PyDataTable {
    inner: data::DataTable,
}

#[pymethods]
impl PyDataTable {
    /// Load a CSV or ARFF file. `label` may be a column name, an integer
    /// index, or None for the last column.
    #[staticmethod]
    #[pyo3(signature = (path, format="csv", label=None))]
    fn load(path: &str, format: &str, label: Option<Bound<'_, PyAny>>) -> PyResult<Self> {
        let format: data::Format = format.parse().map_err(err)?;
        let label = match label {
            None => data::LabelSpec::Last,
            Some(obj) => {
                if let Ok(i) = obj.extract::<usize>() {
                    data::LabelSpec::Index(i)
                } else {
                    data::LabelSpec::Name(obj.extract::<String>()?)
                }
            }
        };
        Ok(PyDataTable {
            inner: data::load_table(path, format, label).map_err(err)?,
        })
    }

    /// Build a numeric table from row-major values; the last column is the
    /// label.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyDataTable {
            inner: data::DataTable::from_numeric_rows(rows).map_err(err)?,
        })
    }

    #[getter]
    fn n_instances(&self) -> usize {
        self.inner.n_instances()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.labels()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner
            .features()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    /// Fraction of exactly-zero cells.
    #[pyo3(signature = (include_label=true))]
    fn sparsity(&self, include_label: bool) -> f64 {
        data::sparsity(&self.inner, include_label)
    }

    /// Min-max normalized copy.
    #[pyo3(signature = (exclude_label=true))]
    fn minmax_normalized(&self, exclude_label: bool) -> PyResult<Self> {
        Ok(PyDataTable {
            inner: data::minmax_normalize(&self.inner, exclude_label).map_err(err)?,
        })
    }

    /// Full preprocessing pass (factor conversion, sparsity, normalization).
    /// Returns (table, sparsity).
    #[pyo3(signature = (seed=0, normalize=true, exclude_label=true, factor_policy="level_index"))]
    fn preprocessed(
        &self,
        seed: u64,
        normalize: bool,
        exclude_label: bool,
        factor_policy: &str,
    ) -> PyResult<(Self, f64)> {
        let policy = match factor_policy {
            "level_index" => data::FactorPolicy::LevelIndex,
            "seeded_permutation" => data::FactorPolicy::SeededPermutation(seed),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown factor policy {other:?}"
                )));
            }
        };
        let opts = data::PreprocessOptions {
            factor_policy: policy,
            normalize,
            exclude_label,
            convert_factor_features: true,
        };
        let (table, sparsity) = data::preprocess_one(&self.inner, seed, &opts).map_err(err)?;
        Ok((PyDataTable { inner: table }, sparsity))
    }

    /// Dataset profile as a dict: sparsity, class histogram, uniformity.
    fn profile<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = data::profile(&self.inner);
        let out = PyDict::new(py);
        out.set_item("n_features", p.n_features)?;
        out.set_item("n_instances", p.n_instances)?;
        out.set_item("sparsity", p.sparsity)?;
        out.set_item("class_uniformity", p.class_uniformity)?;
        let hist = PyDict::new(py);
        for (k, v) in &p.class_histogram {
            hist.set_item(k, v)?;
        }
        out.set_item("class_histogram", hist)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "DataTable({} instances x {} features)",
            self.inner.n_instances(),
            self.inner.n_features()
        )
    }
}

/// One train/validation/test index partition.
#[pyclass(name = "SplitPlan", skip_from_py_object)]
#[derive(Clone)]
struct PySplitPlan {
    inner: splits::SplitPlan,
}

#[pymethods]
impl PySplitPlan {
    #[getter]
    fn train(&self) -> Vec<usize> {
        self.inner.train.clone()
    }

    #[getter]
    fn validation(&self) -> Vec<usize> {
        self.inner.validation.clone()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.test.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SplitPlan(train={}, validation={}, test={})",
            self.inner.train.len(),
            self.inner.validation.len(),
            self.inner.test.len()
        )
    }
}

/// 70/30 train/test split.
#[pyfunction]
fn holdout(n: usize, seed: u64) -> PyResult<PySplitPlan> {
    Ok(PySplitPlan {
        inner: splits::holdout(n, seed).map_err(err)?,
    })
}

/// 70/15/15 train/validation/test split.
#[pyfunction]
fn three_way(n: usize, seed: u64) -> PyResult<PySplitPlan> {
    Ok(PySplitPlan {
        inner: splits::three_way(n, seed).map_err(err)?,
    })
}

/// repeats x folds cross-validation plans.
#[pyfunction]
#[pyo3(signature = (n, folds=10, repeats=10, seed=0))]
fn repeated_cv(n: usize, folds: usize, repeats: usize, seed: u64) -> PyResult<Vec<PySplitPlan>> {
    Ok(splits::repeated_cv(n, folds, repeats, seed)
        .map_err(err)?
        .into_iter()
        .map(|inner| PySplitPlan { inner })
        .collect())
}

/// A hyperparameter assignment for one training run.
#[pyclass(name = "TrainConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: nn::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (learning_rate=0.1, batch_size=10, epochs=10, hidden_dims=vec![8], activation="sigmoid", hidden_dropout=0.0, visible_dropout=0.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        learning_rate: f64,
        batch_size: usize,
        epochs: usize,
        hidden_dims: Vec<usize>,
        activation: &str,
        hidden_dropout: f64,
        visible_dropout: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let activation: nn::Activation = activation.parse().map_err(err)?;
        let mut cfg = nn::TrainConfig::new(learning_rate, batch_size, epochs, hidden_dims);
        cfg.activation = activation;
        cfg.hidden_dropout = hidden_dropout;
        cfg.visible_dropout = visible_dropout;
        cfg.seed = seed;
        Ok(PyTrainConfig { inner: cfg })
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(lr={}, batch={}, epochs={}, hidden={:?}, seed={})",
            self.inner.learning_rate,
            self.inner.batch_size,
            self.inner.epochs,
            self.inner.hidden_dims,
            self.inner.seed
        )
    }
}

/// A trained feed-forward classifier (also the SAE/DBN fine-tune result).
#[pyclass(name = "FeedForwardModel")]
struct PyFeedForwardModel {
    inner: nn::FeedForwardModel,
    loss_trace: Vec<f64>,
}

#[pymethods]
impl PyFeedForwardModel {
    /// Predicted labels and per-class scores for row-major features.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let x = rows_to_matrix(rows)?;
        let (labels, scores) = self.inner.predict(&x).map_err(err)?;
        let scores = scores.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok((labels, scores))
    }

    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.loss_trace.clone()
    }

    /// Accuracy over the rows of `table` selected by `indices`.
    fn accuracy_on(&self, table: &PyDataTable, indices: Vec<usize>) -> PyResult<f64> {
        let (x, y) = table.inner.select(&indices);
        let (preds, _) = self.inner.predict(&x).map_err(err)?;
        nn::accuracy(&preds, &y).map_err(err)
    }
}

/// Train a feed-forward classifier on the plan's training rows.
#[pyfunction]
fn train_ffnn(
    table: &PyDataTable,
    plan: &PySplitPlan,
    config: &PyTrainConfig,
) -> PyResult<PyFeedForwardModel> {
    let (model, trace) = nn::ffnn_train(&table.inner, &plan.inner, &config.inner).map_err(err)?;
    Ok(PyFeedForwardModel {
        inner: model,
        loss_trace: trace,
    })
}

/// Greedy SAE pretraining plus supervised fine-tuning with a classifier head.
#[pyfunction]
fn train_sae_classifier(
    table: &PyDataTable,
    plan: &PySplitPlan,
    config: &PyTrainConfig,
) -> PyResult<PyFeedForwardModel> {
    let (x_train, _) = table.inner.select(&plan.inner.train);
    let stack = nn::sae_pretrain(&x_train, &config.inner).map_err(err)?;
    let (model, trace) =
        nn::sae_finetune_classify(&stack, &table.inner, &plan.inner, &config.inner).map_err(err)?;
    Ok(PyFeedForwardModel {
        inner: model,
        loss_trace: trace,
    })
}

/// Greedy RBM pretraining plus supervised fine-tuning with a classifier head.
#[pyfunction]
fn train_dbn_classifier(
    table: &PyDataTable,
    plan: &PySplitPlan,
    config: &PyTrainConfig,
) -> PyResult<PyFeedForwardModel> {
    let (x_train, _) = table.inner.select(&plan.inner.train);
    let stack = nn::dbn_pretrain(&x_train, &config.inner).map_err(err)?;
    let (model, trace) =
        nn::dbn_classify(&stack, &table.inner, &plan.inner, &config.inner).map_err(err)?;
    Ok(PyFeedForwardModel {
        inner: model,
        loss_trace: trace,
    })
}

/// A trained recurrent classifier over per-feature step sequences.
#[pyclass(name = "RecurrentModel")]
struct PyRecurrentModel {
    inner: nn::RecurrentModel,
    loss_trace: Vec<f64>,
}

#[pymethods]
impl PyRecurrentModel {
    #[getter]
    fn loss_trace(&self) -> Vec<f64> {
        self.loss_trace.clone()
    }

    /// Predicted labels for table rows consumed one feature per step.
    fn predict_rows(&self, table: &PyDataTable, indices: Vec<usize>) -> PyResult<Vec<f64>> {
        let (seqs, _) = nn::sequences_from_table(&table.inner, &indices).map_err(err)?;
        let steps: Vec<ndarray::Array2<f64>> = seqs.into_iter().map(|e| e.steps).collect();
        self.inner.predict_final(&steps).map_err(err)
    }

    fn accuracy_on(&self, table: &PyDataTable, indices: Vec<usize>) -> PyResult<f64> {
        let preds = self.predict_rows(table, indices.clone())?;
        let truth: Vec<f64> = indices.iter().map(|&i| table.inner.labels()[i]).collect();
        nn::accuracy(&preds, &truth).map_err(err)
    }
}

/// Train the recurrent classifier on the plan's training rows.
#[pyfunction]
fn train_rnn(
    table: &PyDataTable,
    plan: &PySplitPlan,
    config: &PyTrainConfig,
) -> PyResult<PyRecurrentModel> {
    let (examples, label_values) =
        nn::sequences_from_table(&table.inner, &plan.inner.train).map_err(err)?;
    let (mut model, trace) =
        nn::rnn_train(&examples, label_values.len().max(2), &config.inner).map_err(err)?;
    model.label_values = label_values;
    Ok(PyRecurrentModel {
        inner: model,
        loss_trace: trace,
    })
}

/// Fraction of matching labels.
#[pyfunction]
fn accuracy(predicted: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    nn::accuracy(&predicted, &truth).map_err(err)
}

/// A named hyperparameter search space.
#[pyclass(name = "ParamSpace", skip_from_py_object)]
#[derive(Clone)]
struct PyParamSpace {
    inner: search::ParamSpace,
}

#[pymethods]
impl PyParamSpace {
    /// Axes as (name, values) for discrete axes and (name, (lo, hi)) for
    /// continuous ones.
    fn axes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for axis in &self.inner.axes {
            match &axis.domain {
                search::ParamDomain::Discrete(values) => {
                    out.append((axis.name.clone(), values.clone()))?;
                }
                search::ParamDomain::Continuous { lo, hi } => {
                    out.append((axis.name.clone(), (*lo, *hi)))?;
                }
            }
        }
        Ok(out)
    }

    #[getter]
    fn grid_size(&self) -> Option<usize> {
        self.inner.grid_size()
    }

    fn __repr__(&self) -> String {
        format!(
            "ParamSpace({}, {} axes)",
            self.inner.model_kind,
            self.inner.axes.len()
        )
    }
}

/// The standard search space for a model kind.
#[pyfunction]
fn default_space(model_kind: &str) -> PyResult<PyParamSpace> {
    let kind: nn::ModelKind = model_kind.parse().map_err(err)?;
    Ok(PyParamSpace {
        inner: search::default_space(kind),
    })
}

/// Build a discrete space from {name: [values...]} plus a model kind.
#[pyfunction]
fn discrete_space(model_kind: &str, axes: BTreeMap<String, Vec<f64>>) -> PyResult<PyParamSpace> {
    let kind: nn::ModelKind = model_kind.parse().map_err(err)?;
    let axes = axes
        .into_iter()
        .map(|(name, values)| search::ParamAxis::discrete(name, values))
        .collect();
    Ok(PyParamSpace {
        inner: search::ParamSpace::new(kind, axes).map_err(err)?,
    })
}

fn assignment_to_dict<'py>(
    py: Python<'py>,
    assignment: &search::Assignment,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in assignment {
        d.set_item(k, *v)?;
    }
    Ok(d)
}

fn callback_eval(
    py: Python<'_>,
    cb: &Bound<'_, PyAny>,
    assignment: &search::Assignment,
) -> PyResult<search::TrialResult> {
    let d = assignment_to_dict(py, assignment)?;
    let score: f64 = cb.call1((d,))?.extract()?;
    Ok(search::TrialResult {
        assignment: assignment.clone(),
        validation_accuracy: score,
        test_accuracy: score,
        wall_time: 0.0,
        loss_trace: Vec::new(),
        status: search::TrialStatus::Ok,
    })
}

type SearchReturn<'py> = (Bound<'py, PyDict>, f64, Vec<(Bound<'py, PyDict>, f64)>);

fn search_return<'py>(
    py: Python<'py>,
    best: search::TrialResult,
    trials: Vec<search::TrialResult>,
) -> PyResult<SearchReturn<'py>> {
    let all = trials
        .iter()
        .map(|t| Ok((assignment_to_dict(py, &t.assignment)?, t.validation_accuracy)))
        .collect::<PyResult<Vec<_>>>()?;
    Ok((
        assignment_to_dict(py, &best.assignment)?,
        best.validation_accuracy,
        all,
    ))
}

/// Exhaustive grid search; `evaluate` maps an assignment dict to a score.
/// Returns (best_assignment, best_score, [(assignment, score), ...]).
#[pyfunction]
fn grid_search<'py>(
    py: Python<'py>,
    space: &PyParamSpace,
    evaluate: Bound<'py, PyAny>,
) -> PyResult<SearchReturn<'py>> {
    let mut failure: Option<PyErr> = None;
    let (best, trials) =
        search::grid_search(&space.inner, |a| match callback_eval(py, &evaluate, a) {
            Ok(t) => t,
            Err(e) => {
                failure.get_or_insert(e);
                search::TrialResult::diverged(a.clone(), 0.0)
            }
        })
        .map_err(err)?;
    if let Some(e) = failure {
        return Err(e);
    }
    search_return(py, best, trials)
}

/// Budgeted uniform random search, deterministic under `seed`.
#[pyfunction]
fn random_search<'py>(
    py: Python<'py>,
    space: &PyParamSpace,
    n_trials: usize,
    seed: u64,
    evaluate: Bound<'py, PyAny>,
) -> PyResult<SearchReturn<'py>> {
    let mut failure: Option<PyErr> = None;
    let (best, trials) = search::random_search(&space.inner, n_trials, seed, |a| {
        match callback_eval(py, &evaluate, a) {
            Ok(t) => t,
            Err(e) => {
                failure.get_or_insert(e);
                search::TrialResult::diverged(a.clone(), 0.0)
            }
        }
    })
    .map_err(err)?;
    if let Some(e) = failure {
        return Err(e);
    }
    search_return(py, best, trials)
}

/// Nelder-Mead simplex minimization of a Python objective over a list of
/// floats. Returns (x_best, f_best, evaluations).
#[pyfunction]
#[pyo3(signature = (objective, x0, tolerance=1e-8, max_evals=500))]
fn nelder_mead(
    py: Python<'_>,
    objective: Bound<'_, PyAny>,
    x0: Vec<f64>,
    tolerance: f64,
    max_evals: usize,
) -> PyResult<(Vec<f64>, f64, usize)> {
    let mut failure: Option<PyErr> = None;
    let result = search::nelder_mead(
        |x: &[f64]| -> f64 {
            let call = || -> PyResult<f64> {
                let args = PyList::new(py, x)?;
                objective.call1((args,))?.extract()
            };
            match call() {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &x0,
        tolerance,
        max_evals,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let r = result.map_err(err)?;
    Ok((r.x_best, r.f_best, r.evaluations))
}

/// Kruskal-Wallis H test over two or more samples.
/// Returns (h, df, p_value).
#[pyfunction]
fn kruskal_wallis(groups: Vec<Vec<f64>>) -> PyResult<(f64, usize, f64)> {
    let samples: Vec<stats::GroupSample> = groups
        .into_iter()
        .enumerate()
        .map(|(i, values)| stats::GroupSample::new(format!("group{i}"), values))
        .collect();
    let kw = stats::kruskal_wallis(&samples).map_err(err)?;
    Ok((kw.h, kw.df, kw.p_value))
}

/// Five-number summary plus mean as a dict.
#[pyfunction]
fn box_summary<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let b = stats::box_summary(&values).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("min", b.min)?;
    out.set_item("q1", b.q1)?;
    out.set_item("median", b.median)?;
    out.set_item("q3", b.q3)?;
    out.set_item("max", b.max)?;
    out.set_item("mean", b.mean)?;
    Ok(out)
}

#[pymodule]
fn tunebench_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataTable>()?;
    m.add_class::<PySplitPlan>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyFeedForwardModel>()?;
    m.add_class::<PyRecurrentModel>()?;
    m.add_class::<PyParamSpace>()?;
    m.add_function(wrap_pyfunction!(holdout, m)?)?;
    m.add_function(wrap_pyfunction!(three_way, m)?)?;
    m.add_function(wrap_pyfunction!(repeated_cv, m)?)?;
    m.add_function(wrap_pyfunction!(train_ffnn, m)?)?;
    m.add_function(wrap_pyfunction!(train_rnn, m)?)?;
    m.add_function(wrap_pyfunction!(train_sae_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(train_dbn_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(default_space, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_space, m)?)?;
    m.add_function(wrap_pyfunction!(grid_search, m)?)?;
    m.add_function(wrap_pyfunction!(random_search, m)?)?;
    m.add_function(wrap_pyfunction!(nelder_mead, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(box_summary, m)?)?;
    Ok(())
}

//! Python bindings for the `coxbvs` crate.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use coxbvs::data::{self, ColumnSchema, SurvivalRecord};
use coxbvs::evaluate::{self, PredictionModel};
use coxbvs::experiment::{self, ChainSettings, ExperimentConfig, FitOutput};
use coxbvs::graph::{self, JointAdjacency, MrfPrior};
use coxbvs::posterior;
use coxbvs::sampler::{ModelVariant, PriorPreset};
use coxbvs::simulate::SimulationDesign;

fn py_err(e: coxbvs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Survival dataset with subgroup labels `1..=S`.
#[pyclass(name = "Dataset", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (times, events, covariates, subgroups, names=None))]
    fn new(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<Vec<f64>>,
        subgroups: Vec<usize>,
        names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let n = times.len();
        if events.len() != n || covariates.len() != n || subgroups.len() != n {
            return Err(PyValueError::new_err("times, events, covariates and subgroups must have equal length"));
        }
        let records: Vec<SurvivalRecord> = times
            .into_iter()
            .zip(events)
            .zip(covariates)
            .zip(subgroups)
            .map(|(((t, e), x), s)| SurvivalRecord::new(t, e, x, s))
            .collect();
        let inner = match names {
            Some(names) => data::Dataset::new(records, names),
            None => data::Dataset::from_records(records),
        }
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads a CSV with `time`, `status`, `subgroup` and covariate columns.
    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        let inner = data::load_dataset(path, &ColumnSchema::default()).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        data::write_dataset(path, &self.inner, None).map_err(py_err)
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn n_subgroups(&self) -> usize {
        self.inner.n_subgroups()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.covariate_names().to_vec()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.records().iter().map(|r| r.time).collect()
    }

    #[getter]
    fn events(&self) -> Vec<bool> {
        self.inner.records().iter().map(|r| r.event).collect()
    }

    #[getter]
    fn subgroups(&self) -> Vec<usize> {
        self.inner.records().iter().map(|r| r.subgroup).collect()
    }

    #[getter]
    fn covariates(&self) -> Vec<Vec<f64>> {
        self.inner.records().iter().map(|r| r.covariates.clone()).collect()
    }

    fn subgroup_sizes(&self) -> Vec<usize> {
        self.inner.subgroup_sizes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, p={}, subgroups={:?})",
            self.inner.len(),
            self.inner.p(),
            self.inner.subgroup_sizes()
        )
    }
}

/// Fitted chain with its posterior summary and prediction models.
#[pyclass(name = "Fit", frozen)]
pub struct PyFit {
    inner: FitOutput,
    chain: coxbvs::sampler::ChainConfig,
}

impl PyFit {
    fn model(&self, estimator: &str) -> PyResult<&PredictionModel> {
        match estimator {
            "mpm" => Ok(&self.inner.mpm),
            "bma" => Ok(&self.inner.bma),
            other => Err(PyValueError::new_err(format!("unknown estimator `{other}`, expected mpm or bma"))),
        }
    }
}

#[pymethods]
impl PyFit {
    #[getter]
    fn model_name(&self) -> &'static str {
        self.inner.summary.model.name()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.summary.labels.clone()
    }

    /// Posterior selection probabilities, one list per subgroup slot.
    #[getter]
    fn selection_probabilities(&self) -> Vec<Vec<f64>> {
        let s = &self.inner.summary;
        (0..s.n_subgroups()).map(|k| s.selection_probs(k).to_vec()).collect()
    }

    #[getter]
    fn marginal_means(&self) -> Vec<Vec<f64>> {
        let s = &self.inner.summary;
        s.marginal_mean.chunks(s.p).map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn mean_model_size(&self) -> Vec<f64> {
        self.inner.summary.mean_model_size.clone()
    }

    /// Zero-based indices chosen by the mean-model-size rule.
    #[getter]
    fn selected(&self) -> Vec<Vec<usize>> {
        posterior::select_variables(&self.inner.summary)
    }

    #[getter]
    fn mpm_coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.mpm.coefficients.clone()
    }

    #[getter]
    fn bma_coefficients(&self) -> Vec<Vec<f64>> {
        self.inner.bma.coefficients.clone()
    }

    /// Within-subgroup edge probabilities of slot `k` as a dense matrix.
    fn within_edge_probabilities(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        let s = &self.inner.summary;
        let upper = s
            .edge_prob_within
            .get(k)
            .ok_or_else(|| PyValueError::new_err("no within-subgroup edges for this slot"))?;
        let mut dense = vec![vec![0.0; s.p]; s.p];
        for i in 0..s.p {
            for j in (i + 1)..s.p {
                let v = upper[posterior::upper_index(s.p, i, j)];
                dense[i][j] = v;
                dense[j][i] = v;
            }
        }
        Ok(dense)
    }

    /// Between-subgroup edge probabilities per subgroup pair.
    #[getter]
    fn between_edge_probabilities(&self) -> Vec<Vec<f64>> {
        self.inner.summary.edge_prob_between.clone()
    }

    /// Predicted survival probability of one raw covariate vector.
    #[pyo3(signature = (x, subgroup, t, estimator="mpm"))]
    fn predict_survival(&self, x: Vec<f64>, subgroup: usize, t: f64, estimator: &str) -> PyResult<f64> {
        let model = self.model(estimator)?;
        let rec = SurvivalRecord::new(t, false, x, subgroup);
        let z = model.standardization.apply_record(&rec).map_err(py_err)?;
        evaluate::predict_survival(model, &z.covariates, subgroup, t).map_err(py_err)
    }

    /// Brier score of one subgroup of a raw test set at time `t`.
    #[pyo3(signature = (test, subgroup, t, estimator="mpm"))]
    fn brier_score(&self, test: &PyDataset, subgroup: usize, t: f64, estimator: &str) -> PyResult<f64> {
        let records = test.inner.subgroup_records(subgroup);
        evaluate::brier_score(self.model(estimator)?, &records, t).map_err(py_err)
    }

    /// Integrated Brier score per subgroup; `horizon=None` uses the
    /// default horizon of each subgroup.
    #[pyo3(signature = (test, horizon=None, estimator="mpm"))]
    fn integrated_brier(&self, test: &PyDataset, horizon: Option<f64>, estimator: &str) -> PyResult<Vec<(usize, f64, f64)>> {
        let model = self.model(estimator)?;
        let mut out = Vec::new();
        for label in 1..=test.inner.n_subgroups() {
            let records = test.inner.subgroup_records(label);
            let t = match horizon {
                Some(t) => t,
                None => evaluate::default_horizon(&records).map_err(py_err)?,
            };
            out.push((label, t, evaluate::integrated_brier(model, &records, t).map_err(py_err)?));
        }
        Ok(out)
    }

    /// Writes the chain, summaries and prediction models to `directory`.
    fn save(&self, directory: PathBuf) -> PyResult<()> {
        let hash = coxbvs::sampler::config_hash(&self.chain).map_err(py_err)?;
        let names: Vec<String> = Vec::new();
        experiment::write_fit(&directory, &self.inner, &self.chain, &hash, &names).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(model={}, p={}, records={})",
            self.inner.summary.model.name(),
            self.inner.summary.p,
            self.inner.summary.n_records
        )
    }
}

/// Training and test sets of the two-subgroup reference design.
#[pyfunction]
#[pyo3(signature = (p=20, n=100, seed=0))]
fn simulate_reference(p: usize, n: usize, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
    let design = SimulationDesign::reference(p, n, seed).map_err(py_err)?;
    let (train, test) = design.simulate_train_test().map_err(py_err)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Runs one chain on a raw training set.
#[pyfunction]
#[pyo3(signature = (train, model="coxbvs-sl", preset="simulation", iterations=2000, burn_in=1000, seed=0, thin=1))]
fn fit(
    py: Python<'_>,
    train: &PyDataset,
    model: &str,
    preset: &str,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    thin: usize,
) -> PyResult<PyFit> {
    let variant: ModelVariant = model.parse().map_err(py_err)?;
    let preset: PriorPreset = preset.parse().map_err(py_err)?;
    let priors = preset.priors(train.inner.p()).map_err(py_err)?;
    let settings = ChainSettings {
        iterations,
        burn_in,
        thin,
        ..ChainSettings::default()
    };
    let chain = settings.chain_config(variant, priors, seed);
    let data = train.inner.clone();
    let inner = py
        .detach(|| experiment::fit_model(&data, &chain))
        .map_err(py_err)?;
    Ok(PyFit { inner, chain })
}

/// Runs an experiment from its JSON configuration text. Returns the
/// number of failed fits.
#[pyfunction]
#[pyo3(signature = (config_json, out=None))]
fn run_experiment(py: Python<'_>, config_json: &str, out: Option<PathBuf>) -> PyResult<usize> {
    let config: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let outcome = py
        .detach(|| experiment::run_experiment(&config, out.as_deref()))
        .map_err(py_err)?;
    Ok(outcome.failures.len())
}

fn adjacency(p: usize, within: Vec<(usize, usize, usize)>, between: Vec<(usize, usize, usize)>, n_subgroups: usize) -> PyResult<JointAdjacency> {
    let mut g = JointAdjacency::empty(p, n_subgroups);
    for (s, i, j) in within {
        if s >= n_subgroups || i >= p || j >= p || i == j {
            return Err(PyValueError::new_err("within edge out of range"));
        }
        g.set_within(s, i, j, true);
    }
    for (r, s, i) in between {
        if r >= n_subgroups || s >= n_subgroups || r == s || i >= p {
            return Err(PyValueError::new_err("between edge out of range"));
        }
        g.set_between(r.min(s), r.max(s), i, true);
    }
    Ok(g)
}

/// Exact MRF inclusion marginals by enumeration (at most 20 indicators).
/// Edges use zero-based `(subgroup, i, j)` and `(r, s, covariate)` tuples.
#[pyfunction]
#[pyo3(signature = (p, n_subgroups, a, b_within, b_between, within=Vec::new(), between=Vec::new()))]
fn mrf_marginals(
    p: usize,
    n_subgroups: usize,
    a: f64,
    b_within: f64,
    b_between: f64,
    within: Vec<(usize, usize, usize)>,
    between: Vec<(usize, usize, usize)>,
) -> PyResult<Vec<f64>> {
    let g = adjacency(p, within, between, n_subgroups)?;
    let prior = MrfPrior { a, b_within, b_between };
    graph::brute_force_mrf_marginals(&g, &prior).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "coxbvs")]
fn coxbvs_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(simulate_reference, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(mrf_marginals, m)?)?;
    Ok(())
}

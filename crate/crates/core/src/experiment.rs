//! Configuration-driven pipeline: simulate or split data, fit every model
//! variant, evaluate prediction error and aggregate across replications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, stratified_split, write_dataset, ColumnSchema, Dataset, StandardizationParams};
use crate::error::{Error, Result};
use crate::evaluate::{default_horizon, integrated_brier, prediction_error_curve, PredictionModel};
use crate::posterior::{
    bma_coefficients, edge_rows, mpm_coefficients, select_variables, summarize, summary_rows, write_rows_csv,
    EdgeRow, PosteriorSummary, SummaryRow,
};
use crate::sampler::{config_hash, run_mcmc, write_chain, ChainConfig, ChainSamples, ModelData, ModelVariant, PriorConfig, PriorPreset};
use crate::simulate::SimulationDesign;

/// Points of each exported prediction-error curve.
const CURVE_POINTS: usize = 100;

/// Where the data of each replication comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignConfig {
    /// Reference two-subgroup design over a grid of dimensions and
    /// per-subgroup sample sizes; training and test sets are independent
    /// draws.
    Reference { p: Vec<usize>, n: Vec<usize> },
    /// A fully specified design; its seed is replaced per replication.
    Custom { design: SimulationDesign },
    /// A CSV file split into training and test sets per replication.
    Dataset {
        path: PathBuf,
        #[serde(default)]
        schema: ColumnSchema,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_train_fraction() -> f64 {
    0.8
}

/// Chain lengths shared by all fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "ten")]
    pub omega_thin: usize,
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            thin: 1,
            omega_thin: 10,
        }
    }
}

impl ChainSettings {
    pub fn full() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            ..Self::default()
        }
    }

    pub fn chain_config(&self, model: ModelVariant, priors: PriorConfig, seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed,
            model,
            thin: self.thin,
            omega_thin: self.omega_thin,
            priors,
        }
    }
}

/// One model variant and its hyperparameters. Explicit `priors` win over
/// `preset`; without either the experiment preset applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PriorPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<PriorConfig>,
    /// Label distinguishing several specs of the same variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ModelSpec {
    pub fn new(variant: ModelVariant) -> Self {
        Self {
            variant,
            preset: None,
            priors: None,
            label: None,
        }
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.variant.name().to_string())
    }

    pub fn resolve_priors(&self, default: PriorPreset, p: usize) -> Result<PriorConfig> {
        match self.priors {
            Some(priors) => Ok(priors),
            None => self.preset.unwrap_or(default).priors(p),
        }
    }
}

/// Evaluation horizon: `"default"` or `{"fixed": t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    #[default]
    Default,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: DesignConfig,
    pub replications: usize,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_preset")]
    pub preset: PriorPreset,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_preset() -> PriorPreset {
    PriorPreset::Simulation
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("at least one model is required".into()));
        }
        let mut names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        names.sort();
        names.dedup();
        if names.len() != self.models.len() {
            return Err(Error::InvalidParameter("model specs need distinct labels".into()));
        }
        if let DesignConfig::Reference { p, n } = &self.design {
            if p.is_empty() || n.is_empty() {
                return Err(Error::InvalidParameter("scenario grid is empty".into()));
            }
        }
        if self.chain.burn_in >= self.chain.iterations {
            return Err(Error::InvalidParameter("burn-in must be smaller than iterations".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        match &self.design {
            DesignConfig::Reference { p, n } => p
                .iter()
                .flat_map(|&p| n.iter().map(move |&n| Scenario { p: Some(p), n: Some(n) }))
                .collect(),
            DesignConfig::Custom { design } => vec![Scenario {
                p: Some(design.p),
                n: design.n_per_subgroup.first().copied(),
            }],
            DesignConfig::Dataset { .. } => vec![Scenario { p: None, n: None }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub p: Option<usize>,
    pub n: Option<usize>,
}

impl Scenario {
    pub fn tag(&self) -> String {
        match (self.p, self.n) {
            (Some(p), Some(n)) => format!("p{p}_n{n}"),
            _ => "dataset".into(),
        }
    }
}

/// Stable 64-bit seed derived from a base seed and a path of labels.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Training and test data of one replication of a scenario.
pub fn replication_data(
    config: &ExperimentConfig,
    scenario: &Scenario,
    replication: usize,
    loaded: Option<&Dataset>,
) -> Result<(Dataset, Dataset)> {
    let rep = replication.to_string();
    let tag = scenario.tag();
    let seed = derive_seed(config.seed, &["data", &tag, &rep]);
    match &config.design {
        DesignConfig::Reference { .. } => {
            let design = SimulationDesign::reference(
                scenario.p.expect("grid scenario"),
                scenario.n.expect("grid scenario"),
                seed,
            )?;
            design.simulate_train_test()
        }
        DesignConfig::Custom { design } => {
            let mut design = design.clone();
            design.seed = seed;
            design.simulate_train_test()
        }
        DesignConfig::Dataset { train_fraction, .. } => {
            let data = loaded.ok_or_else(|| Error::InvalidParameter("dataset not loaded".into()))?;
            stratified_split(data, *train_fraction, seed)
        }
    }
}

/// IBS of one subgroup's test records under one coefficient estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbsRow {
    pub scenario: String,
    pub replication: usize,
    pub model: String,
    pub subgroup: usize,
    pub estimator: String,
    pub horizon: f64,
    pub ibs: f64,
}

/// Everything produced by one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub scenario: Scenario,
    pub replication: usize,
    pub model: String,
    pub variant: ModelVariant,
    pub chain_seed: u64,
    pub summary: PosteriorSummary,
    pub selected: Vec<Vec<usize>>,
    pub mpm: Vec<Vec<f64>>,
    pub bma: Vec<Vec<f64>>,
    pub ibs: Vec<IbsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scenario: String,
    pub replication: usize,
    pub model: Option<String>,
    pub stage: String,
    pub error: String,
}

/// Fitted chain plus the artefacts derived from it.
pub struct FitOutput {
    pub samples: ChainSamples,
    pub summary: PosteriorSummary,
    pub standardization: StandardizationParams,
    pub mpm: PredictionModel,
    pub bma: PredictionModel,
}

/// Standardizes, fits one chain and builds the MPM and BMA prediction
/// models. `train` and `test` are raw.
pub fn fit_model(train: &Dataset, config: &ChainConfig) -> Result<FitOutput> {
    let params = StandardizationParams::fit(train, config.model.scope())?;
    let train_z = params.apply(train)?;
    let data = ModelData::prepare(&train_z, config.model)?;
    let samples = run_mcmc(&data, config)?;
    let summary = summarize(&samples)?;
    let mpm = PredictionModel::from_summary(
        &summary,
        mpm_coefficients(&summary),
        &samples.boundaries,
        &samples.baselines,
        params.clone(),
    )?;
    let bma = PredictionModel::from_summary(
        &summary,
        bma_coefficients(&samples)?,
        &samples.boundaries,
        &samples.baselines,
        params.clone(),
    )?;
    Ok(FitOutput {
        samples,
        summary,
        standardization: params,
        mpm,
        bma,
    })
}

/// Evenly spaced evaluation grid on `(0, horizon]`.
pub fn curve_grid(horizon: f64) -> Vec<f64> {
    (1..=CURVE_POINTS).map(|k| horizon * k as f64 / CURVE_POINTS as f64).collect()
}

/// Prediction-error curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub subgroup: usize,
    pub estimator: String,
    pub t: f64,
    pub brier: f64,
}

/// Scores both estimators on every subgroup of the raw test set.
pub fn evaluate_fit(
    fit: &FitOutput,
    test: &Dataset,
    horizon: Horizon,
) -> Result<(Vec<(usize, String, f64, f64)>, Vec<CurveRow>)> {
    let mut scores = Vec::new();
    let mut curves = Vec::new();
    for label in 1..=test.n_subgroups() {
        let records = test.subgroup_records(label);
        let t_star = match horizon {
            Horizon::Default => default_horizon(&records)?,
            Horizon::Fixed(t) => t,
        };
        for (name, model) in [("mpm", &fit.mpm), ("bma", &fit.bma)] {
            let ibs = integrated_brier(model, &records, t_star)?;
            scores.push((label, name.to_string(), t_star, ibs));
            let grid = curve_grid(t_star);
            for (t, bs) in grid.iter().zip(prediction_error_curve(model, &records, &grid)?) {
                curves.push(CurveRow {
                    subgroup: label,
                    estimator: name.into(),
                    t: *t,
                    brier: bs,
                });
            }
        }
    }
    Ok((scores, curves))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the standard artefacts of one fit into `dir`.
pub fn write_fit(dir: &Path, fit: &FitOutput, config: &ChainConfig, hash: &str, names: &[String]) -> Result<()> {
    create_dir(dir)?;
    let comment = format!("config_hash: {hash}");
    write_chain(dir.join("chain"), &fit.samples, config, hash)?;
    write_rows_csv(dir.join("summary.csv"), &summary_rows(&fit.summary, names), Some(&comment))?;
    write_rows_csv(dir.join("edges.csv"), &edge_rows(&fit.summary), Some(&comment))?;
    #[derive(Serialize)]
    struct FitJson<'a> {
        config_hash: &'a str,
        summary: &'a PosteriorSummary,
        selected: Vec<Vec<usize>>,
        standardization: &'a StandardizationParams,
        mpm: &'a PredictionModel,
        bma: &'a PredictionModel,
    }
    write_json(
        &dir.join("fit.json"),
        &FitJson {
            config_hash: hash,
            summary: &fit.summary,
            selected: select_variables(&fit.summary),
            standardization: &fit.standardization,
            mpm: &fit.mpm,
            bma: &fit.bma,
        },
    )
}

/// Fitted prediction models as stored in `fit.json`.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredFit {
    pub config_hash: String,
    pub summary: PosteriorSummary,
    pub selected: Vec<Vec<usize>>,
    pub standardization: StandardizationParams,
    pub mpm: PredictionModel,
    pub bma: PredictionModel,
}

pub fn read_fit(dir: &Path) -> Result<StoredFit> {
    let path = dir.join("fit.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct Job {
    scenario: Scenario,
    replication: usize,
    spec: usize,
}

/// Result of a whole experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    pub results: Vec<ReplicationResult>,
    pub failures: Vec<Failure>,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_job(
    config: &ExperimentConfig,
    job: &Job,
    data: &Result<(Dataset, Dataset)>,
    out: Option<&Path>,
    hash: &str,
) -> std::result::Result<ReplicationResult, Failure> {
    let spec = &config.models[job.spec];
    let tag = job.scenario.tag();
    let fail = |stage: &str, e: Error| Failure {
        scenario: tag.clone(),
        replication: job.replication,
        model: Some(spec.name()),
        stage: stage.into(),
        error: e.to_string(),
    };
    let (train, test) = data
        .as_ref()
        .map_err(|e| fail("data", Error::InvalidParameter(e.to_string())))?;
    let priors = spec.resolve_priors(config.preset, train.p()).map_err(|e| fail("config", e))?;
    let chain_seed = derive_seed(config.seed, &["chain", &tag, &job.replication.to_string(), &spec.name()]);
    let chain = config.chain.chain_config(spec.variant, priors, chain_seed);
    let fit = fit_model(train, &chain).map_err(|e| fail("fit", e))?;
    let (scores, curves) = evaluate_fit(&fit, test, config.horizon).map_err(|e| fail("evaluate", e))?;
    if let Some(root) = out {
        let dir = root.join(&tag).join(format!("rep{:02}", job.replication)).join(spec.name());
        write_fit(&dir, &fit, &chain, hash, train.covariate_names()).map_err(|e| fail("write", e))?;
        let comment = format!("config_hash: {hash}");
        write_rows_csv(dir.join("prediction_error.csv"), &curves, Some(&comment)).map_err(|e| fail("write", e))?;
    }
    let ibs = scores
        .into_iter()
        .map(|(subgroup, estimator, horizon, ibs)| IbsRow {
            scenario: tag.clone(),
            replication: job.replication,
            model: spec.name(),
            subgroup,
            estimator,
            horizon,
            ibs,
        })
        .collect();
    Ok(ReplicationResult {
        scenario: job.scenario,
        replication: job.replication,
        model: spec.name(),
        variant: spec.variant,
        chain_seed,
        selected: select_variables(&fit.summary),
        mpm: fit.mpm.coefficients.clone(),
        bma: fit.bma.coefficients.clone(),
        summary: fit.summary,
        ibs,
    })
}

/// Runs every (scenario × replication × model) fit on a bounded worker
/// pool. Failures are recorded and the remaining fits continue. With an
/// output directory, per-fit artefacts, the aggregated report and the
/// failure manifest are written there.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let hash = config.hash()?;
    let loaded = match &config.design {
        DesignConfig::Dataset { path, schema, .. } => Some(load_dataset(path, schema)?),
        _ => None,
    };
    if let Some(root) = out {
        create_dir(root)?;
        write_json(&root.join("config.json"), config)?;
    }
    let scenarios = config.scenarios();
    let mut data_jobs = Vec::new();
    for scenario in &scenarios {
        for replication in 0..config.replications {
            data_jobs.push((*scenario, replication));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    pool.install(|| -> Result<ExperimentOutcome> {
        let datasets: Vec<Result<(Dataset, Dataset)>> = data_jobs
            .par_iter()
            .map(|(scenario, rep)| replication_data(config, scenario, *rep, loaded.as_ref()))
            .collect();
        let mut failures = Vec::new();
        for ((scenario, rep), data) in data_jobs.iter().zip(&datasets) {
            match (data, out) {
                (Err(e), _) => failures.push(Failure {
                    scenario: scenario.tag(),
                    replication: *rep,
                    model: None,
                    stage: "data".into(),
                    error: e.to_string(),
                }),
                (Ok((train, test)), Some(root)) => {
                    let dir = root.join(scenario.tag()).join(format!("rep{rep:02}"));
                    create_dir(&dir)?;
                    let comment = format!("config_hash: {hash}");
                    write_dataset(dir.join("train.csv"), train, Some(&comment))?;
                    write_dataset(dir.join("test.csv"), test, Some(&comment))?;
                }
                _ => {}
            }
        }
        let jobs: Vec<(Job, usize)> = data_jobs
            .iter()
            .enumerate()
            .flat_map(|(d, (scenario, replication))| {
                (0..config.models.len()).map(move |spec| {
                    (
                        Job {
                            scenario: *scenario,
                            replication: *replication,
                            spec,
                        },
                        d,
                    )
                })
            })
            .collect();
        let outcomes: Vec<std::result::Result<ReplicationResult, Failure>> = jobs
            .par_iter()
            .filter(|(_, d)| datasets[*d].is_ok())
            .map(|(job, d)| run_job(config, job, &datasets[*d], out, &hash))
            .collect();
        let mut results = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => results.push(r),
                Err(f) => failures.push(f),
            }
        }
        let outcome = ExperimentOutcome {
            config_hash: hash.clone(),
            results,
            failures,
        };
        if let Some(root) = out {
            write_report(root, &report(&outcome.results), &hash)?;
            write_json(&root.join("failures.json"), &outcome.failures)?;
            write_json(&root.join("results.json"), &outcome)?;
        }
        Ok(outcome)
    })
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Summary rows averaged over the replications of one scenario and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRow {
    pub scenario: String,
    pub model: String,
    pub replications: usize,
    pub subgroup: usize,
    pub covariate: usize,
    pub name: String,
    pub selection_prob: f64,
    pub marginal_mean: f64,
    pub marginal_sd: f64,
    pub conditional_mean: Option<f64>,
    pub conditional_sd: Option<f64>,
}

impl AggregatedRow {
    pub fn row(&self) -> SummaryRow {
        SummaryRow {
            subgroup: self.subgroup,
            covariate: self.covariate,
            name: self.name.clone(),
            selection_prob: self.selection_prob,
            marginal_mean: self.marginal_mean,
            marginal_sd: self.marginal_sd,
            conditional_mean: self.conditional_mean,
            conditional_sd: self.conditional_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedEdgeRow {
    pub scenario: String,
    pub model: String,
    pub replications: usize,
    pub kind: String,
    pub subgroup_a: usize,
    pub subgroup_b: usize,
    pub i: usize,
    pub j: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summaries: Vec<AggregatedRow>,
    pub edges: Vec<AggregatedEdgeRow>,
    pub ibs: Vec<IbsRow>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Averages summaries across replications per (scenario, model). A
/// conditional statistic is averaged over the replications where it is
/// defined. IBS values stay per split.
pub fn report(results: &[ReplicationResult]) -> Report {
    let mut cells: BTreeMap<(Scenario, String), Vec<&ReplicationResult>> = BTreeMap::new();
    for r in results {
        cells.entry((r.scenario, r.model.clone())).or_default().push(r);
    }
    let mut summaries = Vec::new();
    let mut edges = Vec::new();
    for ((scenario, model), reps) in &cells {
        let k = reps.len();
        let rows: Vec<Vec<SummaryRow>> = reps.iter().map(|r| summary_rows(&r.summary, &[])).collect();
        for idx in 0..rows[0].len() {
            let col = |f: &dyn Fn(&SummaryRow) -> f64| mean(&rows.iter().map(|r| f(&r[idx])).collect::<Vec<_>>());
            let opt = |f: &dyn Fn(&SummaryRow) -> Option<f64>| {
                let v: Vec<f64> = rows.iter().filter_map(|r| f(&r[idx])).collect();
                (!v.is_empty()).then(|| mean(&v))
            };
            let first = &rows[0][idx];
            summaries.push(AggregatedRow {
                scenario: scenario.tag(),
                model: model.clone(),
                replications: k,
                subgroup: first.subgroup,
                covariate: first.covariate,
                name: first.name.clone(),
                selection_prob: col(&|r| r.selection_prob),
                marginal_mean: col(&|r| r.marginal_mean),
                marginal_sd: col(&|r| r.marginal_sd),
                conditional_mean: opt(&|r| r.conditional_mean),
                conditional_sd: opt(&|r| r.conditional_sd),
            });
        }
        let edge_tables: Vec<Vec<EdgeRow>> = reps.iter().map(|r| edge_rows(&r.summary)).collect();
        for idx in 0..edge_tables[0].len() {
            let first = &edge_tables[0][idx];
            edges.push(AggregatedEdgeRow {
                scenario: scenario.tag(),
                model: model.clone(),
                replications: k,
                kind: first.kind.clone(),
                subgroup_a: first.subgroup_a,
                subgroup_b: first.subgroup_b,
                i: first.i,
                j: first.j,
                probability: mean(&edge_tables.iter().map(|t| t[idx].probability).collect::<Vec<_>>()),
            });
        }
    }
    let mut ibs: Vec<IbsRow> = results.iter().flat_map(|r| r.ibs.iter().cloned()).collect();
    ibs.sort_by(|a, b| {
        (&a.scenario, &a.model, a.replication, a.subgroup, &a.estimator).cmp(&(
            &b.scenario,
            &b.model,
            b.replication,
            b.subgroup,
            &b.estimator,
        ))
    });
    Report { summaries, edges, ibs }
}

pub fn write_report(dir: &Path, report: &Report, hash: &str) -> Result<()> {
    create_dir(dir)?;
    let comment = format!("config_hash: {hash}");
    write_rows_csv(dir.join("report_summary.csv"), &report.summaries, Some(&comment))?;
    write_rows_csv(dir.join("report_edges.csv"), &report.edges, Some(&comment))?;
    write_rows_csv(dir.join("report_ibs.csv"), &report.ibs, Some(&comment))?;
    #[derive(Serialize)]
    struct ReportJson<'a> {
        config_hash: &'a str,
        report: &'a Report,
    }
    write_json(&dir.join("report.json"), &ReportJson { config_hash: hash, report })
}

/// Reloads `results.json` written by [`run_experiment`].
pub fn read_outcome(dir: &Path) -> Result<ExperimentOutcome> {
    let path = dir.join("results.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::read_rows_csv;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            design: DesignConfig::Reference { p: vec![10], n: vec![30] },
            replications: 1,
            models: ModelVariant::ALL.iter().map(|&v| ModelSpec::new(v)).collect(),
            chain: ChainSettings {
                iterations: 200,
                burn_in: 100,
                thin: 1,
                omega_thin: 10,
            },
            horizon: Horizon::Default,
            preset: PriorPreset::Simulation,
            seed: 5,
            threads: Some(2),
        }
    }

    #[test]
    fn scenario_grid_expands() {
        let mut c = tiny_config();
        c.design = DesignConfig::Reference {
            p: vec![20, 100],
            n: vec![50, 75, 100, 150],
        };
        let s = c.scenarios();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].tag(), "p20_n50");
        assert_eq!(s[7].tag(), "p100_n150");
    }

    #[test]
    fn config_json_round_trip() {
        let c = tiny_config();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let minimal = r#"{"design": {"kind": "reference", "p": [20], "n": [100]},
            "replications": 10, "models": [{"variant": "coxbvs-sl"}, {"variant": "pooled"}],
            "horizon": {"fixed": 4.0}}"#;
        let parsed: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.chain, ChainSettings::default());
        assert_eq!(parsed.horizon, Horizon::Fixed(4.0));
        assert!(parsed.validate().is_ok());
    }

    #[test]
    fn validation_rejects_empty_runs() {
        let mut c = tiny_config();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.models.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, &["a", "b"]), derive_seed(1, &["ab"]));
        assert_eq!(derive_seed(1, &["a"]), derive_seed(1, &["a"]));
    }

    #[test]
    fn smoke_run_writes_artifact_tree() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let outcome = run_experiment(&config, Some(dir.path())).unwrap();
        assert!(outcome.all_succeeded(), "{:?}", outcome.failures);
        assert_eq!(outcome.results.len(), 4);
        let rep = dir.path().join("p10_n30").join("rep00");
        for f in ["train.csv", "test.csv"] {
            assert!(rep.join(f).exists());
        }
        for m in ModelVariant::ALL {
            for f in ["chain.bin", "chain.json", "summary.csv", "edges.csv", "fit.json", "prediction_error.csv"] {
                assert!(rep.join(m.name()).join(f).exists(), "{m} {f}");
            }
        }
        for f in ["report_summary.csv", "report_edges.csv", "report_ibs.csv", "report.json", "failures.json", "results.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let rows: Vec<AggregatedRow> = read_rows_csv(dir.path().join("report_summary.csv")).unwrap();
        assert_eq!(rows, report(&outcome.results).summaries);
        let ibs: Vec<IbsRow> = read_rows_csv(dir.path().join("report_ibs.csv")).unwrap();
        assert_eq!(ibs.len(), 4 * 2 * 2);
        assert_eq!(read_outcome(dir.path()).unwrap(), outcome);
    }

    #[test]
    fn single_replication_report_is_identity() {
        let outcome = run_experiment(&tiny_config(), None).unwrap();
        let rep = report(&outcome.results);
        let r = outcome.results.iter().find(|r| r.variant == ModelVariant::CoxBvsSl).unwrap();
        let rows: Vec<&AggregatedRow> = rep.summaries.iter().filter(|a| a.model == "coxbvs-sl").collect();
        for (a, b) in rows.iter().zip(summary_rows(&r.summary, &[])) {
            assert_eq!(a.row(), b);
        }
    }

    #[test]
    fn two_replications_average() {
        let outcome = run_experiment(&tiny_config(), None).unwrap();
        let mut a = outcome.results[0].clone();
        let mut b = a.clone();
        a.summary.selection_prob[0] = 0.2;
        b.summary.selection_prob[0] = 0.6;
        b.replication = 1;
        let rep = report(&[a, b]);
        assert!((rep.summaries[0].selection_prob - 0.4).abs() < 1e-15);
        assert_eq!(rep.summaries[0].replications, 2);
    }
}

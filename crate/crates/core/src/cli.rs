//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, write_dataset, ColumnSchema};
use crate::error::{Error, Result};
use crate::evaluate::{default_horizon, integrated_brier, prediction_error_curve};
use crate::experiment::{
    curve_grid, fit_model, read_fit, read_outcome, report, run_experiment, write_fit, write_report,
    ChainSettings, ExperimentConfig, ExperimentOutcome, IbsRow, ModelSpec,
};
use crate::posterior::write_rows_csv;
use crate::sampler::{config_hash, diagnostics, ModelVariant, PriorPreset};
use crate::simulate::SimulationDesign;

#[derive(Debug, Parser)]
#[command(name = "coxbvs", version, about = "Bayesian Cox models with graph-structured variable selection across subgroups")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base random seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Hyperparameter preset: `simulation` or `case-study`.
    #[arg(long, global = true)]
    pub preset: Option<PriorPreset>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw training and test sets from a simulation design.
    Simulate {
        /// Covariates of the reference design (ignored with --config).
        #[arg(long, default_value_t = 20)]
        p: usize,
        /// Patients per subgroup in each set (ignored with --config).
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Run one MCMC chain on a training set.
    Fit {
        /// Training CSV.
        #[arg(long)]
        data: PathBuf,
        /// Model variant (overrides the configuration).
        #[arg(long)]
        model: Option<ModelVariant>,
        /// Total iterations (overrides the configuration).
        #[arg(long)]
        iterations: Option<usize>,
        /// Burn-in iterations (overrides the configuration).
        #[arg(long)]
        burn_in: Option<usize>,
        /// Use the long chain length.
        #[arg(long)]
        full: bool,
    },
    /// Score a fitted model on a test set.
    Evaluate {
        /// Directory written by `fit`.
        #[arg(long)]
        fit_dir: PathBuf,
        /// Test CSV.
        #[arg(long)]
        test: PathBuf,
        /// Evaluation horizon; defaults per subgroup to the largest test
        /// time with censoring survival at least 0.05.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Aggregate the results of one or more experiment directories.
    Report {
        /// Directories written by `run-experiment`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Simulate or split, fit every model, evaluate and report.
    RunExperiment {
        /// Worker threads (overrides the configuration).
        #[arg(long)]
        threads: Option<usize>,
        /// Use the long chain length.
        #[arg(long)]
        full: bool,
    },
}

/// Configuration of the `fit` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub schema: ColumnSchema,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "simulation")]
    pub preset: PriorPreset,
}

fn simulation() -> PriorPreset {
    PriorPreset::Simulation
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::new(ModelVariant::CoxBvsSl),
            chain: ChainSettings::default(),
            schema: ColumnSchema::default(),
            seed: 0,
            preset: PriorPreset::Simulation,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn out_dir(global: &GlobalArgs) -> Result<PathBuf> {
    let dir = global.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Executes a parsed command line. Returns `Ok(false)` when the command
/// completed but some replications failed.
pub fn run(cli: Cli) -> Result<bool> {
    let g = cli.global;
    match cli.command {
        Command::Simulate { p, n } => {
            let mut design = match &g.config {
                Some(path) => read_json::<SimulationDesign>(path)?,
                None => SimulationDesign::reference(p, n, 0)?,
            };
            if let Some(seed) = g.seed {
                design.seed = seed;
            }
            let (train, test) = design.simulate_train_test()?;
            let out = out_dir(&g)?;
            let hash = config_hash(&design)?;
            let comment = format!("config_hash: {hash}");
            write_dataset(out.join("train.csv"), &train, Some(&comment))?;
            write_dataset(out.join("test.csv"), &test, Some(&comment))?;
            #[derive(Serialize)]
            struct Sidecar<'a> {
                config_hash: &'a str,
                seed: u64,
                design: &'a SimulationDesign,
            }
            write_json(
                &out.join("design.json"),
                &Sidecar {
                    config_hash: &hash,
                    seed: design.seed,
                    design: &design,
                },
            )?;
            Ok(true)
        }
        Command::Fit {
            data,
            model,
            iterations,
            burn_in,
            full,
        } => {
            let mut cfg = match &g.config {
                Some(path) => read_json::<FitConfig>(path)?,
                None => FitConfig::default(),
            };
            if let Some(v) = model {
                cfg.model = ModelSpec::new(v);
            }
            if full {
                cfg.chain = ChainSettings {
                    thin: cfg.chain.thin,
                    omega_thin: cfg.chain.omega_thin,
                    ..ChainSettings::full()
                };
            }
            if let Some(it) = iterations {
                cfg.chain.iterations = it;
            }
            if let Some(b) = burn_in {
                cfg.chain.burn_in = b;
            }
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            if let Some(preset) = g.preset {
                cfg.preset = preset;
                cfg.model.preset = Some(preset);
                cfg.model.priors = None;
            }
            let train = load_dataset(&data, &cfg.schema)?;
            let priors = cfg.model.resolve_priors(cfg.preset, train.p())?;
            let chain = cfg.chain.chain_config(cfg.model.variant, priors, cfg.seed);
            let fit = fit_model(&train, &chain)?;
            let out = out_dir(&g)?;
            let hash = config_hash(&chain)?;
            write_fit(&out, &fit, &chain, &hash, train.covariate_names())?;
            #[derive(Serialize)]
            struct DiagJson<'a, T: Serialize> {
                config_hash: &'a str,
                coefficients: T,
            }
            write_json(
                &out.join("diagnostics.json"),
                &DiagJson {
                    config_hash: &hash,
                    coefficients: diagnostics(&fit.samples)?,
                },
            )?;
            write_json(&out.join("standardization.json"), &fit.standardization)?;
            Ok(true)
        }
        Command::Evaluate { fit_dir, test, horizon } => {
            let stored = read_fit(&fit_dir)?;
            let schema = match &g.config {
                Some(path) => read_json::<FitConfig>(path)?.schema,
                None => ColumnSchema::default(),
            };
            let test = load_dataset(&test, &schema)?;
            let out = out_dir(&g)?;
            let comment = format!("config_hash: {}", stored.config_hash);
            let mut ibs_rows = Vec::new();
            #[derive(Serialize)]
            struct CurveRow {
                subgroup: usize,
                estimator: &'static str,
                t: f64,
                bs: f64,
            }
            let mut curve = Vec::new();
            for label in 1..=test.n_subgroups() {
                let records = test.subgroup_records(label);
                let t_star = match horizon {
                    Some(t) => t,
                    None => default_horizon(&records)?,
                };
                let grid = curve_grid(t_star);
                for (name, model) in [("mpm", &stored.mpm), ("bma", &stored.bma)] {
                    let ibs = integrated_brier(model, &records, t_star)?;
                    ibs_rows.push(IbsRow {
                        scenario: "cli".into(),
                        replication: 0,
                        model: stored.summary.model.name().into(),
                        subgroup: label,
                        estimator: name.into(),
                        horizon: t_star,
                        ibs,
                    });
                    for (t, bs) in grid.iter().zip(prediction_error_curve(model, &records, &grid)?) {
                        curve.push(CurveRow {
                            subgroup: label,
                            estimator: name,
                            t: *t,
                            bs,
                        });
                    }
                }
            }
            write_rows_csv(out.join("prediction_error.csv"), &curve, Some(&comment))?;
            write_rows_csv(out.join("ibs.csv"), &ibs_rows, Some(&comment))?;
            Ok(true)
        }
        Command::Report { inputs } => {
            let mut results = Vec::new();
            let mut hashes = Vec::new();
            let mut ok = true;
            for dir in &inputs {
                let outcome: ExperimentOutcome = read_outcome(dir)?;
                ok &= outcome.all_succeeded();
                hashes.push(outcome.config_hash.clone());
                results.extend(outcome.results);
            }
            let hash = if hashes.len() == 1 {
                hashes.remove(0)
            } else {
                config_hash(&hashes)?
            };
            let out = out_dir(&g)?;
            write_report(&out, &report(&results), &hash)?;
            Ok(ok)
        }
        Command::RunExperiment { threads, full } => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("run-experiment requires --config".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            if let Some(preset) = g.preset {
                cfg.preset = preset;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            if full {
                cfg.chain = ChainSettings {
                    thin: cfg.chain.thin,
                    omega_thin: cfg.chain.omega_thin,
                    ..ChainSettings::full()
                };
            }
            let out = out_dir(&g)?;
            let outcome = run_experiment(&cfg, Some(&out))?;
            for f in &outcome.failures {
                eprintln!(
                    "failed: {} rep {} {} [{}]: {}",
                    f.scenario,
                    f.replication,
                    f.model.as_deref().unwrap_or("-"),
                    f.stage,
                    f.error
                );
            }
            Ok(outcome.all_succeeded())
        }
    }
}

/// Parses `std::env::args`, runs the command and returns the process
/// exit code: 0 on full success, 1 when some replications failed, 2 on
/// an error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from([
            "coxbvs", "fit", "--data", "x.csv", "--seed", "7", "--preset", "case-study", "--out", "o", "--model",
            "pooled",
        ])
        .unwrap();
        assert_eq!(cli.global.seed, Some(7));
        assert_eq!(cli.global.preset, Some(PriorPreset::CaseStudy));
        match cli.command {
            Command::Fit { model, .. } => assert_eq!(model, Some(ModelVariant::Pooled)),
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn run_experiment_without_config_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(["coxbvs", "run-experiment", "--out", out]), 2);
    }

    #[test]
    fn fit_config_defaults() {
        let cfg: FitConfig = serde_json::from_str(r#"{"model": {"variant": "subgroup"}}"#).unwrap();
        assert_eq!(cfg.chain, ChainSettings::default());
        assert_eq!(cfg.preset, PriorPreset::Simulation);
    }
}

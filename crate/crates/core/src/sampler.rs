//! MCMC orchestration: data preparation, chain initialisation, the
//! five-step iteration, sample storage and single-chain diagnostics.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coxmodel::{
    fit_weibull_baseline, grouped_log_likelihood_lp, update_beta, update_gamma, update_hazard_increments,
    BaselineHazardPrior, CoxSubgroupState, InclusionPrior, SelectionPrior,
};
use crate::data::{build_grouped_data, covariate_matrix, Dataset, GroupedData, Scope};
use crate::error::{Error, Result};
use crate::graph::{update_graph, update_precision_block, GraphPrior, JointAdjacency, MrfPrior, PrecisionState};
use crate::rng::{gamma, stream, StreamRng};
use crate::simulate::WeibullParams;

/// Stream reserved for the joint graph updates.
const GRAPH_STREAM: u64 = 0;
/// Offset of the per-subgroup precision streams.
const OMEGA_STREAM_OFFSET: u64 = 1 << 32;
/// Initial random-walk scale of the fallback coefficient proposal.
const INITIAL_PROPOSAL_SD: f64 = 0.1;
/// Robbins–Monro step at burn-in iteration t is `ADAPT_RATE / (t + 1)^0.6`.
const ADAPT_RATE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// MRF prior over the joint graph with within and between edges.
    #[serde(rename = "coxbvs-sl")]
    CoxBvsSl,
    /// MRF prior using only within-subgroup edges.
    SubStruct,
    /// Separate models with independent Bernoulli inclusion priors.
    Subgroup,
    /// One model on all subgroups combined.
    Pooled,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [Self::CoxBvsSl, Self::SubStruct, Self::Subgroup, Self::Pooled];

    pub fn name(self) -> &'static str {
        match self {
            Self::CoxBvsSl => "coxbvs-sl",
            Self::SubStruct => "sub-struct",
            Self::Subgroup => "subgroup",
            Self::Pooled => "pooled",
        }
    }

    pub fn learns_graph(self) -> bool {
        matches!(self, Self::CoxBvsSl | Self::SubStruct)
    }

    /// Standardization scope the variant is fitted on.
    pub fn scope(self) -> Scope {
        if self == Self::Pooled {
            Scope::Pooled
        } else {
            Scope::PerSubgroup
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model variant `{s}`")))
    }
}

/// Every fixed hyperparameter of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub graph: GraphPrior,
    pub mrf: MrfPrior,
    pub selection: SelectionPrior,
    /// Concentration of the gamma-process baseline prior.
    pub a0: f64,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.mrf.validate()?;
        self.selection.validate()?;
        if !(self.a0 > 0.0) {
            return Err(Error::InvalidParameter(format!("a0 must be positive, got {}", self.a0)));
        }
        Ok(())
    }
}

/// Named hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorPreset {
    Simulation,
    CaseStudy,
}

impl PriorPreset {
    pub fn priors(self, p: usize) -> Result<PriorConfig> {
        if p < 4 {
            return Err(Error::InvalidParameter(format!(
                "edge probability 2/(p-1) needs p >= 4, got p = {p}"
            )));
        }
        let pi_edge = 2.0 / (p as f64 - 1.0);
        let selection = |pi| SelectionPrior {
            tau: 0.0375,
            c: 20.0,
            bernoulli_pi: pi,
        };
        let config = match self {
            Self::Simulation => PriorConfig {
                graph: GraphPrior {
                    nu0: 0.1,
                    nu1: 10.0,
                    lambda: 1.0,
                    pi_edge,
                },
                mrf: MrfPrior {
                    a: -4.0,
                    b_within: 1.0,
                    b_between: 1.0,
                },
                selection: selection(0.02),
                a0: 2.0,
            },
            Self::CaseStudy => PriorConfig {
                graph: GraphPrior {
                    nu0: 0.6,
                    nu1: 360.0,
                    lambda: 1.0,
                    pi_edge,
                },
                mrf: MrfPrior {
                    a: -1.75,
                    b_within: 0.5,
                    b_between: 0.5,
                },
                selection: selection(0.2),
                a0: 2.0,
            },
        };
        Ok(config)
    }
}

impl std::str::FromStr for PriorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulation" => Ok(Self::Simulation),
            "case-study" => Ok(Self::CaseStudy),
            _ => Err(Error::InvalidParameter(format!("unknown preset `{s}`"))),
        }
    }
}

fn default_thin() -> usize {
    1
}

fn default_omega_thin() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub model: ModelVariant,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Ω is stored on every `omega_thin`-th stored record.
    #[serde(default = "default_omega_thin")]
    pub omega_thin: usize,
    pub priors: PriorConfig,
}

impl ChainConfig {
    /// Desk-scale chain: 2000 iterations, 1000 burn-in.
    pub fn desk(model: ModelVariant, priors: PriorConfig, seed: u64) -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            seed,
            model,
            thin: 1,
            omega_thin: default_omega_thin(),
            priors,
        }
    }

    /// Full-length chain: 20 000 iterations, 10 000 burn-in.
    pub fn full(model: ModelVariant, priors: PriorConfig, seed: u64) -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            ..Self::desk(model, priors, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.omega_thin == 0 {
            return Err(Error::InvalidParameter("thinning intervals must be at least 1".into()));
        }
        self.priors.validate()
    }

    pub fn n_records(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

// ---------------------------------------------------------------------------
// Prepared data
// ---------------------------------------------------------------------------

/// Everything the sampler needs about one subgroup.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupData {
    /// Original 1-based subgroup label; also selects the RNG stream.
    pub label: usize,
    pub x: DMatrix<f64>,
    pub grouped: GroupedData,
    /// `XᵀX`.
    pub scatter: DMatrix<f64>,
    pub baseline: WeibullParams,
}

impl SubgroupData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub p: usize,
    pub subgroups: Vec<SubgroupData>,
}

impl ModelData {
    /// Groups the (already standardized) training data and fits the
    /// Weibull baseline of every subgroup. The pooled variant sees all
    /// subgroups as one.
    pub fn prepare(train: &Dataset, variant: ModelVariant) -> Result<Self> {
        let data = if variant == ModelVariant::Pooled {
            train.pooled()
        } else {
            train.clone()
        };
        let p = data.p();
        let mut subgroups = Vec::with_capacity(data.n_subgroups());
        for label in 1..=data.n_subgroups() {
            let records = data.subgroup_records(label);
            let grouped = build_grouped_data(&records)?;
            let times: Vec<f64> = records.iter().map(|r| r.time).collect();
            let events: Vec<bool> = records.iter().map(|r| r.event).collect();
            let baseline = fit_weibull_baseline(&times, &events)?;
            let x = covariate_matrix(&records, p);
            let scatter = x.transpose() * &x;
            subgroups.push(SubgroupData {
                label,
                x,
                grouped,
                scatter,
                baseline,
            });
        }
        Ok(Self { p, subgroups })
    }

    /// Subgroups without observations: the chain then samples the prior.
    pub fn prior_only(p: usize, n_subgroups: usize, boundaries: Vec<f64>, baseline: WeibullParams) -> Result<Self> {
        let grouped = GroupedData::empty(boundaries)?;
        let subgroups = (1..=n_subgroups)
            .map(|label| SubgroupData {
                label,
                x: DMatrix::zeros(0, p),
                grouped: grouped.clone(),
                scatter: DMatrix::zeros(p, p),
                baseline,
            })
            .collect();
        Ok(Self { p, subgroups })
    }

    /// The listed subgroups (by position) with their labels kept, so their
    /// random streams are unchanged.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            p: self.p,
            subgroups: positions.iter().map(|&k| self.subgroups[k].clone()).collect(),
        }
    }

    pub fn n_subgroups(&self) -> usize {
        self.subgroups.len()
    }
}

// ---------------------------------------------------------------------------
// Chain state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub adjacency: JointAdjacency,
    pub precision: PrecisionState,
    /// Subgroup-major inclusion indicators of all subgroups.
    pub gamma: Vec<bool>,
    pub subgroups: Vec<CoxSubgroupState>,
}

/// Random streams of one chain: one for the graph, one per subgroup for
/// its Cox parameters and one per subgroup for its precision matrix.
pub struct ChainRngs {
    pub graph: StreamRng,
    pub cox: Vec<StreamRng>,
    pub omega: Vec<StreamRng>,
}

impl ChainRngs {
    pub fn new(seed: u64, data: &ModelData) -> Self {
        Self {
            graph: stream(seed, GRAPH_STREAM),
            cox: data.subgroups.iter().map(|sg| stream(seed, sg.label as u64)).collect(),
            omega: data
                .subgroups
                .iter()
                .map(|sg| stream(seed, OMEGA_STREAM_OFFSET + sg.label as u64))
                .collect(),
        }
    }
}

/// Empty graph, identity precision, no variable included, `β ~ U[−0.02, 0.02]`
/// and `h ~ G(1, 1)`.
pub fn init_chain(data: &ModelData, rngs: &mut ChainRngs) -> Result<ChainState> {
    let p = data.p;
    let s = data.n_subgroups();
    let mut subgroups = Vec::with_capacity(s);
    for (sg, rng) in data.subgroups.iter().zip(rngs.cox.iter_mut()) {
        let beta = (0..p).map(|_| rng.random_range(-0.02..=0.02)).collect();
        let h = (0..sg.grouped.n_intervals()).map(|_| gamma(rng, 1.0, 1.0)).collect();
        subgroups.push(CoxSubgroupState::new(
            beta,
            vec![false; p],
            h,
            vec![INITIAL_PROPOSAL_SD; p],
            &sg.x,
        )?);
    }
    Ok(ChainState {
        adjacency: JointAdjacency::empty(p, s),
        precision: PrecisionState::identity(p, s),
        gamma: vec![false; p * s],
        subgroups,
    })
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// Post-burn-in draws of one chain, stored record-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub model: ModelVariant,
    pub p: usize,
    pub labels: Vec<usize>,
    pub boundaries: Vec<Vec<f64>>,
    pub baselines: Vec<BaselineHazardPrior>,
    /// Zero-based iteration index of each stored record.
    pub iterations: Vec<u64>,
    /// `[record][subgroup][covariate]`.
    pub beta: Vec<f64>,
    /// `[record][subgroup][covariate]`.
    pub gamma: Vec<bool>,
    /// `[record]` then every subgroup's increments in turn.
    pub h: Vec<f64>,
    /// `[record][subgroup]`.
    pub log_likelihood: Vec<f64>,
    /// `[record][subgroup][i < j]`; empty for models without a graph.
    pub within_edges: Vec<bool>,
    /// `[record][pair][covariate]`; empty for models without a graph.
    pub between_edges: Vec<bool>,
    pub omega_iterations: Vec<u64>,
    /// `[omega record][subgroup][upper triangle incl. diagonal]`.
    pub omega: Vec<f64>,
    /// Metropolis–Hastings acceptance rate of every coefficient after burn-in.
    pub acceptance: Vec<f64>,
}

impl ChainSamples {
    pub fn n_records(&self) -> usize {
        self.iterations.len()
    }

    pub fn n_subgroups(&self) -> usize {
        self.labels.len()
    }

    pub fn has_graph(&self) -> bool {
        self.model.learns_graph()
    }

    pub fn n_intervals(&self) -> Vec<usize> {
        self.boundaries.iter().map(|b| b.len() - 1).collect()
    }

    fn h_per_record(&self) -> usize {
        self.n_intervals().iter().sum()
    }

    pub fn n_within_pairs(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn n_between_pairs(&self) -> usize {
        let s = self.n_subgroups();
        s * s.saturating_sub(1) / 2
    }

    pub fn beta_at(&self, r: usize, s: usize, i: usize) -> f64 {
        self.beta[(r * self.n_subgroups() + s) * self.p + i]
    }

    pub fn gamma_at(&self, r: usize, s: usize, i: usize) -> bool {
        self.gamma[(r * self.n_subgroups() + s) * self.p + i]
    }

    pub fn log_likelihood_at(&self, r: usize, s: usize) -> f64 {
        self.log_likelihood[r * self.n_subgroups() + s]
    }

    /// Increments of subgroup `s` at record `r`.
    pub fn h_at(&self, r: usize, s: usize) -> &[f64] {
        let sizes = self.n_intervals();
        let offset = r * self.h_per_record() + sizes[..s].iter().sum::<usize>();
        &self.h[offset..offset + sizes[s]]
    }

    /// Within-edge bits of subgroup `s` at record `r`, upper triangle order.
    pub fn within_at(&self, r: usize, s: usize) -> &[bool] {
        let k = self.n_within_pairs();
        let offset = (r * self.n_subgroups() + s) * k;
        &self.within_edges[offset..offset + k]
    }

    pub fn between_at(&self, r: usize, pair: usize) -> &[bool] {
        let offset = (r * self.n_between_pairs() + pair) * self.p;
        &self.between_edges[offset..offset + self.p]
    }

    /// Precision matrix of subgroup `s` at omega record `k`.
    pub fn omega_at(&self, k: usize, s: usize) -> DMatrix<f64> {
        let len = self.p * (self.p + 1) / 2;
        let offset = (k * self.n_subgroups() + s) * len;
        let tri = &self.omega[offset..offset + len];
        let mut m = DMatrix::zeros(self.p, self.p);
        let mut idx = 0;
        for i in 0..self.p {
            for j in i..self.p {
                m[(i, j)] = tri[idx];
                m[(j, i)] = tri[idx];
                idx += 1;
            }
        }
        m
    }

    pub fn n_omega_records(&self) -> usize {
        self.omega_iterations.len()
    }

    /// Series of `β_{s,i}` over the stored records.
    pub fn beta_series(&self, s: usize, i: usize) -> Vec<f64> {
        (0..self.n_records()).map(|r| self.beta_at(r, s, i)).collect()
    }

    fn push(&mut self, iteration: usize, state: &ChainState, data: &ModelData, store_omega: bool) -> Result<()> {
        self.iterations.push(iteration as u64);
        for sg in &state.subgroups {
            self.beta.extend_from_slice(&sg.beta);
            self.gamma.extend_from_slice(&sg.gamma);
        }
        for sg in &state.subgroups {
            self.h.extend_from_slice(&sg.h);
        }
        for (sg, d) in state.subgroups.iter().zip(&data.subgroups) {
            let ll = grouped_log_likelihood_lp(&sg.linear_predictor, &sg.h, &d.grouped)?;
            self.log_likelihood.push(ll);
        }
        if self.has_graph() {
            for s in 0..self.n_subgroups() {
                self.within_edges.extend(state.adjacency.within_upper(s));
            }
            for pair in 0..state.adjacency.n_pairs() {
                self.between_edges.extend_from_slice(state.adjacency.between_row(pair));
            }
            if store_omega {
                self.omega_iterations.push(iteration as u64);
                for omega in &state.precision.omegas {
                    for i in 0..self.p {
                        for j in i..self.p {
                            self.omega.push(omega[(i, j)]);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn state_dump(state: &ChainState) -> String {
    state
        .subgroups
        .iter()
        .enumerate()
        .map(|(s, sg)| {
            let max_beta = sg.beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            let active = sg.gamma.iter().filter(|&&g| g).count();
            let h_range = sg
                .h
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            format!(
                "subgroup {s}: max|beta| = {max_beta:.4e}, {active} active, h in [{:.3e}, {:.3e}]",
                h_range.0, h_range.1
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs one chain: per iteration (1) Ω sweeps, (2) graph scan, (3) γ scan,
/// (4) β Metropolis–Hastings scan, (5) baseline hazard redraw. Steps 1–2
/// are skipped for models without a graph, and between-subgroup edges stay
/// empty for the within-only variant.
pub fn run_mcmc(data: &ModelData, config: &ChainConfig) -> Result<ChainSamples> {
    config.validate()?;
    let p = data.p;
    let n_sub = data.n_subgroups();
    if n_sub == 0 {
        return Err(Error::InvalidParameter("no subgroups to fit".into()));
    }
    if config.model == ModelVariant::Pooled && n_sub != 1 {
        return Err(Error::InvalidParameter("the pooled model expects data prepared as one subgroup".into()));
    }
    let priors = &config.priors;
    let baselines: Vec<BaselineHazardPrior> = data
        .subgroups
        .iter()
        .map(|sg| BaselineHazardPrior::new(priors.a0, sg.baseline))
        .collect::<Result<_>>()?;

    let mut rngs = ChainRngs::new(config.seed, data);
    let mut state = init_chain(data, &mut rngs)?;
    let mut samples = ChainSamples {
        model: config.model,
        p,
        labels: data.subgroups.iter().map(|sg| sg.label).collect(),
        boundaries: data.subgroups.iter().map(|sg| sg.grouped.boundaries().to_vec()).collect(),
        baselines: baselines.clone(),
        iterations: Vec::with_capacity(config.n_records()),
        beta: Vec::new(),
        gamma: Vec::new(),
        h: Vec::new(),
        log_likelihood: Vec::new(),
        within_edges: Vec::new(),
        between_edges: Vec::new(),
        omega_iterations: Vec::new(),
        omega: Vec::new(),
        acceptance: vec![0.0; n_sub * p],
    };
    let mut accepted = vec![0usize; n_sub * p];
    let graph_model = config.model.learns_graph();
    let skip_between = config.model == ModelVariant::SubStruct;

    for t in 0..config.iterations {
        let fail = |message: String| Error::Sampler { iteration: t, message };
        if graph_model {
            // Step 1: precision matrices, independent across subgroups.
            let adjacency = &state.adjacency;
            state
                .precision
                .omegas
                .par_iter_mut()
                .zip(rngs.omega.par_iter_mut())
                .zip(data.subgroups.par_iter())
                .enumerate()
                .map(|(s, ((omega, rng), sg))| {
                    update_precision_block(omega, adjacency, s, &sg.scatter, sg.n(), &priors.graph, rng)
                })
                .collect::<Result<Vec<()>>>()
                .map_err(|e| fail(format!("precision update: {e}")))?;
            // Step 2: joint graph.
            update_graph(
                &mut state.adjacency,
                &state.precision.omegas,
                &state.gamma,
                &priors.graph,
                &priors.mrf,
                skip_between,
                &mut rngs.graph,
            );
        }
        // Step 3: inclusion indicators, sequential over subgroups.
        for s in 0..n_sub {
            let prior = if graph_model {
                InclusionPrior::Mrf {
                    graph: &state.adjacency,
                    prior: &priors.mrf,
                }
            } else {
                InclusionPrior::Bernoulli(priors.selection.bernoulli_pi)
            };
            update_gamma(&mut state.subgroups[s], &mut state.gamma, s, &priors.selection, &prior, &mut rngs.cox[s]);
        }
        // Steps 4 and 5 per subgroup.
        let adapt = (t < config.burn_in).then(|| ADAPT_RATE / ((t + 1) as f64).powf(0.6));
        for s in 0..n_sub {
            let sg = &data.subgroups[s];
            let st = &mut state.subgroups[s];
            let rng = &mut rngs.cox[s];
            for i in 0..p {
                let mv = update_beta(st, i, &sg.grouped, &sg.x, &priors.selection, adapt, rng)?;
                if mv.accepted && t >= config.burn_in {
                    accepted[s * p + i] += 1;
                }
            }
            update_hazard_increments(st, &sg.grouped, &baselines[s], rng)?;
            let ll = grouped_log_likelihood_lp(&st.linear_predictor, &st.h, &sg.grouped)?;
            if !ll.is_finite() {
                return Err(fail(format!(
                    "non-finite log-likelihood in subgroup {}; {}",
                    sg.label,
                    state_dump(&state)
                )));
            }
        }

        if t >= config.burn_in && (t - config.burn_in).is_multiple_of(config.thin) {
            let store_omega = samples.n_records().is_multiple_of(config.omega_thin);
            samples.push(t, &state, data, store_omega)?;
        }
    }
    let post = (config.iterations - config.burn_in) as f64;
    samples.acceptance = accepted.iter().map(|&a| a as f64 / post).collect();
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

pub const MAX_ACF_LAG: usize = 50;

/// Numeric series for trace, running-mean and autocorrelation plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub trace: Vec<f64>,
    pub running_mean: Vec<f64>,
    /// Lags `0..=min(50, n − 1)`; `None` for a constant series.
    pub autocorrelation: Option<Vec<f64>>,
    pub zero_variance: bool,
}

pub fn series_diagnostics(series: &[f64]) -> Result<SeriesDiagnostics> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("diagnostics need at least 10 records, got {n}")));
    }
    let mut running_mean = Vec::with_capacity(n);
    let mut sum = 0.0;
    for (k, &x) in series.iter().enumerate() {
        sum += x;
        running_mean.push(sum / (k + 1) as f64);
    }
    let mean = sum / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|c| c * c).sum();
    let zero_variance = !(denom > 0.0);
    let autocorrelation = (!zero_variance).then(|| {
        (0..=MAX_ACF_LAG.min(n - 1))
            .map(|lag| centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom)
            .collect()
    });
    Ok(SeriesDiagnostics {
        trace: series.to_vec(),
        running_mean,
        autocorrelation,
        zero_variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDiagnostics {
    pub subgroup: usize,
    pub covariate: usize,
    pub diagnostics: SeriesDiagnostics,
}

/// Diagnostics of every stored coefficient series.
pub fn diagnostics(samples: &ChainSamples) -> Result<Vec<CoefficientDiagnostics>> {
    let mut out = Vec::with_capacity(samples.n_subgroups() * samples.p);
    for s in 0..samples.n_subgroups() {
        for i in 0..samples.p {
            out.push(CoefficientDiagnostics {
                subgroup: samples.labels[s],
                covariate: i,
                diagnostics: series_diagnostics(&samples.beta_series(s, i))?,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Chain files
// ---------------------------------------------------------------------------

const CHAIN_MAGIC: &[u8; 8] = b"CXBVSCH1";

/// Git-style content hash: SHA-256 of `"blob {len}\0"` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    /// `f64`, `u64` or `bits`.
    pub dtype: String,
    pub len: usize,
}

/// JSON sidecar of a chain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub format: String,
    pub config: ChainConfig,
    pub seed: u64,
    pub config_hash: String,
    pub data_file: String,
    pub content_hash: String,
    pub model: ModelVariant,
    pub p: usize,
    pub labels: Vec<usize>,
    pub boundaries: Vec<Vec<f64>>,
    pub baselines: Vec<BaselineHazardPrior>,
    pub n_records: usize,
    pub columns: Vec<ColumnSpec>,
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            out[k / 8] |= 1 << (k % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|k| bytes[k / 8] >> (k % 8) & 1 == 1).collect()
}

/// Hash of a serializable configuration (its canonical JSON form).
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(content_hash(&json))
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the manifest path.
/// `config_hash` identifies the configuration that produced the chain.
pub fn write_chain(
    stem: impl AsRef<Path>,
    samples: &ChainSamples,
    config: &ChainConfig,
    config_hash: &str,
) -> Result<PathBuf> {
    let stem = stem.as_ref();
    let bin_path = stem.with_extension("bin");
    let json_path = stem.with_extension("json");
    let mut bytes: Vec<u8> = CHAIN_MAGIC.to_vec();
    let mut columns = Vec::new();
    let mut f64_col = |name: &str, values: &[f64], bytes: &mut Vec<u8>| {
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        columns.push(ColumnSpec {
            name: name.into(),
            dtype: "f64".into(),
            len: values.len(),
        });
    };
    f64_col("beta", &samples.beta, &mut bytes);
    f64_col("h", &samples.h, &mut bytes);
    f64_col("log_likelihood", &samples.log_likelihood, &mut bytes);
    f64_col("omega", &samples.omega, &mut bytes);
    f64_col("acceptance", &samples.acceptance, &mut bytes);
    for (name, values) in [("iterations", &samples.iterations), ("omega_iterations", &samples.omega_iterations)] {
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        columns.push(ColumnSpec {
            name: name.into(),
            dtype: "u64".into(),
            len: values.len(),
        });
    }
    for (name, values) in [
        ("gamma", &samples.gamma),
        ("within_edges", &samples.within_edges),
        ("between_edges", &samples.between_edges),
    ] {
        bytes.extend(pack_bits(values));
        columns.push(ColumnSpec {
            name: name.into(),
            dtype: "bits".into(),
            len: values.len(),
        });
    }
    let manifest = ChainManifest {
        format: String::from_utf8_lossy(CHAIN_MAGIC).into_owned(),
        config: config.clone(),
        seed: config.seed,
        config_hash: config_hash.to_string(),
        data_file: bin_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        content_hash: content_hash(&bytes),
        model: samples.model,
        p: samples.p,
        labels: samples.labels.clone(),
        boundaries: samples.boundaries.clone(),
        baselines: samples.baselines.clone(),
        n_records: samples.n_records(),
        columns,
    };
    std::fs::File::create(&bin_path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(&bin_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(json_path)
}

/// Reads a chain back from its manifest, verifying the content hash.
pub fn read_chain(manifest_path: impl AsRef<Path>) -> Result<(ChainSamples, ChainManifest)> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: ChainManifest = serde_json::from_str(&text)?;
    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let mut bytes = Vec::new();
    std::fs::File::open(&bin_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&bin_path, e))?;
    if content_hash(&bytes) != manifest.content_hash {
        return Err(Error::ChainFormat(format!("content hash mismatch for {}", bin_path.display())));
    }
    if !bytes.starts_with(CHAIN_MAGIC) {
        return Err(Error::ChainFormat("missing magic header".into()));
    }
    let mut cursor = CHAIN_MAGIC.len();
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = cursor + n;
        if end > bytes.len() {
            return Err(Error::ChainFormat("truncated data file".into()));
        }
        let slice = &bytes[cursor..end];
        cursor = end;
        Ok(slice)
    };
    let mut f64s = std::collections::HashMap::new();
    let mut u64s = std::collections::HashMap::new();
    let mut bits = std::collections::HashMap::new();
    for col in &manifest.columns {
        match col.dtype.as_str() {
            "f64" => {
                let raw = take(col.len * 8)?;
                let v: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                f64s.insert(col.name.clone(), v);
            }
            "u64" => {
                let raw = take(col.len * 8)?;
                let v: Vec<u64> = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
                u64s.insert(col.name.clone(), v);
            }
            "bits" => {
                let raw = take(col.len.div_ceil(8))?;
                bits.insert(col.name.clone(), unpack_bits(raw, col.len));
            }
            other => return Err(Error::ChainFormat(format!("unknown column type `{other}`"))),
        }
    }
    let mut f = |name: &str| f64s.remove(name).ok_or_else(|| Error::ChainFormat(format!("missing column `{name}`")));
    let (beta, h, log_likelihood, omega, acceptance) = (f("beta")?, f("h")?, f("log_likelihood")?, f("omega")?, f("acceptance")?);
    let mut u = |name: &str| u64s.remove(name).ok_or_else(|| Error::ChainFormat(format!("missing column `{name}`")));
    let (iterations, omega_iterations) = (u("iterations")?, u("omega_iterations")?);
    let mut b = |name: &str| bits.remove(name).ok_or_else(|| Error::ChainFormat(format!("missing column `{name}`")));
    let (gamma, within_edges, between_edges) = (b("gamma")?, b("within_edges")?, b("between_edges")?);
    let samples = ChainSamples {
        model: manifest.model,
        p: manifest.p,
        labels: manifest.labels.clone(),
        boundaries: manifest.boundaries.clone(),
        baselines: manifest.baselines.clone(),
        iterations,
        beta,
        gamma,
        h,
        log_likelihood,
        within_edges,
        between_edges,
        omega_iterations,
        omega,
        acceptance,
    };
    let s = samples.n_subgroups();
    let r = samples.n_records();
    if r != manifest.n_records
        || samples.beta.len() != r * s * samples.p
        || samples.gamma.len() != r * s * samples.p
        || samples.log_likelihood.len() != r * s
        || samples.h.len() != r * samples.h_per_record()
    {
        return Err(Error::ChainFormat("column lengths disagree with the manifest".into()));
    }
    Ok((samples, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::std_normal;
    use crate::simulate::SimulationDesign;
    use nalgebra::Cholesky;

    fn tiny_priors() -> PriorConfig {
        PriorPreset::Simulation.priors(5).unwrap()
    }

    fn tiny_data(variant: ModelVariant) -> ModelData {
        let design = SimulationDesign {
            p: 5,
            n_per_subgroup: vec![40, 40],
            true_effects: vec![vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, 0.0]],
            weibull_scale: vec![0.2, 0.1],
            weibull_shape: vec![0.85, 1.0],
            partial_corr: -0.5,
            blocks: vec![vec![0, 1]],
            censoring: Default::default(),
            seed: 3,
        };
        let ds = design.simulate(0).unwrap();
        let (train, _, _) = crate::data::standardize(&ds, &ds, variant.scope()).unwrap();
        ModelData::prepare(&train, variant).unwrap()
    }

    fn tiny_config(model: ModelVariant) -> ChainConfig {
        ChainConfig {
            iterations: 60,
            burn_in: 20,
            seed: 9,
            model,
            thin: 1,
            omega_thin: 10,
            priors: tiny_priors(),
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config(ModelVariant::CoxBvsSl);
        c.burn_in = c.iterations;
        assert!(run_mcmc(&tiny_data(ModelVariant::CoxBvsSl), &c).is_err());
        let mut c = tiny_config(ModelVariant::CoxBvsSl);
        c.thin = 0;
        assert!(c.validate().is_err());
        assert!(PriorPreset::Simulation.priors(3).is_err());
    }

    #[test]
    fn presets_carry_reference_values() {
        let sim = PriorPreset::Simulation.priors(20).unwrap();
        assert_eq!(sim.graph.pi_edge, 2.0 / 19.0);
        assert_eq!((sim.mrf.a, sim.mrf.b_within, sim.mrf.b_between), (-4.0, 1.0, 1.0));
        assert_eq!((sim.graph.nu0, sim.graph.nu1, sim.graph.lambda), (0.1, 10.0, 1.0));
        assert_eq!((sim.selection.tau, sim.selection.c, sim.selection.bernoulli_pi), (0.0375, 20.0, 0.02));
        assert_eq!(sim.a0, 2.0);
        let case = PriorPreset::CaseStudy.priors(20).unwrap();
        assert_eq!((case.graph.nu0, case.graph.nu1), (0.6, 360.0));
        assert_eq!((case.mrf.a, case.mrf.b_within), (-1.75, 0.5));
        assert_eq!(case.selection.bernoulli_pi, 0.2);
    }

    #[test]
    fn init_is_empty_model() {
        let data = tiny_data(ModelVariant::CoxBvsSl);
        let mut a = ChainRngs::new(4, &data);
        let mut b = ChainRngs::new(4, &data);
        let s1 = init_chain(&data, &mut a).unwrap();
        let s2 = init_chain(&data, &mut b).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.gamma.iter().all(|&g| !g));
        assert_eq!(s1.adjacency.within_edge_count(0) + s1.adjacency.between_edge_count(), 0);
        for sg in &s1.subgroups {
            assert!(sg.beta.iter().all(|b| b.abs() <= 0.02));
            assert!(sg.h.iter().all(|&h| h > 0.0));
        }
        assert_eq!(s1.precision.omegas[1], DMatrix::identity(5, 5));
    }

    #[test]
    fn record_count_and_reproducibility() {
        for model in ModelVariant::ALL {
            let data = tiny_data(model);
            let config = tiny_config(model);
            let a = run_mcmc(&data, &config).unwrap();
            let b = run_mcmc(&data, &config).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.n_records(), 40);
            assert_eq!(a.has_graph(), model.learns_graph());
            if model.learns_graph() {
                assert_eq!(a.n_omega_records(), 4);
                for k in 0..a.n_omega_records() {
                    for s in 0..a.n_subgroups() {
                        assert!(Cholesky::new(a.omega_at(k, s)).is_some());
                    }
                }
            }
            if model == ModelVariant::SubStruct {
                assert!(a.between_edges.iter().all(|&e| !e));
            }
        }
        let mut thinned = tiny_config(ModelVariant::Subgroup);
        thinned.thin = 3;
        let c = run_mcmc(&tiny_data(ModelVariant::Subgroup), &thinned).unwrap();
        assert_eq!(c.n_records(), 14);
        assert_eq!(c.iterations[1], 23);
    }

    #[test]
    fn subgroup_model_decouples() {
        let data = tiny_data(ModelVariant::Subgroup);
        let config = tiny_config(ModelVariant::Subgroup);
        let joint = run_mcmc(&data, &config).unwrap();
        for s in 0..2 {
            let alone = run_mcmc(&data.select(&[s]), &config).unwrap();
            for r in 0..joint.n_records() {
                for i in 0..5 {
                    assert_eq!(joint.beta_at(r, s, i), alone.beta_at(r, 0, i));
                    assert_eq!(joint.gamma_at(r, s, i), alone.gamma_at(r, 0, i));
                }
                assert_eq!(joint.h_at(r, s), alone.h_at(r, 0));
            }
        }
    }

    #[test]
    fn chain_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for model in [ModelVariant::CoxBvsSl, ModelVariant::Pooled] {
            let data = tiny_data(model);
            let config = tiny_config(model);
            let samples = run_mcmc(&data, &config).unwrap();
            let hash = config_hash(&config).unwrap();
            let manifest = write_chain(dir.path().join(model.name()), &samples, &config, &hash).unwrap();
            let (back, m) = read_chain(&manifest).unwrap();
            assert_eq!(back, samples);
            assert_eq!(m.config, config);
            assert_eq!(m.config_hash, hash);

            let bin = dir.path().join(format!("{}.bin", model.name()));
            let mut bytes = std::fs::read(&bin).unwrap();
            let last = bytes.len() - 1;
            bytes[last] ^= 0xff;
            std::fs::write(&bin, bytes).unwrap();
            assert!(matches!(read_chain(&manifest), Err(Error::ChainFormat(_))));
        }
    }

    #[test]
    fn content_hash_matches_git_blob_construction() {
        let mut hasher = Sha256::new();
        hasher.update(b"blob 5\0hello");
        assert_eq!(content_hash(b"hello"), hex::encode(hasher.finalize()));
    }

    #[test]
    fn diagnostics_examples() {
        assert!(series_diagnostics(&[1.0; 9]).is_err());
        let flat = series_diagnostics(&[2.0; 20]).unwrap();
        assert!(flat.zero_variance && flat.autocorrelation.is_none());

        let mut rng = stream(1, 0);
        let noise: Vec<f64> = (0..4000).map(|_| std_normal(&mut rng)).collect();
        let d = series_diagnostics(&noise).unwrap();
        let acf = d.autocorrelation.unwrap();
        assert_eq!(acf.len(), 51);
        assert!((acf[0] - 1.0).abs() < 1e-12);
        assert!(acf[1].abs() < 2.0 / (4000f64).sqrt());
        let mean = noise.iter().sum::<f64>() / 4000.0;
        assert!((d.running_mean.last().unwrap() - mean).abs() < 1e-12);
    }
}

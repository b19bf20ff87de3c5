//! Grouped-data Cox likelihood with a gamma-process baseline hazard and the
//! per-subgroup updates of the inclusion indicators, the coefficients and
//! the baseline hazard increments.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::GroupedData;
use crate::error::{Error, Result};
use crate::graph::{mrf_conditional_logit, JointAdjacency, MrfPrior};
use crate::numeric::{ln_normal_pdf, ln_normal_pdf_var, ln_one_minus_exp_neg, logistic, logit};
use crate::rng::{gamma, std_normal};
use crate::simulate::WeibullParams;

/// Acceptance rate the fallback random-walk scale is tuned toward.
pub const TARGET_ACCEPTANCE: f64 = 0.44;

/// Gamma-process prior `h_g ~ G(a0·ΔH*_g, a0)` around `H*(t) = η t^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazardPrior {
    pub a0: f64,
    pub eta: f64,
    pub kappa: f64,
}

impl BaselineHazardPrior {
    pub fn new(a0: f64, weibull: WeibullParams) -> Result<Self> {
        let prior = Self {
            a0,
            eta: weibull.eta,
            kappa: weibull.kappa,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.eta > 0.0 && self.kappa > 0.0) || !(self.eta.is_finite() && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("baseline hazard prior must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `H*(t)`.
    pub fn cumulative(&self, t: f64) -> f64 {
        self.eta * t.powf(self.kappa)
    }

    /// `dH*/dt` at `t > 0`.
    pub fn slope(&self, t: f64) -> f64 {
        self.eta * self.kappa * t.powf(self.kappa - 1.0)
    }

    /// `H*(c_g) − H*(c_{g−1})` for each interval.
    pub fn increments(&self, boundaries: &[f64]) -> Vec<f64> {
        boundaries
            .windows(2)
            .map(|w| self.cumulative(w[1]) - self.cumulative(w[0]))
            .collect()
    }
}

/// Spike-and-slab coefficient prior `β ~ N(0, τ²)` or `N(0, c²τ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPrior {
    pub tau: f64,
    pub c: f64,
    /// Inclusion probability of the models without an MRF prior.
    pub bernoulli_pi: f64,
}

impl SelectionPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.c > 1.0 && self.bernoulli_pi > 0.0 && self.bernoulli_pi < 1.0) {
            return Err(Error::InvalidParameter(format!("invalid selection prior {self:?}")));
        }
        Ok(())
    }

    /// Prior SD of a coefficient given its indicator.
    pub fn sd(&self, included: bool) -> f64 {
        if included {
            self.c * self.tau
        } else {
            self.tau
        }
    }
}

/// Prior on the indicators of one subgroup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InclusionPrior<'a> {
    /// MRF coupled through the joint graph.
    Mrf {
        graph: &'a JointAdjacency,
        prior: &'a MrfPrior,
    },
    /// Independent Bernoulli(π).
    Bernoulli(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSubgroupState {
    pub beta: Vec<f64>,
    pub gamma: Vec<bool>,
    pub h: Vec<f64>,
    pub mh_proposal_sds: Vec<f64>,
    /// Cached `Xβ`, kept in step with `beta`.
    pub linear_predictor: Vec<f64>,
}

impl CoxSubgroupState {
    pub fn new(beta: Vec<f64>, gamma: Vec<bool>, h: Vec<f64>, mh_proposal_sds: Vec<f64>, x: &DMatrix<f64>) -> Result<Self> {
        let p = beta.len();
        if gamma.len() != p || mh_proposal_sds.len() != p || x.ncols() != p {
            return Err(Error::Dimension(format!(
                "state has {p} coefficients, {} indicators, {} scales; X has {} columns",
                gamma.len(),
                mh_proposal_sds.len(),
                x.ncols()
            )));
        }
        if h.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("hazard increments must be positive".into()));
        }
        let mut state = Self {
            beta,
            gamma,
            h,
            mh_proposal_sds,
            linear_predictor: Vec::new(),
        };
        state.refresh_linear_predictor(x);
        Ok(state)
    }

    pub fn refresh_linear_predictor(&mut self, x: &DMatrix<f64>) {
        self.linear_predictor = linear_predictor(x, &self.beta);
    }
}

pub fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|m| (0..x.ncols()).map(|i| x[(m, i)] * beta[i]).sum())
        .collect()
}

/// `Σ_{g < g_m} h_g + (1 − δ_m) h_{g_m}`: the hazard mass patient `m`
/// accrues while in a risk set but not a failure set.
fn survived_mass(h: &[f64], gd: &GroupedData) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(h.len() + 1);
    prefix.push(0.0);
    for &v in h {
        prefix.push(prefix.last().unwrap() + v);
    }
    gd.interval_of()
        .iter()
        .zip(gd.events())
        .map(|(&g, &event)| if event { prefix[g] } else { prefix[g + 1] })
        .collect()
}

fn check_dims(h: &[f64], gd: &GroupedData, n_rows: usize) -> Result<()> {
    if h.len() != gd.n_intervals() {
        return Err(Error::Dimension(format!(
            "{} hazard increments for {} intervals",
            h.len(),
            gd.n_intervals()
        )));
    }
    if n_rows != gd.n_records() {
        return Err(Error::Dimension(format!(
            "{} covariate rows for {} grouped records",
            n_rows,
            gd.n_records()
        )));
    }
    Ok(())
}

/// Log-likelihood as a function of the linear predictors. An event whose
/// failure probability underflows to zero yields `−∞`.
pub fn grouped_log_likelihood_lp(lp: &[f64], h: &[f64], gd: &GroupedData) -> Result<f64> {
    check_dims(h, gd, lp.len())?;
    let mass = survived_mass(h, gd);
    let mut total = 0.0;
    for (m, &eta) in lp.iter().enumerate() {
        let w = eta.exp();
        total -= mass[m] * w;
        if gd.events()[m] {
            total += ln_one_minus_exp_neg(h[gd.interval_of()[m]] * w);
        }
    }
    Ok(total)
}

pub fn grouped_log_likelihood(beta: &[f64], h: &[f64], gd: &GroupedData, x: &DMatrix<f64>) -> Result<f64> {
    if beta.len() != x.ncols() {
        return Err(Error::Dimension(format!("{} coefficients for {} covariates", beta.len(), x.ncols())));
    }
    check_dims(h, gd, x.nrows())?;
    grouped_log_likelihood_lp(&linear_predictor(x, beta), h, gd)
}

// ---------------------------------------------------------------------------
// Weibull baseline fit
// ---------------------------------------------------------------------------

const WEIBULL_KAPPA_MAX: f64 = 1e3;

/// Censored Weibull maximum likelihood for `H(t) = η t^κ`.
///
/// The profile score in κ is strictly decreasing, so the root is
/// bracketed and found by bisection on times rescaled by their maximum.
pub fn fit_weibull_baseline(times: &[f64], events: &[bool]) -> Result<WeibullParams> {
    if times.len() != events.len() {
        return Err(Error::Dimension("times and events differ in length".into()));
    }
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::WeibullFit("times must be positive and finite".into()));
    }
    let d = events.iter().filter(|&&e| e).count();
    if d < 2 {
        return Err(Error::WeibullFit(format!("{d} event(s); at least 2 required")));
    }
    let d = d as f64;
    let scale = times.iter().cloned().fold(0.0, f64::max);
    let logs: Vec<f64> = times.iter().map(|&t| (t / scale).ln()).collect();
    let event_log_sum: f64 = logs.iter().zip(events).filter(|(_, &e)| e).map(|(l, _)| l).sum();
    let score = |kappa: f64| {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &l in &logs {
            let u = (kappa * l).exp();
            s0 += u;
            s1 += u * l;
        }
        d / kappa + event_log_sum - d * s1 / s0
    };

    let mut lo = 1e-8;
    let mut hi = 1.0;
    let mut trace = Vec::new();
    while score(hi) > 0.0 {
        trace.push(format!("score({hi}) = {:.3e}", score(hi)));
        lo = hi;
        hi *= 2.0;
        if hi > WEIBULL_KAPPA_MAX {
            return Err(Error::WeibullFit(format!(
                "shape diverges (no root of the profile score below {WEIBULL_KAPPA_MAX}); trace: {}",
                trace.join(", ")
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let kappa = 0.5 * (lo + hi);
    let sum_scaled: f64 = logs.iter().map(|&l| (kappa * l).exp()).sum();
    let eta = d / sum_scaled / scale.powf(kappa);
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::WeibullFit(format!("scale estimate {eta} at shape {kappa}")));
    }
    Ok(WeibullParams { eta, kappa })
}

// ---------------------------------------------------------------------------
// Step 3: inclusion indicators
// ---------------------------------------------------------------------------

/// Log-odds of `γ_{s,i} = 1` given β and the other indicators.
pub fn gamma_log_odds(beta_i: f64, all_gamma: &[bool], s: usize, i: usize, sel: &SelectionPrior, prior: &InclusionPrior) -> f64 {
    let prior_logit = match prior {
        InclusionPrior::Mrf { graph, prior } => mrf_conditional_logit(all_gamma, graph, s, i, prior),
        InclusionPrior::Bernoulli(pi) => logit(*pi),
    };
    prior_logit + ln_normal_pdf(beta_i, sel.sd(true)) - ln_normal_pdf(beta_i, sel.sd(false))
}

/// Sequential scan over the indicators of subgroup `s`. `all_gamma` is the
/// subgroup-major vector of every subgroup's indicators; it and
/// `state.gamma` are both updated.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut CoxSubgroupState,
    all_gamma: &mut [bool],
    s: usize,
    sel: &SelectionPrior,
    prior: &InclusionPrior,
    rng: &mut R,
) {
    let p = state.beta.len();
    for i in 0..p {
        let prob = logistic(gamma_log_odds(state.beta[i], all_gamma, s, i, sel, prior));
        let on = rng.random::<f64>() < prob;
        state.gamma[i] = on;
        all_gamma[s * p + i] = on;
    }
}

// ---------------------------------------------------------------------------
// Step 4: coefficients
// ---------------------------------------------------------------------------

/// Value, gradient and curvature of the log conditional posterior of one
/// coefficient, all as functions of the linear predictors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPosterior {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

fn local_posterior(
    lp: &[f64],
    mass: &[f64],
    h: &[f64],
    gd: &GroupedData,
    x: &DMatrix<f64>,
    i: usize,
    beta_i: f64,
    prior_sd: f64,
) -> LocalPosterior {
    let mut value = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for (m, &eta) in lp.iter().enumerate() {
        let w = eta.exp();
        let xm = x[(m, i)];
        let mut g1 = -mass[m] * w;
        let mut g2 = g1;
        value += g1;
        if gd.events()[m] {
            let q = h[gd.interval_of()[m]] * w;
            value += ln_one_minus_exp_neg(q);
            // f(q) = q / (e^q − 1), f'(q)·q = f(q)(1 − q / (1 − e^{−q}))
            let (f, curv) = if q > 0.0 {
                let f = q / q.exp_m1();
                (f, f * (1.0 - q / -(-q).exp_m1()))
            } else {
                (1.0, 0.0)
            };
            g1 += f;
            g2 += curv;
        }
        d1 += xm * g1;
        d2 += xm * xm * g2;
    }
    let var = prior_sd * prior_sd;
    LocalPosterior {
        value: value + ln_normal_pdf(beta_i, prior_sd),
        d1: d1 - beta_i / var,
        d2: d2 - 1.0 / var,
    }
}

/// Gaussian proposal `(mean, variance)` from a Newton step at `beta_i`,
/// or a random walk with the fallback scale where the curvature is not
/// negative and finite.
pub fn newton_proposal(beta_i: f64, local: &LocalPosterior, fallback_sd: f64) -> (f64, f64, bool) {
    if local.d2 < 0.0 && local.d2.is_finite() && local.d1.is_finite() {
        (beta_i - local.d1 / local.d2, -1.0 / local.d2, true)
    } else {
        (beta_i, fallback_sd * fallback_sd, false)
    }
}

/// `ln r` of a Metropolis–Hastings move with an asymmetric proposal.
pub fn mh_log_ratio(log_post_new: f64, log_post_old: f64, log_q_reverse: f64, log_q_forward: f64) -> f64 {
    log_post_new - log_post_old + log_q_reverse - log_q_forward
}

/// Outcome of one coefficient update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaMove {
    pub accepted: bool,
    pub newton: bool,
}

/// Metropolis–Hastings update of `β_{s,i}` with a derivative-based
/// proposal. When `adapt_step` is given and the fallback random walk was
/// used, the walk scale moves by Robbins–Monro toward the target rate.
#[allow(clippy::too_many_arguments)]
pub fn update_beta<R: Rng + ?Sized>(
    state: &mut CoxSubgroupState,
    i: usize,
    gd: &GroupedData,
    x: &DMatrix<f64>,
    sel: &SelectionPrior,
    adapt_step: Option<f64>,
    rng: &mut R,
) -> Result<BetaMove> {
    check_dims(&state.h, gd, x.nrows())?;
    let mass = survived_mass(&state.h, gd);
    let prior_sd = sel.sd(state.gamma[i]);
    let beta = state.beta[i];
    let here = local_posterior(&state.linear_predictor, &mass, &state.h, gd, x, i, beta, prior_sd);
    let (mu, var, newton) = newton_proposal(beta, &here, state.mh_proposal_sds[i]);
    let proposal = mu + var.sqrt() * std_normal(rng);

    let delta = proposal - beta;
    let lp_new: Vec<f64> = state
        .linear_predictor
        .iter()
        .enumerate()
        .map(|(m, &eta)| eta + x[(m, i)] * delta)
        .collect();
    let there = local_posterior(&lp_new, &mass, &state.h, gd, x, i, proposal, prior_sd);
    let (mu_rev, var_rev, _) = newton_proposal(proposal, &there, state.mh_proposal_sds[i]);
    let log_r = mh_log_ratio(
        there.value,
        here.value,
        ln_normal_pdf_var(beta, mu_rev, var_rev),
        ln_normal_pdf_var(proposal, mu, var),
    );
    let accept_prob = if log_r.is_nan() { 0.0 } else { log_r.min(0.0).exp() };
    let accepted = rng.random::<f64>() < accept_prob;
    if accepted {
        state.beta[i] = proposal;
        state.linear_predictor = lp_new;
    }
    if let (Some(step), false) = (adapt_step, newton) {
        let sd = &mut state.mh_proposal_sds[i];
        *sd = (sd.ln() + step * (accept_prob - TARGET_ACCEPTANCE)).exp().clamp(1e-6, 1e3);
    }
    Ok(BetaMove { accepted, newton })
}

// ---------------------------------------------------------------------------
// Step 5: baseline hazard increments
// ---------------------------------------------------------------------------

/// Shape and rate of the gamma full conditional of every `h_g`.
pub fn hazard_conditionals(lp: &[f64], gd: &GroupedData, bh: &BaselineHazardPrior) -> Vec<(f64, f64)> {
    let j = gd.n_intervals();
    // at_risk[g]: Σ e^{η} over records whose interval is g; removed at g
    // for events, so rate_g = Σ_{g_m ≥ g} w_m − Σ_{m ∈ D_g} w_m.
    let mut ending = vec![0.0; j];
    let mut failing = vec![0.0; j];
    for (m, &eta) in lp.iter().enumerate() {
        let w = eta.exp();
        let g = gd.interval_of()[m];
        ending[g] += w;
        if gd.events()[m] {
            failing[g] += w;
        }
    }
    let prior_inc = bh.increments(gd.boundaries());
    let mut out = vec![(0.0, 0.0); j];
    let mut tail = 0.0;
    for g in (0..j).rev() {
        tail += ending[g];
        let shape = bh.a0 * prior_inc[g] + gd.event_counts()[g] as f64;
        let rate = bh.a0 + (tail - failing[g]).max(0.0);
        out[g] = (shape, rate);
    }
    out
}

pub fn update_hazard_increments<R: Rng + ?Sized>(
    state: &mut CoxSubgroupState,
    gd: &GroupedData,
    bh: &BaselineHazardPrior,
    rng: &mut R,
) -> Result<()> {
    check_dims(&state.h, gd, state.linear_predictor.len())?;
    for (h, (shape, rate)) in state.h.iter_mut().zip(hazard_conditionals(&state.linear_predictor, gd, bh)) {
        *h = gamma(rng, shape, rate);
    }
    Ok(())
}

/// `H₀(t)` from the increments: partial sums at the boundaries, linear
/// within an interval and linear with slope `tail_slope` beyond the last
/// boundary.
pub fn cumulative_baseline_at(h: &[f64], boundaries: &[f64], t: f64, tail_slope: f64) -> f64 {
    debug_assert_eq!(h.len() + 1, boundaries.len());
    if t <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (g, &inc) in h.iter().enumerate() {
        let (lo, hi) = (boundaries[g], boundaries[g + 1]);
        if t >= hi {
            total += inc;
        } else {
            return total + inc * (t - lo) / (hi - lo);
        }
    }
    total + tail_slope * (t - boundaries[h.len()])
}

//! Survival prediction, the Kaplan–Meier censoring curve, IPCW Brier
//! scores and the integrated Brier score.

use serde::{Deserialize, Serialize};

use crate::coxmodel::{cumulative_baseline_at, BaselineHazardPrior};
use crate::data::{StandardizationParams, SurvivalRecord};
use crate::error::{Error, Result};
use crate::posterior::PosteriorSummary;

/// Censoring-curve level below which the default horizon stops.
pub const DEFAULT_HORIZON_MIN_CENSORING: f64 = 0.05;

/// Piecewise-linear cumulative baseline hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub boundaries: Vec<f64>,
    pub increments: Vec<f64>,
    /// Slope used beyond the last boundary.
    pub tail_slope: f64,
}

impl Baseline {
    pub fn new(boundaries: Vec<f64>, increments: Vec<f64>, tail_slope: f64) -> Result<Self> {
        if boundaries.len() != increments.len() + 1 || increments.iter().any(|&h| !(h > 0.0)) || !(tail_slope >= 0.0) {
            return Err(Error::InvalidParameter(
                "baseline needs one positive increment per interval and a nonnegative tail slope".into(),
            ));
        }
        Ok(Self {
            boundaries,
            increments,
            tail_slope,
        })
    }

    /// Posterior-mean increments with the tail slope of the prior mean `H*`.
    pub fn from_prior_tail(boundaries: Vec<f64>, increments: Vec<f64>, prior: &BaselineHazardPrior) -> Result<Self> {
        let last = *boundaries.last().unwrap_or(&0.0);
        Self::new(boundaries, increments, prior.slope(last))
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        cumulative_baseline_at(&self.increments, &self.boundaries, t, self.tail_slope)
    }
}

/// Coefficients and baseline of each fitted subgroup plus the training
/// standardization. A model fitted on pooled data has a single subgroup
/// that serves every label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub coefficients: Vec<Vec<f64>>,
    pub baselines: Vec<Baseline>,
    pub standardization: StandardizationParams,
}

impl PredictionModel {
    pub fn new(coefficients: Vec<Vec<f64>>, baselines: Vec<Baseline>, standardization: StandardizationParams) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != baselines.len() {
            return Err(Error::Dimension(format!(
                "{} coefficient vectors for {} baselines",
                coefficients.len(),
                baselines.len()
            )));
        }
        let p = coefficients[0].len();
        if coefficients.iter().any(|c| c.len() != p) {
            return Err(Error::Dimension("coefficient vectors differ in length".into()));
        }
        Ok(Self {
            coefficients,
            baselines,
            standardization,
        })
    }

    /// Plug-in model from a posterior summary: the given coefficients and
    /// the posterior-mean hazard increments.
    pub fn from_summary(
        summary: &PosteriorSummary,
        coefficients: Vec<Vec<f64>>,
        boundaries: &[Vec<f64>],
        priors: &[BaselineHazardPrior],
        standardization: StandardizationParams,
    ) -> Result<Self> {
        let baselines = summary
            .mean_hazard
            .iter()
            .zip(boundaries)
            .zip(priors)
            .map(|((h, b), prior)| Baseline::from_prior_tail(b.clone(), h.clone(), prior))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coefficients, baselines, standardization)
    }

    /// Position of the fitted subgroup serving the 1-based `label`.
    fn slot(&self, label: usize) -> Result<usize> {
        if self.coefficients.len() == 1 {
            return Ok(0);
        }
        if label == 0 || label > self.coefficients.len() {
            return Err(Error::InvalidParameter(format!("no fitted subgroup for label {label}")));
        }
        Ok(label - 1)
    }

    /// `exp(β'x)` for a standardized covariate row.
    pub fn relative_risk(&self, x: &[f64], label: usize) -> Result<f64> {
        let beta = &self.coefficients[self.slot(label)?];
        if x.len() != beta.len() {
            return Err(Error::Dimension(format!("{} covariates for {} coefficients", x.len(), beta.len())));
        }
        Ok(beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>().exp())
    }

    pub fn baseline(&self, label: usize) -> Result<&Baseline> {
        Ok(&self.baselines[self.slot(label)?])
    }
}

/// `S(t | x) = exp(−e^{β'x} H₀(t))` for a standardized covariate row.
pub fn predict_survival(model: &PredictionModel, x: &[f64], label: usize, t: f64) -> Result<f64> {
    let w = model.relative_risk(x, label)?;
    Ok((-w * model.baseline(label)?.cumulative(t)).exp())
}

/// Right-continuous step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    /// Value from each jump time on.
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// `lim_{u↑t}` of the function.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Product-limit estimate of the survival curve of the times whose flag
/// is set, with everyone whose time is at least `u` at risk at `u`.
fn product_limit(times: &[f64], flagged: &[bool]) -> StepFunction {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = StepFunction {
        times: Vec::new(),
        values: Vec::new(),
    };
    let mut level = 1.0;
    let mut k = 0;
    let n = times.len();
    while k < n {
        let u = times[order[k]];
        let at_risk = n - k;
        let mut hits = 0;
        while k < n && times[order[k]] == u {
            hits += flagged[order[k]] as usize;
            k += 1;
        }
        if hits > 0 {
            level *= 1.0 - hits as f64 / at_risk as f64;
            out.times.push(u);
            out.values.push(level);
        }
    }
    out
}

/// Kaplan–Meier estimate of the censoring distribution.
pub fn km_censoring(records: &[SurvivalRecord]) -> Result<StepFunction> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("censoring curve of an empty set".into()));
    }
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let censored: Vec<bool> = records.iter().map(|r| !r.event).collect();
    Ok(product_limit(&times, &censored))
}

/// Kaplan–Meier estimate of the event-time distribution.
pub fn km_survival(records: &[SurvivalRecord]) -> StepFunction {
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    product_limit(&times, &events)
}

/// Test records prepared for scoring: standardized rows, relative risks
/// and baselines.
struct Scoring<'a> {
    times: Vec<f64>,
    events: Vec<bool>,
    risks: Vec<f64>,
    baselines: Vec<&'a Baseline>,
    censoring: StepFunction,
}

impl<'a> Scoring<'a> {
    fn new(model: &'a PredictionModel, test: &[SurvivalRecord]) -> Result<Self> {
        let censoring = km_censoring(test)?;
        let mut risks = Vec::with_capacity(test.len());
        let mut baselines = Vec::with_capacity(test.len());
        for rec in test {
            let z = model.standardization.apply_record(rec)?;
            risks.push(model.relative_risk(&z.covariates, rec.subgroup)?);
            baselines.push(model.baseline(rec.subgroup)?);
        }
        Ok(Self {
            times: test.iter().map(|r| r.time).collect(),
            events: test.iter().map(|r| r.event).collect(),
            risks,
            baselines,
            censoring,
        })
    }

    fn survival(&self, m: usize, t: f64) -> f64 {
        (-self.risks[m] * self.baselines[m].cumulative(t)).exp()
    }

    /// IPCW weights at `t`: `δ/Ĉ(t̃⁻)` before `t`, `1/Ĉ(t)` after.
    fn weight(&self, m: usize, t: f64) -> Result<f64> {
        let (c, at) = if self.times[m] <= t {
            if !self.events[m] {
                return Ok(0.0);
            }
            (self.censoring.left_limit(self.times[m]), self.times[m])
        } else {
            (self.censoring.at(t), t)
        };
        if !(c > 0.0) {
            return Err(Error::ZeroCensoringWeight { time: at });
        }
        Ok(1.0 / c)
    }

    fn brier(&self, t: f64) -> Result<f64> {
        let n = self.times.len();
        let mut total = 0.0;
        for m in 0..n {
            let w = self.weight(m, t)?;
            if w == 0.0 {
                continue;
            }
            let s = self.survival(m, t);
            let target = if self.times[m] > t { 1.0 } else { 0.0 };
            total += w * (target - s).powi(2);
        }
        Ok(total / n as f64)
    }
}

/// IPCW Brier score at `t` on raw (unstandardized) test records.
pub fn brier_score(model: &PredictionModel, test: &[SurvivalRecord], t: f64) -> Result<f64> {
    Scoring::new(model, test)?.brier(t)
}

/// Brier scores at each of `times`.
pub fn prediction_error_curve(model: &PredictionModel, test: &[SurvivalRecord], times: &[f64]) -> Result<Vec<f64>> {
    let scoring = Scoring::new(model, test)?;
    times.iter().map(|&t| scoring.brier(t)).collect()
}

/// `∫_u^v exp(−k (H(u) + B (t − u))) dt` for a linear segment of H.
fn exp_linear_integral(k: f64, h_u: f64, slope: f64, len: f64) -> f64 {
    let rate = k * slope;
    let head = (-k * h_u).exp();
    if rate * len < 1e-12 {
        head * len * (1.0 - 0.5 * rate * len)
    } else {
        head * -(-rate * len).exp_m1() / rate
    }
}

/// `(1/t*) ∫₀^{t*} BS(t) dt`, integrated exactly piece by piece. Between
/// consecutive test times and baseline boundaries the weights are constant
/// and every `H₀` is linear, so each piece has a closed form.
pub fn integrated_brier(model: &PredictionModel, test: &[SurvivalRecord], t_star: f64) -> Result<f64> {
    if !(t_star > 0.0 && t_star.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {t_star}")));
    }
    let scoring = Scoring::new(model, test)?;
    let mut cuts: Vec<f64> = vec![0.0, t_star];
    cuts.extend(scoring.times.iter().copied().filter(|&t| t < t_star));
    for b in &model.baselines {
        cuts.extend(b.boundaries.iter().copied().filter(|&t| t > 0.0 && t < t_star));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let n = scoring.times.len();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        let len = v - u;
        let mid = 0.5 * (u + v);
        for m in 0..n {
            let weight = scoring.weight(m, mid)?;
            if weight == 0.0 {
                continue;
            }
            let base = scoring.baselines[m];
            let h_u = base.cumulative(u);
            let slope = (base.cumulative(v) - h_u) / len;
            let r = scoring.risks[m];
            let s2 = exp_linear_integral(2.0 * r, h_u, slope, len);
            let piece = if scoring.times[m] > mid {
                len - 2.0 * exp_linear_integral(r, h_u, slope, len) + s2
            } else {
                s2
            };
            total += weight * piece;
        }
    }
    Ok(total / n as f64 / t_star)
}

/// Largest test event time at which the censoring curve exceeds 0.05.
pub fn default_horizon(test: &[SurvivalRecord]) -> Result<f64> {
    let censoring = km_censoring(test)?;
    test.iter()
        .filter(|r| r.event && censoring.at(r.time) > DEFAULT_HORIZON_MIN_CENSORING)
        .map(|r| r.time)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
        .ok_or_else(|| Error::InvalidParameter("no test event time with censoring survival above 0.05".into()))
}

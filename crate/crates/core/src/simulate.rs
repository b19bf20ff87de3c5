//! Synthetic multi-subgroup survival data: block-structured Gaussian
//! covariates and Weibull event and censoring times.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{default_covariate_names, Dataset, SurvivalRecord};
use crate::error::{Error, Result};
use crate::rng::{self, open_unit, std_normal};

/// Whether censoring times share the covariate effect of the event times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringMode {
    /// Censoring hazard `η exp(xβ) κ t^{κ-1}`, identical to the event hazard.
    WithCovariates,
    /// Censoring hazard `η κ t^{κ-1}`, ignoring the covariates.
    #[default]
    BaselineOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub p: usize,
    /// Samples per subgroup (each of the training and test sets).
    pub n_per_subgroup: Vec<usize>,
    pub true_effects: Vec<Vec<f64>>,
    pub weibull_scale: Vec<f64>,
    pub weibull_shape: Vec<f64>,
    pub partial_corr: f64,
    /// Zero-based covariate index blocks sharing `partial_corr`.
    pub blocks: Vec<Vec<usize>>,
    #[serde(default)]
    pub censoring: CensoringMode,
    pub seed: u64,
}

/// Weibull parameters `(η, κ)` of the cumulative hazard `η t^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub eta: f64,
    pub kappa: f64,
}

impl WeibullParams {
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        self.eta * t.powf(self.kappa)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }
}

/// Solves `S(t1) = s1, S(t2) = s2` for a Weibull survival curve.
pub fn weibull_from_survival_anchors(t1: f64, s1: f64, t2: f64, s2: f64) -> Result<WeibullParams> {
    let valid = |s: f64| s > 0.0 && s < 1.0;
    if !(t1 > 0.0 && t2 > t1 && valid(s1) && valid(s2) && s2 < s1) {
        return Err(Error::InvalidParameter(format!(
            "anchors need 0 < t1 < t2 and 1 > S(t1) > S(t2) > 0, got ({t1}, {s1}), ({t2}, {s2})"
        )));
    }
    let kappa = (s2.ln() / s1.ln()).ln() / (t2 / t1).ln();
    let eta = -s1.ln() / t1.powf(kappa);
    Ok(WeibullParams { eta, kappa })
}

/// Weibull baselines of the two reference cohorts, anchored at 3- and
/// 5-year survival of 57%/42% and 75%/62% (time unit: years).
pub fn reference_cohort_weibulls() -> [WeibullParams; 2] {
    [
        weibull_from_survival_anchors(3.0, 0.57, 5.0, 0.42).expect("valid anchors"),
        weibull_from_survival_anchors(3.0, 0.75, 5.0, 0.62).expect("valid anchors"),
    ]
}

/// True effects of the two-subgroup design: genes 1–3 act only in
/// subgroup 1, genes 7–9 only in subgroup 2, genes 4–6 in both.
pub fn default_true_effects(p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p < 9 {
        return Err(Error::InvalidParameter(format!(
            "the reference effect pattern needs p >= 9, got {p}"
        )));
    }
    let mut beta1 = vec![0.0; p];
    let mut beta2 = vec![0.0; p];
    for i in 0..3 {
        beta1[i] = 1.0;
        beta1[3 + i] = -1.0;
        beta2[3 + i] = -1.0;
        beta2[6 + i] = 1.0;
    }
    Ok((beta1, beta2))
}

/// Partial correlation used by the reference design.
///
/// Size-3 blocks are singular at +0.5, so the design's blocks carry
/// precision off-diagonals of +0.5·diag, i.e. partial correlation −0.5.
pub const REFERENCE_PARTIAL_CORR: f64 = -0.5;

impl SimulationDesign {
    /// Two-subgroup reference design with three prognostic blocks of genes
    /// 1–3, 4–6, 7–9 and all other genes independent.
    pub fn reference(p: usize, n: usize, seed: u64) -> Result<Self> {
        let (b1, b2) = default_true_effects(p)?;
        let [w1, w2] = reference_cohort_weibulls();
        Ok(Self {
            p,
            n_per_subgroup: vec![n, n],
            true_effects: vec![b1, b2],
            weibull_scale: vec![w1.eta, w2.eta],
            weibull_shape: vec![w1.kappa, w2.kappa],
            partial_corr: REFERENCE_PARTIAL_CORR,
            blocks: vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]],
            censoring: CensoringMode::BaselineOnly,
            seed,
        })
    }

    pub fn n_subgroups(&self) -> usize {
        self.n_per_subgroup.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.n_subgroups();
        if s == 0 {
            return Err(Error::InvalidParameter("design has no subgroups".into()));
        }
        if self.true_effects.len() != s || self.weibull_scale.len() != s || self.weibull_shape.len() != s {
            return Err(Error::Dimension(
                "per-subgroup design vectors must all have one entry per subgroup".into(),
            ));
        }
        if let Some(b) = self.true_effects.iter().find(|b| b.len() != self.p) {
            return Err(Error::Dimension(format!(
                "true effect vector has length {}, expected p = {}",
                b.len(),
                self.p
            )));
        }
        for (&eta, &kappa) in self.weibull_scale.iter().zip(&self.weibull_shape) {
            if !(eta > 0.0 && kappa > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weibull scale and shape must be positive, got ({eta}, {kappa})"
                )));
            }
        }
        validate_blocks(self.p, &self.blocks)
    }

    /// Draws one dataset. `draw` selects an independent replicate of the
    /// design (e.g. 0 = training set, 1 = test set).
    pub fn simulate(&self, draw: u64) -> Result<Dataset> {
        self.validate()?;
        let precision = make_precision(self.p, &self.blocks, self.partial_corr)?;
        let mut records = Vec::new();
        for s in 0..self.n_subgroups() {
            let mut rng = rng::stream(self.seed, draw * 1024 + s as u64);
            let x = sample_expression(self.n_per_subgroup[s], &precision, &mut rng)?;
            let sim = simulate_survival(
                &x,
                &self.true_effects[s],
                self.weibull_scale[s],
                self.weibull_shape[s],
                self.censoring,
                &mut rng,
            )?;
            for (m, &(time, event)) in sim.observed.iter().enumerate() {
                records.push(SurvivalRecord::new(
                    time,
                    event,
                    x.row(m).iter().copied().collect(),
                    s + 1,
                ));
            }
        }
        Dataset::new(records, default_covariate_names(self.p))
    }

    /// Independent training and test sets of the design.
    pub fn simulate_train_test(&self) -> Result<(Dataset, Dataset)> {
        Ok((self.simulate(0)?, self.simulate(1)?))
    }
}

fn validate_blocks(p: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; p];
    for block in blocks {
        for &i in block {
            if i >= p {
                return Err(Error::InvalidParameter(format!(
                    "block index {i} out of range for p = {p}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidParameter(format!(
                    "covariate {i} appears in more than one block"
                )));
            }
            seen[i] = true;
        }
    }
    Ok(())
}

/// Precision matrix whose implied partial correlations equal `partial_corr`
/// within each block and zero elsewhere, scaled so the implied covariance
/// has unit diagonal.
pub fn make_precision(p: usize, blocks: &[Vec<usize>], partial_corr: f64) -> Result<DMatrix<f64>> {
    validate_blocks(p, blocks)?;
    if !(partial_corr.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "partial correlation must lie in (-1, 1), got {partial_corr}"
        )));
    }
    let mut raw = DMatrix::<f64>::identity(p, p);
    for block in blocks {
        for &i in block {
            for &j in block {
                if i != j {
                    raw[(i, j)] = -partial_corr;
                }
            }
        }
    }
    let chol = Cholesky::new(raw.clone()).ok_or(Error::NotPositiveDefinite { column: None })?;
    // The smallest eigenvalue of a block is 1 - (k - 1)·ρ; reject
    // near-singular constructions that Cholesky lets through.
    let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_pivot < 1e-6 {
        return Err(Error::NotPositiveDefinite { column: None });
    }
    let cov = chol.inverse();
    let scale: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let mut omega = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = scale[i] * scale[j] * raw[(i, j)];
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    Ok(omega)
}

/// `n` independent rows from `N(0, Ω⁻¹)`.
pub fn sample_expression<R: Rng + ?Sized>(n: usize, precision: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = precision.nrows();
    if precision.ncols() != p {
        return Err(Error::Dimension("precision matrix must be square".into()));
    }
    let chol = Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite { column: None })?;
    let l = chol.l();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut z = nalgebra::DVector::<f64>::zeros(p);
    for m in 0..n {
        for v in z.iter_mut() {
            *v = std_normal(rng);
        }
        // Ω = L Lᵀ, so Lᵀ x = z gives Cov(x) = Ω⁻¹.
        let row = l
            .tr_solve_lower_triangular(&z)
            .ok_or(Error::NotPositiveDefinite { column: None })?;
        x.row_mut(m).copy_from(&row.transpose());
    }
    Ok(x)
}

/// Inverse-transform Weibull time for a uniform draw `u`.
pub fn weibull_time(u: f64, linear_predictor: f64, eta: f64, kappa: f64) -> f64 {
    (-u.ln() / (eta * linear_predictor.exp())).powf(1.0 / kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDraw {
    pub event_times: Vec<f64>,
    pub censoring_times: Vec<f64>,
    /// `(min(T, C), T <= C)` per row.
    pub observed: Vec<(f64, bool)>,
}

impl SurvivalDraw {
    pub fn censoring_rate(&self) -> f64 {
        let censored = self.observed.iter().filter(|o| !o.1).count();
        censored as f64 / self.observed.len().max(1) as f64
    }
}

pub fn simulate_survival<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &[f64],
    eta: f64,
    kappa: f64,
    censoring: CensoringMode,
    rng: &mut R,
) -> Result<SurvivalDraw> {
    if !(eta > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weibull scale and shape must be positive, got ({eta}, {kappa})"
        )));
    }
    if x.ncols() != beta.len() {
        return Err(Error::Dimension(format!(
            "covariates have {} columns, effect vector has {}",
            x.ncols(),
            beta.len()
        )));
    }
    let n = x.nrows();
    let mut draw = SurvivalDraw {
        event_times: Vec::with_capacity(n),
        censoring_times: Vec::with_capacity(n),
        observed: Vec::with_capacity(n),
    };
    for m in 0..n {
        let lp: f64 = x.row(m).iter().zip(beta).map(|(a, b)| a * b).sum();
        let t = weibull_time(open_unit(rng), lp, eta, kappa);
        let c_lp = match censoring {
            CensoringMode::WithCovariates => lp,
            CensoringMode::BaselineOnly => 0.0,
        };
        let c = weibull_time(open_unit(rng), c_lp, eta, kappa);
        draw.event_times.push(t);
        draw.censoring_times.push(c);
        draw.observed.push((t.min(c), t <= c));
    }
    Ok(draw)
}

//! Joint graph over covariates of all subgroups, the Markov random field
//! selection prior it induces, the continuous spike-and-slab prior on the
//! subgroup precision matrices, and their Gibbs updates.
//!
//! Inclusion indicators are laid out subgroup-major: entry `s * p + i`
//! holds covariate `i` of subgroup `s` (both zero-based).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_normal_pdf, logistic, logit};
use crate::rng::{gamma, std_normal};

/// Spike/slab standard deviations for precision off-diagonals, the
/// exponential rate on the diagonal and the Bernoulli edge probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphPrior {
    pub nu0: f64,
    pub nu1: f64,
    pub lambda: f64,
    pub pi_edge: f64,
}

impl GraphPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 > 0.0 && self.nu1 > 0.0 && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("graph prior must be positive: {self:?}")));
        }
        if self.nu0 > self.nu1 {
            return Err(Error::InvalidParameter(format!(
                "spike sd nu0 = {} exceeds slab sd nu1 = {}",
                self.nu0, self.nu1
            )));
        }
        if !(self.pi_edge > 0.0 && self.pi_edge < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in (0, 1), got {}",
                self.pi_edge
            )));
        }
        Ok(())
    }

    fn sd(&self, edge: bool) -> f64 {
        if edge {
            self.nu1
        } else {
            self.nu0
        }
    }
}

/// `exp(a·Σγ + b_within·γ'G_within γ + b_between·γ'G_between γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrfPrior {
    pub a: f64,
    pub b_within: f64,
    pub b_between: f64,
}

impl MrfPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_within >= 0.0 && self.b_between >= 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid MRF prior {self:?}")));
        }
        Ok(())
    }
}

/// Within-subgroup adjacency for every subgroup plus same-covariate links
/// between each pair of subgroups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAdjacency {
    p: usize,
    n_subgroups: usize,
    /// Dense symmetric p×p boolean matrices, row-major.
    within: Vec<Vec<bool>>,
    /// One length-p vector per subgroup pair r < s, pairs in lexicographic order.
    between: Vec<Vec<bool>>,
}

impl JointAdjacency {
    pub fn empty(p: usize, n_subgroups: usize) -> Self {
        let n_pairs = n_subgroups * n_subgroups.saturating_sub(1) / 2;
        Self {
            p,
            n_subgroups,
            within: vec![vec![false; p * p]; n_subgroups],
            between: vec![vec![false; p]; n_pairs],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_subgroups(&self) -> usize {
        self.n_subgroups
    }

    pub fn n_pairs(&self) -> usize {
        self.between.len()
    }

    /// Index of the subgroup pair `(r, s)`, `r < s`.
    pub fn pair_index(&self, r: usize, s: usize) -> usize {
        debug_assert!(r < s && s < self.n_subgroups);
        // pairs before row r: sum_{k<r} (S - 1 - k)
        r * (2 * self.n_subgroups - r - 1) / 2 + (s - r - 1)
    }

    /// Subgroup pairs `(r, s)` in storage order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_pairs());
        for r in 0..self.n_subgroups {
            for s in r + 1..self.n_subgroups {
                out.push((r, s));
            }
        }
        out
    }

    pub fn within(&self, s: usize, i: usize, j: usize) -> bool {
        self.within[s][i * self.p + j]
    }

    pub fn set_within(&mut self, s: usize, i: usize, j: usize, edge: bool) {
        assert!(i != j, "within-subgroup graph has no self loops");
        self.within[s][i * self.p + j] = edge;
        self.within[s][j * self.p + i] = edge;
    }

    pub fn between(&self, r: usize, s: usize, i: usize) -> bool {
        let (lo, hi) = if r < s { (r, s) } else { (s, r) };
        self.between[self.pair_index(lo, hi)][i]
    }

    pub fn set_between(&mut self, r: usize, s: usize, i: usize, edge: bool) {
        let (lo, hi) = if r < s { (r, s) } else { (s, r) };
        let k = self.pair_index(lo, hi);
        self.between[k][i] = edge;
    }

    pub fn between_row(&self, pair: usize) -> &[bool] {
        &self.between[pair]
    }

    /// Upper-triangle edge bits of subgroup `s` in row-major `(i < j)` order.
    pub fn within_upper(&self, s: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.p * (self.p.saturating_sub(1)) / 2);
        for i in 0..self.p {
            for j in i + 1..self.p {
                out.push(self.within(s, i, j));
            }
        }
        out
    }

    pub fn within_edge_count(&self, s: usize) -> usize {
        self.within[s].iter().filter(|&&e| e).count() / 2
    }

    pub fn between_edge_count(&self) -> usize {
        self.between.iter().flatten().filter(|&&e| e).count()
    }

    pub fn clear_between(&mut self) {
        for row in &mut self.between {
            row.fill(false);
        }
    }

    /// Active within-subgroup neighbours of `(s, i)`.
    pub fn within_active_neighbors(&self, gamma: &[bool], s: usize, i: usize) -> usize {
        let row = &self.within[s][i * self.p..(i + 1) * self.p];
        let g = &gamma[s * self.p..(s + 1) * self.p];
        row.iter().zip(g).filter(|(&e, &on)| e && on).count()
    }

    /// Active copies of covariate `i` in other subgroups linked to `(s, i)`.
    pub fn between_active_neighbors(&self, gamma: &[bool], s: usize, i: usize) -> usize {
        (0..self.n_subgroups)
            .filter(|&r| r != s && gamma[r * self.p + i] && self.between(r, s, i))
            .count()
    }

    /// The symmetric pS×pS 0/1 matrix with zero diagonal.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (p, n) = (self.p, self.n_subgroups);
        let mut g = DMatrix::zeros(p * n, p * n);
        for s in 0..n {
            for i in 0..p {
                for j in 0..p {
                    if i != j && self.within(s, i, j) {
                        g[(s * p + i, s * p + j)] = 1.0;
                    }
                }
            }
        }
        for (r, s) in self.pairs() {
            for i in 0..p {
                if self.between(r, s, i) {
                    g[(r * p + i, s * p + i)] = 1.0;
                    g[(s * p + i, r * p + i)] = 1.0;
                }
            }
        }
        g
    }
}

fn check_gamma(gamma: &[bool], g: &JointAdjacency) -> Result<()> {
    if gamma.len() != g.p * g.n_subgroups {
        return Err(Error::Dimension(format!(
            "inclusion vector has length {}, graph covers {} x {}",
            gamma.len(),
            g.n_subgroups,
            g.p
        )));
    }
    Ok(())
}

/// `a·Σγ + b_within·γ'G_within γ + b_between·γ'G_between γ` over the full
/// symmetric G, so each active edge contributes twice.
pub fn mrf_log_prior_unnormalized(gamma: &[bool], g: &JointAdjacency, prior: &MrfPrior) -> Result<f64> {
    check_gamma(gamma, g)?;
    let p = g.p;
    let active = gamma.iter().filter(|&&x| x).count() as f64;
    let mut within_pairs = 0usize;
    for s in 0..g.n_subgroups {
        for i in 0..p {
            for j in i + 1..p {
                if gamma[s * p + i] && gamma[s * p + j] && g.within(s, i, j) {
                    within_pairs += 1;
                }
            }
        }
    }
    let mut between_pairs = 0usize;
    for (r, s) in g.pairs() {
        for i in 0..p {
            if gamma[r * p + i] && gamma[s * p + i] && g.between(r, s, i) {
                between_pairs += 1;
            }
        }
    }
    Ok(prior.a * active
        + 2.0 * prior.b_within * within_pairs as f64
        + 2.0 * prior.b_between * between_pairs as f64)
}

/// Log-odds of `γ_{s,i} = 1` given all other indicators under the MRF prior.
pub fn mrf_conditional_logit(gamma: &[bool], g: &JointAdjacency, s: usize, i: usize, prior: &MrfPrior) -> f64 {
    prior.a
        + 2.0 * prior.b_within * g.within_active_neighbors(gamma, s, i) as f64
        + 2.0 * prior.b_between * g.between_active_neighbors(gamma, s, i) as f64
}

pub fn mrf_conditional_inclusion(gamma: &[bool], g: &JointAdjacency, s: usize, i: usize, prior: &MrfPrior) -> f64 {
    logistic(mrf_conditional_logit(gamma, g, s, i, prior))
}

/// One systematic-scan Gibbs sweep over γ under the MRF prior alone.
pub fn mrf_gibbs_sweep<R: Rng + ?Sized>(gamma: &mut [bool], g: &JointAdjacency, prior: &MrfPrior, rng: &mut R) {
    let p = g.p;
    for s in 0..g.n_subgroups {
        for i in 0..p {
            let prob = mrf_conditional_inclusion(gamma, g, s, i, prior);
            gamma[s * p + i] = rng.random::<f64>() < prob;
        }
    }
}

/// Exact inclusion marginals of the MRF prior by enumerating all 2^{pS}
/// configurations.
pub fn brute_force_mrf_marginals(g: &JointAdjacency, prior: &MrfPrior) -> Result<Vec<f64>> {
    let n = g.p * g.n_subgroups;
    if n > 20 {
        return Err(Error::EnumerationTooLarge(n));
    }
    let mut log_weights = Vec::with_capacity(1 << n);
    let mut gamma = vec![false; n];
    for state in 0u32..(1u32 << n) {
        for (k, bit) in gamma.iter_mut().enumerate() {
            *bit = state >> k & 1 == 1;
        }
        log_weights.push(mrf_log_prior_unnormalized(&gamma, g, prior)?);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut marginals = vec![0.0; n];
    for (state, lw) in log_weights.iter().enumerate() {
        let w = (lw - max).exp();
        total += w;
        for (k, m) in marginals.iter_mut().enumerate() {
            if state >> k & 1 == 1 {
                *m += w;
            }
        }
    }
    Ok(marginals.into_iter().map(|m| m / total).collect())
}

// ---------------------------------------------------------------------------
// Edge updates
// ---------------------------------------------------------------------------

/// Conditional probability of the within-subgroup edge `(s, i, j)` given
/// the precision entry ω_ij and the two inclusion indicators it couples.
pub fn within_edge_probability(omega_ij: f64, gamma_i: bool, gamma_j: bool, graph: &GraphPrior, mrf: &MrfPrior) -> f64 {
    let coupling = if gamma_i && gamma_j { 2.0 * mrf.b_within } else { 0.0 };
    let log_odds = logit(graph.pi_edge) + ln_normal_pdf(omega_ij, graph.nu1) - ln_normal_pdf(omega_ij, graph.nu0)
        + coupling;
    logistic(log_odds)
}

/// Conditional probability of the between-subgroup edge linking covariate
/// `i` in two subgroups. No precision term enters.
pub fn between_edge_probability(gamma_ri: bool, gamma_si: bool, graph: &GraphPrior, mrf: &MrfPrior) -> f64 {
    let coupling = if gamma_ri && gamma_si { 2.0 * mrf.b_between } else { 0.0 };
    logistic(logit(graph.pi_edge) + coupling)
}

#[allow(clippy::too_many_arguments)]
pub fn update_edge_within<R: Rng + ?Sized>(
    g: &mut JointAdjacency,
    s: usize,
    i: usize,
    j: usize,
    omega_ij: f64,
    gamma: &[bool],
    graph: &GraphPrior,
    mrf: &MrfPrior,
    rng: &mut R,
) -> bool {
    debug_assert!(i < j);
    let p = g.p;
    let prob = within_edge_probability(omega_ij, gamma[s * p + i], gamma[s * p + j], graph, mrf);
    let edge = rng.random::<f64>() < prob;
    g.set_within(s, i, j, edge);
    edge
}

#[allow(clippy::too_many_arguments)]
pub fn update_edge_between<R: Rng + ?Sized>(
    g: &mut JointAdjacency,
    r: usize,
    s: usize,
    i: usize,
    gamma: &[bool],
    graph: &GraphPrior,
    mrf: &MrfPrior,
    rng: &mut R,
) -> bool {
    debug_assert!(r < s);
    let p = g.p;
    let prob = between_edge_probability(gamma[r * p + i], gamma[s * p + i], graph, mrf);
    let edge = rng.random::<f64>() < prob;
    g.set_between(r, s, i, edge);
    edge
}

/// Full edge scan: every within edge of each subgroup in lexicographic
/// order, then (unless `skip_between`) every between edge.
pub fn update_graph<R: Rng + ?Sized>(
    g: &mut JointAdjacency,
    omegas: &[DMatrix<f64>],
    gamma: &[bool],
    graph: &GraphPrior,
    mrf: &MrfPrior,
    skip_between: bool,
    rng: &mut R,
) {
    let p = g.p;
    for s in 0..g.n_subgroups {
        for i in 0..p {
            for j in i + 1..p {
                update_edge_within(g, s, i, j, omegas[s][(i, j)], gamma, graph, mrf, rng);
            }
        }
    }
    if skip_between {
        return;
    }
    for (r, s) in g.pairs() {
        for i in 0..p {
            update_edge_between(g, r, s, i, gamma, graph, mrf, rng);
        }
    }
}

// ---------------------------------------------------------------------------
// Precision block sampler
// ---------------------------------------------------------------------------

/// Precision matrices of all subgroups.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionState {
    pub omegas: Vec<DMatrix<f64>>,
}

impl PrecisionState {
    pub fn identity(p: usize, n_subgroups: usize) -> Self {
        Self {
            omegas: vec![DMatrix::identity(p, p); n_subgroups],
        }
    }
}

/// Mean and covariance of the Gaussian full conditional of the off-diagonal
/// column `u = ω_{-i,i}`, given `Ω₁₁⁻¹` (the inverse of Ω with row and
/// column `i` removed).
///
/// `C⁻¹ = diag(v₁₂⁻¹) + (s_ii + λ) Ω₁₁⁻¹`, mean `−C s₁₂`.
pub fn column_conditional(
    inv_omega11: &DMatrix<f64>,
    scatter_col: &DVector<f64>,
    scatter_ii: f64,
    slab_variances: &DVector<f64>,
    lambda: f64,
) -> Option<(DVector<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let mut precision = inv_omega11 * (scatter_ii + lambda);
    for k in 0..precision.nrows() {
        precision[(k, k)] += 1.0 / slab_variances[k];
    }
    let chol = Cholesky::new(precision)?;
    let mean = -chol.solve(scatter_col);
    Some((mean, chol))
}

/// One block-Gibbs sweep over the columns of a subgroup precision matrix
/// under the continuous spike-and-slab prior given the within-subgroup
/// graph of subgroup `s`. `scatter` is `XᵀX` (no 1/n scaling).
#[allow(clippy::too_many_arguments)]
pub fn update_precision_block<R: Rng + ?Sized>(
    omega: &mut DMatrix<f64>,
    adjacency: &JointAdjacency,
    s: usize,
    scatter: &DMatrix<f64>,
    n: usize,
    prior: &GraphPrior,
    rng: &mut R,
) -> Result<()> {
    let p = omega.nrows();
    if omega.ncols() != p || scatter.shape() != (p, p) || adjacency.p != p {
        return Err(Error::Dimension("precision, scatter and graph dimensions differ".into()));
    }
    let mut sigma = Cholesky::new(omega.clone())
        .ok_or(Error::NotPositiveDefinite { column: None })?
        .inverse();
    let shape = n as f64 / 2.0 + 1.0;
    for i in 0..p {
        let rest: Vec<usize> = (0..p).filter(|&k| k != i).collect();
        let sigma11 = sigma.select_rows(&rest).select_columns(&rest);
        let sigma12 = DVector::from_iterator(p - 1, rest.iter().map(|&k| sigma[(k, i)]));
        let inv_omega11 = &sigma11 - &sigma12 * sigma12.transpose() / sigma[(i, i)];
        let scatter_col = DVector::from_iterator(p - 1, rest.iter().map(|&k| scatter[(k, i)]));
        let slab_var = DVector::from_iterator(
            p - 1,
            rest.iter().map(|&k| prior.sd(adjacency.within(s, k, i)).powi(2)),
        );
        let rate = (scatter[(i, i)] + prior.lambda) / 2.0;

        let u = if p > 1 {
            let (mean, chol) = column_conditional(&inv_omega11, &scatter_col, scatter[(i, i)], &slab_var, prior.lambda)
                .ok_or(Error::NotPositiveDefinite { column: Some(i) })?;
            let z = DVector::from_fn(p - 1, |_, _| std_normal(rng));
            let noise = chol
                .l()
                .tr_solve_lower_triangular(&z)
                .ok_or(Error::NotPositiveDefinite { column: Some(i) })?;
            mean + noise
        } else {
            DVector::zeros(0)
        };
        let v = gamma(rng, shape, rate);
        let inv_u = &inv_omega11 * &u;
        let quad = u.dot(&inv_u);
        if !(v > 0.0 && quad.is_finite()) {
            return Err(Error::NotPositiveDefinite { column: Some(i) });
        }
        for (k, &r) in rest.iter().enumerate() {
            omega[(r, i)] = u[k];
            omega[(i, r)] = u[k];
        }
        omega[(i, i)] = v + quad;

        // Σ from the block inverse of the updated Ω.
        for (a, &ra) in rest.iter().enumerate() {
            for (b, &rb) in rest.iter().enumerate() {
                sigma[(ra, rb)] = inv_omega11[(a, b)] + inv_u[a] * inv_u[b] / v;
            }
            sigma[(ra, i)] = -inv_u[a] / v;
            sigma[(i, ra)] = -inv_u[a] / v;
        }
        sigma[(i, i)] = 1.0 / v;
    }
    if Cholesky::new(omega.clone()).is_none() {
        return Err(Error::NotPositiveDefinite { column: None });
    }
    Ok(())
}

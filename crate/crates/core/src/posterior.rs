//! Reductions of stored draws: selection probabilities, coefficient
//! summaries, the mean-model-size selection rule, MPM and BMA coefficient
//! vectors and edge probabilities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{ChainSamples, ModelVariant};

/// Number of top-likelihood draws averaged by [`bma_coefficients`].
pub const BMA_TOP: usize = 100;

/// Per-chain posterior summary. Vectors indexed `[subgroup][covariate]`
/// are stored flat, subgroup-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub model: ModelVariant,
    pub p: usize,
    pub labels: Vec<usize>,
    pub n_records: usize,
    pub selection_prob: Vec<f64>,
    pub marginal_mean: Vec<f64>,
    pub marginal_sd: Vec<f64>,
    /// `None` when the covariate was never included.
    pub conditional_mean: Vec<Option<f64>>,
    pub conditional_sd: Vec<Option<f64>>,
    /// `[subgroup][i < j]`; empty for models without a graph.
    pub edge_prob_within: Vec<Vec<f64>>,
    /// `[pair][covariate]`; empty for models without a graph.
    pub edge_prob_between: Vec<Vec<f64>>,
    pub mean_model_size: Vec<f64>,
    /// Posterior mean of every subgroup's hazard increments.
    pub mean_hazard: Vec<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn n_subgroups(&self) -> usize {
        self.labels.len()
    }

    pub fn idx(&self, s: usize, i: usize) -> usize {
        s * self.p + i
    }

    pub fn selection_probs(&self, s: usize) -> &[f64] {
        &self.selection_prob[s * self.p..(s + 1) * self.p]
    }
}

/// Mean and population SD; `None` for an empty slice.
fn moments(xs: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn summarize(samples: &ChainSamples) -> Result<PosteriorSummary> {
    let n = samples.n_records();
    if n == 0 {
        return Err(Error::InvalidParameter("chain holds no post-burn-in draws".into()));
    }
    let (p, s_count) = (samples.p, samples.n_subgroups());
    let mut summary = PosteriorSummary {
        model: samples.model,
        p,
        labels: samples.labels.clone(),
        n_records: n,
        selection_prob: Vec::with_capacity(p * s_count),
        marginal_mean: Vec::with_capacity(p * s_count),
        marginal_sd: Vec::with_capacity(p * s_count),
        conditional_mean: Vec::with_capacity(p * s_count),
        conditional_sd: Vec::with_capacity(p * s_count),
        edge_prob_within: Vec::new(),
        edge_prob_between: Vec::new(),
        mean_model_size: Vec::with_capacity(s_count),
        mean_hazard: Vec::with_capacity(s_count),
    };
    for s in 0..s_count {
        for i in 0..p {
            let included = (0..n).filter(|&r| samples.gamma_at(r, s, i)).count();
            summary.selection_prob.push(included as f64 / n as f64);
            let (m, sd) = moments((0..n).map(|r| samples.beta_at(r, s, i))).expect("nonempty chain");
            summary.marginal_mean.push(m);
            summary.marginal_sd.push(sd);
            let cond = moments((0..n).filter(|&r| samples.gamma_at(r, s, i)).map(|r| samples.beta_at(r, s, i)));
            summary.conditional_mean.push(cond.map(|c| c.0));
            summary.conditional_sd.push(cond.map(|c| c.1));
        }
        let sizes: f64 = (0..n)
            .map(|r| (0..p).filter(|&i| samples.gamma_at(r, s, i)).count() as f64)
            .sum();
        summary.mean_model_size.push(sizes / n as f64);
        let j = samples.n_intervals()[s];
        let mut h = vec![0.0; j];
        for r in 0..n {
            for (acc, v) in h.iter_mut().zip(samples.h_at(r, s)) {
                *acc += v;
            }
        }
        summary.mean_hazard.push(h.into_iter().map(|v| v / n as f64).collect());
    }
    if samples.has_graph() {
        let edges = edge_probabilities(samples);
        summary.edge_prob_within = edges.within;
        summary.edge_prob_between = edges.between;
    }
    Ok(summary)
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per subgroup, the `round(m*)` covariates with the highest selection
/// probability, `m*` being the mean model size; ties go to the lower index.
/// Indices are returned in ascending order.
pub fn select_variables(summary: &PosteriorSummary) -> Vec<Vec<usize>> {
    (0..summary.n_subgroups())
        .map(|s| {
            let k = round_half_up(summary.mean_model_size[s]).min(summary.p);
            let probs = summary.selection_probs(s);
            let mut order: Vec<usize> = (0..summary.p).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            let mut chosen = order[..k].to_vec();
            chosen.sort_unstable();
            chosen
        })
        .collect()
}

/// Median probability model: marginal posterior mean where the selection
/// probability exceeds one half, zero elsewhere.
pub fn mpm_coefficients(summary: &PosteriorSummary) -> Vec<Vec<f64>> {
    (0..summary.n_subgroups())
        .map(|s| {
            (0..summary.p)
                .map(|i| {
                    let k = summary.idx(s, i);
                    if summary.selection_prob[k] > 0.5 {
                        summary.marginal_mean[k]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean coefficient vector of the [`BMA_TOP`] stored draws with the largest
/// log-likelihood of each subgroup (stable: earlier draws win ties).
pub fn bma_coefficients(samples: &ChainSamples) -> Result<Vec<Vec<f64>>> {
    let n = samples.n_records();
    if n == 0 {
        return Err(Error::InvalidParameter("chain holds no post-burn-in draws".into()));
    }
    Ok((0..samples.n_subgroups())
        .map(|s| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| samples.log_likelihood_at(b, s).total_cmp(&samples.log_likelihood_at(a, s)));
            let top = &order[..n.min(BMA_TOP)];
            (0..samples.p)
                .map(|i| top.iter().map(|&r| samples.beta_at(r, s, i)).sum::<f64>() / top.len() as f64)
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilities {
    /// `[subgroup][i < j]` in row-major upper-triangle order.
    pub within: Vec<Vec<f64>>,
    /// `[pair][covariate]`, pairs `(r, s)` with `r < s` in lexicographic order.
    pub between: Vec<Vec<f64>>,
}

/// Empirical edge inclusion frequencies; empty tables for models without
/// a graph.
pub fn edge_probabilities(samples: &ChainSamples) -> EdgeProbabilities {
    if !samples.has_graph() || samples.n_records() == 0 {
        return EdgeProbabilities {
            within: Vec::new(),
            between: Vec::new(),
        };
    }
    let n = samples.n_records();
    let freq = |bits: &mut dyn Iterator<Item = &[bool]>, len: usize| {
        let mut counts = vec![0usize; len];
        for row in bits {
            for (c, &b) in counts.iter_mut().zip(row) {
                *c += b as usize;
            }
        }
        counts.into_iter().map(|c| c as f64 / n as f64).collect::<Vec<f64>>()
    };
    let within = (0..samples.n_subgroups())
        .map(|s| freq(&mut (0..n).map(|r| samples.within_at(r, s)), samples.n_within_pairs()))
        .collect();
    let between = (0..samples.n_between_pairs())
        .map(|pair| freq(&mut (0..n).map(|r| samples.between_at(r, pair)), samples.p))
        .collect();
    EdgeProbabilities { within, between }
}

/// Upper-triangle position of `(i, j)`, `i < j`, in a p×p matrix.
pub fn upper_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// One row of the coefficient summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub subgroup: usize,
    pub covariate: usize,
    pub name: String,
    pub selection_prob: f64,
    pub marginal_mean: f64,
    pub marginal_sd: f64,
    pub conditional_mean: Option<f64>,
    pub conditional_sd: Option<f64>,
}

pub fn summary_rows(summary: &PosteriorSummary, names: &[String]) -> Vec<SummaryRow> {
    let mut rows = Vec::with_capacity(summary.selection_prob.len());
    for (s, &label) in summary.labels.iter().enumerate() {
        for i in 0..summary.p {
            let k = summary.idx(s, i);
            rows.push(SummaryRow {
                subgroup: label,
                covariate: i + 1,
                name: names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1)),
                selection_prob: summary.selection_prob[k],
                marginal_mean: summary.marginal_mean[k],
                marginal_sd: summary.marginal_sd[k],
                conditional_mean: summary.conditional_mean[k],
                conditional_sd: summary.conditional_sd[k],
            });
        }
    }
    rows
}

/// One row of the edge probability table. Within edges have
/// `subgroup_a == subgroup_b`; between edges have `i == j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub kind: String,
    pub subgroup_a: usize,
    pub subgroup_b: usize,
    pub i: usize,
    pub j: usize,
    pub probability: f64,
}

pub fn edge_rows(summary: &PosteriorSummary) -> Vec<EdgeRow> {
    let p = summary.p;
    let mut rows = Vec::new();
    for (s, probs) in summary.edge_prob_within.iter().enumerate() {
        let label = summary.labels[s];
        for i in 0..p {
            for j in i + 1..p {
                rows.push(EdgeRow {
                    kind: "within".into(),
                    subgroup_a: label,
                    subgroup_b: label,
                    i: i + 1,
                    j: j + 1,
                    probability: probs[upper_index(p, i, j)],
                });
            }
        }
    }
    let n = summary.n_subgroups();
    let pairs = (0..n).flat_map(|r| (r + 1..n).map(move |s| (r, s)));
    for ((r, s), probs) in pairs.zip(&summary.edge_prob_between) {
        for (i, &prob) in probs.iter().enumerate() {
            rows.push(EdgeRow {
                kind: "between".into(),
                subgroup_a: summary.labels[r],
                subgroup_b: summary.labels[s],
                i: i + 1,
                j: i + 1,
                probability: prob,
            });
        }
    }
    rows
}

/// Writes serializable rows as CSV, preceded by an optional `#` comment line.
pub fn write_rows_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T], comment: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    if let Some(c) = comment {
        buf.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads rows written by [`write_rows_csv`], skipping `#` comment lines.
pub fn read_rows_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

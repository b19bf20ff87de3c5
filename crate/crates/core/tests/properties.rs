use proptest::prelude::*;

use coxbvs::data::{stratified_split, Dataset, Scope, StandardizationParams, SurvivalRecord};
use coxbvs::evaluate::{brier_score, integrated_brier, km_censoring, km_survival, Baseline, PredictionModel};
use coxbvs::graph::{mrf_conditional_logit, mrf_log_prior_unnormalized, JointAdjacency, MrfPrior};
use coxbvs::sampler::{read_chain, run_mcmc, write_chain, ChainConfig, ModelData, ModelVariant, PriorPreset};
use coxbvs::simulate::SimulationDesign;

fn records(n_per: usize, groups: usize) -> impl Strategy<Value = Vec<SurvivalRecord>> {
    prop::collection::vec((0.1f64..10.0, any::<bool>(), prop::collection::vec(-5.0f64..5.0, 2)), n_per * groups).prop_map(
        move |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(k, (t, e, x))| SurvivalRecord::new(t, e, x, k % groups + 1))
                .collect()
        },
    )
}

fn graph_and_gamma() -> impl Strategy<Value = (JointAdjacency, Vec<bool>, MrfPrior)> {
    (1usize..4, 2usize..5).prop_flat_map(|(s, p)| {
        let pairs = p * (p - 1) / 2;
        (
            prop::collection::vec(any::<bool>(), s * pairs),
            prop::collection::vec(any::<bool>(), p * s * (s - 1) / 2),
            prop::collection::vec(any::<bool>(), p * s),
            -3.0f64..1.0,
            0.0f64..1.5,
            0.0f64..1.5,
        )
            .prop_map(move |(w, b, gamma, a, bw, bb)| {
                let mut g = JointAdjacency::empty(p, s);
                let mut k = 0;
                for sg in 0..s {
                    for i in 0..p {
                        for j in (i + 1)..p {
                            g.set_within(sg, i, j, w[k]);
                            k += 1;
                        }
                    }
                }
                let mut k = 0;
                for r in 0..s {
                    for q in (r + 1)..s {
                        for i in 0..p {
                            g.set_between(r, q, i, b[k]);
                            k += 1;
                        }
                    }
                }
                let prior = MrfPrior {
                    a,
                    b_within: bw,
                    b_between: bb,
                };
                (g, gamma, prior)
            })
    })
}

fn single_subgroup_model(beta: f64, increments: Vec<f64>) -> PredictionModel {
    let boundaries: Vec<f64> = (0..=increments.len()).map(|k| k as f64 * 2.0).collect();
    let identity = StandardizationParams {
        scope: Scope::PerSubgroup,
        units: vec![coxbvs::data::ScaleUnit {
            means: vec![0.0, 0.0],
            sds: vec![1.0, 1.0],
        }],
    };
    let baseline = Baseline::new(boundaries, increments, 0.1).unwrap();
    PredictionModel::new(vec![vec![beta, -beta]], vec![baseline], identity).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_training_columns_have_zero_mean_unit_sd(rows in records(8, 2)) {
        let ds = Dataset::from_records(rows).unwrap();
        for scope in [Scope::Pooled, Scope::PerSubgroup] {
            let params = StandardizationParams::fit(&ds, scope).unwrap();
            let z = params.apply(&ds).unwrap();
            let units: Vec<Vec<&SurvivalRecord>> = match scope {
                Scope::Pooled => vec![z.records().iter().collect()],
                Scope::PerSubgroup => (1..=2).map(|s| z.records().iter().filter(|r| r.subgroup == s).collect()).collect(),
            };
            for unit in units {
                let n = unit.len() as f64;
                for i in 0..2 {
                    let m = unit.iter().map(|r| r.covariates[i]).sum::<f64>() / n;
                    let v = unit.iter().map(|r| (r.covariates[i] - m).powi(2)).sum::<f64>() / (n - 1.0);
                    prop_assert!(m.abs() < 1e-9);
                    prop_assert!((v - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mrf_conditional_matches_log_prior_ratio((g, gamma, prior) in graph_and_gamma()) {
        let p = g.p();
        for k in 0..gamma.len() {
            let (s, i) = (k / p, k % p);
            let mut on = gamma.clone();
            on[k] = true;
            let mut off = gamma.clone();
            off[k] = false;
            let ratio = mrf_log_prior_unnormalized(&on, &g, &prior).unwrap()
                - mrf_log_prior_unnormalized(&off, &g, &prior).unwrap();
            prop_assert!((mrf_conditional_logit(&gamma, &g, s, i, &prior) - ratio).abs() < 1e-10);
        }
    }

    #[test]
    fn brier_and_ibs_lie_in_unit_interval(
        rows in records(12, 1),
        beta in -2.0f64..2.0,
        increments in prop::collection::vec(0.01f64..1.0, 1..5),
        t in 0.1f64..9.0,
    ) {
        let mut rows = rows;
        // Guarantee positive censoring weights by making the last time an event.
        let last = (0..rows.len()).max_by(|&a, &b| rows[a].time.total_cmp(&rows[b].time)).unwrap();
        rows[last].event = true;
        let model = single_subgroup_model(beta, increments);
        let bs = brier_score(&model, &rows, t).unwrap();
        prop_assert!(bs >= 0.0 && bs.is_finite());
        let ibs = integrated_brier(&model, &rows, t).unwrap();
        prop_assert!(ibs >= 0.0 && ibs.is_finite());
        // Without censoring the weights are all one and both scores are at most one.
        let uncensored: Vec<SurvivalRecord> = rows.iter().map(|r| SurvivalRecord { event: true, ..r.clone() }).collect();
        let bs = brier_score(&model, &uncensored, t).unwrap();
        let ibs = integrated_brier(&model, &uncensored, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&bs));
        prop_assert!((0.0..=1.0).contains(&ibs));
    }

    #[test]
    fn kaplan_meier_curves_are_nonincreasing(rows in records(15, 1), grid in prop::collection::vec(0.0f64..11.0, 2..30)) {
        let mut grid = grid;
        grid.sort_by(f64::total_cmp);
        let mut rows = rows;
        let last = (0..rows.len()).max_by(|&a, &b| rows[a].time.total_cmp(&rows[b].time)).unwrap();
        rows[last].event = true;
        for f in [km_survival(&rows), km_censoring(&rows).unwrap()] {
            let values: Vec<f64> = grid.iter().map(|&t| f.at(t)).collect();
            prop_assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn stratified_split_preserves_strata(rows in records(20, 2), seed in any::<u64>(), fraction in 0.3f64..0.9) {
        let ds = Dataset::from_records(rows).unwrap();
        let strata_ok = (1..=2).all(|s| {
            [true, false].iter().all(|&e| ds.records().iter().filter(|r| r.subgroup == s && r.event == e).count() >= 2)
        });
        prop_assume!(strata_ok);
        let (train, test) = stratified_split(&ds, fraction, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        for s in 1..=2 {
            for e in [true, false] {
                let count = |d: &Dataset| d.records().iter().filter(|r| r.subgroup == s && r.event == e).count();
                let total = count(&ds);
                let expected = (fraction * total as f64 + 0.5).floor() as usize;
                prop_assert_eq!(count(&train), expected.min(total));
            }
        }
        let again = stratified_split(&ds, fraction, seed).unwrap();
        prop_assert_eq!(again.0.records(), train.records());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn chain_files_round_trip(seed in any::<u64>(), variant_idx in 0usize..4) {
        let variant = ModelVariant::ALL[variant_idx];
        let train = SimulationDesign::reference(9, 15, seed).unwrap().simulate(0).unwrap();
        let params = StandardizationParams::fit(&train, variant.scope()).unwrap();
        let data = ModelData::prepare(&params.apply(&train).unwrap(), variant).unwrap();
        let config = ChainConfig {
            iterations: 40,
            burn_in: 10,
            seed,
            model: variant,
            thin: 2,
            omega_thin: 3,
            priors: PriorPreset::Simulation.priors(9).unwrap(),
        };
        let samples = run_mcmc(&data, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_chain(dir.path().join("chain"), &samples, &config, "abc").unwrap();
        let (back, meta) = read_chain(&manifest).unwrap();
        prop_assert_eq!(back, samples);
        prop_assert_eq!(meta.config, config);
        prop_assert_eq!(meta.config_hash, "abc");
    }
}

use proptest::prelude::*;

use rankalign::eval::metrics::{pearson, roc_auc, spearman};
use rankalign::eval::{cross_val_scores, outer_folds, run_experiment, run_experiment_with_scores};
use rankalign::models::{fit_method, score};
use rankalign::pairing::build_pairs;
use rankalign::report::{render, Format};
use rankalign::synthgen::generate;
use rankalign::{
    Cohort, EvalReport, ExperimentConfig, GeneratorConfig, HyperSearchSpec, Matrix, Method, MethodTag, TrainOptions,
};
use rankalign_oracles as oracle;

fn small_synth(n: usize, seed: u64) -> rankalign::SynthCohort {
    generate(&GeneratorConfig {
        n,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn fixed(c: f64) -> HyperSearchSpec {
    HyperSearchSpec {
        fixed_c: Some(c),
        ..HyperSearchSpec::default()
    }
}

fn quick_config(runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        runs,
        folds: 3,
        search: HyperSearchSpec {
            c_grid: vec![0.01, 0.1, 1.0],
            ..HyperSearchSpec::default()
        },
        ..ExperimentConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairs_match_double_loop(seed in 0u64..10_000, n in 2usize..40, delta in 0.0f64..60.0) {
        let cohort = oracle::random_cohort(&mut oracle::rng(seed), n, 3, false);
        let expected = oracle::brute_pairs(&cohort, delta);
        match build_pairs(&cohort, &cohort.all_rows(), delta) {
            Ok(pairs) => {
                prop_assert_eq!(pairs.len(), expected.len());
                for (p, (ij, diff, sign)) in expected.iter().enumerate() {
                    prop_assert_eq!(pairs.index_pairs[p], *ij);
                    prop_assert_eq!(pairs.signs[p], *sign);
                    prop_assert_eq!(pairs.diffs.row(p), diff.as_slice());
                }
            }
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn metrics_invariant_under_increasing_affine_maps(
        scores in prop::collection::vec(-50i32..50, 4..60),
        a in 0.1f64..20.0,
        b in -100.0f64..100.0,
        seed in 0u64..1000,
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 / 4.0).collect();
        let t: Vec<f64> = s.iter().map(|v| a * v + b).collect();
        let mut rng = oracle::rng(seed);
        let y: Vec<f64> = s.iter().map(|v| v + oracle::normal(&mut rng)).collect();
        let mut labels: Vec<u8> = y.iter().map(|&v| u8::from(v > 0.0)).collect();
        labels[0] = 0;
        labels[1] = 1;
        prop_assert_eq!(roc_auc(&s, &labels).unwrap(), roc_auc(&t, &labels).unwrap());
        if let (Ok(r1), Ok(r2)) = (spearman(&s, &y), spearman(&t, &y)) {
            prop_assert!((r1 - r2).abs() <= 1e-12);
        }
        if let (Ok(r1), Ok(r2)) = (pearson(&s, &y), pearson(&t, &y)) {
            prop_assert!((r1 - r2).abs() <= 1e-9);
        }
    }
}

#[test]
fn ranking_score_order_is_pairwise_sign() {
    let synth = small_synth(80, 4);
    let cohort = &synth.cohort;
    let model = fit_method(
        cohort,
        &cohort.all_rows(),
        Method::RankingSvm,
        15.0,
        &fixed(0.5),
        &TrainOptions::default(),
        9,
    )
    .unwrap();
    let s = score(&model, cohort, &cohort.all_rows()).unwrap();
    let z: Vec<Vec<f64>> = (0..cohort.n())
        .map(|i| model.norm_stats.transform_row(cohort.features().row(i)))
        .collect();
    let mut rng = oracle::rng(5);
    use rand::Rng;
    for _ in 0..1000 {
        let i = rng.random_range(0..cohort.n());
        let j = rng.random_range(0..cohort.n());
        let d: f64 = z[i].iter().zip(&z[j]).zip(&model.weights).map(|((a, b), w)| w * (a - b)).sum();
        assert_eq!(s[i] < s[j], d < 0.0, "rows {i}, {j}");
    }
}

#[test]
fn held_out_rows_do_not_influence_fold_models() {
    let synth = small_synth(90, 6);
    let cohort = &synth.cohort;
    let folds = outer_folds(cohort, 3, 12, false);
    let held: &[usize] = &folds[0];
    let train: Vec<usize> = folds[1..].concat();

    let mut rng = oracle::rng(8);
    let mut x = cohort.features().clone();
    let mut rating = cohort.rating().to_vec();
    let mut labels = cohort.binary_label().unwrap().to_vec();
    use rand::Rng;
    for &i in held {
        rating[i] = rng.random_range(0.0..100.0);
        labels[i] = 1 - labels[i];
        for j in 0..cohort.m() {
            x.set(i, j, 1e3 * oracle::normal(&mut rng));
        }
    }
    let corrupted = Cohort::new(
        cohort.ids().to_vec(),
        cohort.feature_names().to_vec(),
        x,
        rating,
        Some(labels),
    )
    .unwrap();

    let search = HyperSearchSpec {
        c_grid: vec![0.05, 0.5],
        ..HyperSearchSpec::default()
    };
    for method in [Method::RankingSvm, Method::LinearRegression, Method::Svr, Method::ClassifierSvm] {
        let a = fit_method(cohort, &train, method, 15.0, &search, &TrainOptions::default(), 3).unwrap();
        let b = fit_method(&corrupted, &train, method, 15.0, &search, &TrainOptions::default(), 3).unwrap();
        assert_eq!(a, b, "{method:?}");
    }
}

#[test]
fn every_row_scored_once_by_a_model_that_did_not_see_it() {
    let synth = small_synth(70, 2);
    let cohort = &synth.cohort;
    let folds = outer_folds(cohort, 5, 31, true);
    let mut seen = vec![0; cohort.n()];
    for f in &folds {
        for &i in f {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));

    let out = cross_val_scores(cohort, Method::Svr, 15.0, &fixed(0.2), &TrainOptions::default(), 5, 31, true).unwrap();
    assert_eq!(out.models.len(), 5);
    for (k, f) in folds.iter().enumerate() {
        let train: Vec<usize> = folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.clone()).collect();
        let model = fit_method(cohort, &train, Method::Svr, 15.0, &fixed(0.2), &TrainOptions::default(), 0).unwrap();
        let refit = score(&model, cohort, f).unwrap();
        let own = score(&out.models[k], cohort, f).unwrap();
        for ((&i, e), o) in f.iter().zip(refit).zip(own) {
            assert_eq!(out.fold_of[i], k);
            assert_eq!(out.scores[i], o);
            // different solver seed, same optimum up to the stopping tolerance
            assert!((out.scores[i] - e).abs() <= 1e-3 * e.abs().max(1.0), "{} vs {e}", out.scores[i]);
        }
    }
}

#[test]
fn aggregates_recompute_from_records() {
    let synth = small_synth(60, 3);
    let report = run_experiment(&synth.cohort, &quick_config(3), 1).unwrap();
    assert_eq!(report.records.len(), 3 * 5);
    assert_eq!(EvalReport::aggregate(&report.records), report.aggregates);
    for agg in &report.aggregates {
        let vals: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.method == agg.method)
            .filter_map(|r| r.correlation)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert_eq!(agg.correlation.mean, Some(mean));
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((agg.correlation.std.unwrap() - var.sqrt()).abs() <= 1e-15);
    }
}

#[test]
fn reports_are_byte_identical_across_runs_and_jobs() {
    let synth = small_synth(60, 10);
    let cfg = quick_config(2);
    let a = render(&run_experiment(&synth.cohort, &cfg, 1).unwrap(), Format::Json).unwrap();
    let b = render(&run_experiment(&synth.cohort, &cfg, 1).unwrap(), Format::Json).unwrap();
    let c = render(&run_experiment(&synth.cohort, &cfg, 4).unwrap(), Format::Json).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn out_of_fold_ranking_scores_track_latent_severity() {
    let synth = small_synth(150, 21);
    let cfg = ExperimentConfig {
        methods: vec![MethodTag::RankingSvm],
        ..quick_config(1)
    };
    let (_, scores) = run_experiment_with_scores(&synth.cohort, &cfg, 1).unwrap();
    let ranking = scores.iter().find(|s| s.method == MethodTag::RankingSvm).unwrap();
    let rho = oracle::textbook_spearman(&ranking.scores, &synth.latent);
    assert!(rho > 0.5, "spearman with latent {rho}");
}

#[test]
fn constant_rows_matrix_is_rejected_gracefully() {
    let cohort = Cohort::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["f".into()],
        Matrix::from_vec(3, 1, vec![1.0, 1.0, 1.0]),
        vec![10.0, 10.0, 10.0],
        None,
    )
    .unwrap();
    assert!(build_pairs(&cohort, &cohort.all_rows(), 0.0).is_err());
}

use featlearn::data::{generate_synthetic, stratified_split, Dataset, SyntheticSpec};
use featlearn::harness::*;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n0: 36,
        n1: 44,
        n_unlabeled: 30,
        p: 12,
        s: 3,
        delta: 1.2,
        rho: 0.2,
        seed,
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.repeats = 2;
    cfg.k = 3;
    cfg.sae_dims = vec![8, 4];
    cfg.sae_train.iterations = 40;
    cfg.sae_train.learning_rate = 0.05;
    cfg.l2_grid = vec![1e-3, 1e-2];
    cfg.c_grid = vec![0.1, 1.0, 10.0];
    cfg.m_grid = vec![1, 3, 6];
    cfg.pc_grid = vec![2, 4, 8];
    cfg.lambda_count = 10;
    cfg
}

fn data() -> Dataset<f64> {
    generate_synthetic(&small_spec(5)).unwrap()
}

#[test]
fn separable_data_is_classified_perfectly() {
    let mut spec = small_spec(1);
    spec.delta = 12.0;
    spec.rho = 0.0;
    let ds: Dataset<f64> = generate_synthetic(&spec).unwrap();
    let split = stratified_split(&ds, 0.2, 0, true).unwrap();
    let run = run_pipeline(&ds, "llf".parse().unwrap(), &split, &[], &small_config(), 0).unwrap();
    assert_eq!(run.accuracy, 1.0);
}

#[test]
fn concatenated_features_have_raw_plus_top_layer_width() {
    let ds: Dataset<f64> = generate_synthetic(&SyntheticSpec::adni_like(2)).unwrap();
    let mut cfg = small_config();
    cfg.sae_dims = vec![40, 15];
    cfg.sae_train.iterations = 5;
    cfg.l2_grid = vec![1e-3];
    cfg.c_grid = vec![1.0];
    let split = stratified_split(&ds, 0.2, 0, true).unwrap();
    let run = run_pipeline(&ds, "llf-saef".parse().unwrap(), &split, &[], &cfg, 0).unwrap();
    assert_eq!(run.n_inputs(), 71);
    let saef = run_pipeline(&ds, "saef".parse().unwrap(), &split, &[], &cfg, 0).unwrap();
    assert_eq!(saef.n_inputs(), 15);
}

#[test]
fn test_rows_never_influence_fitting() {
    let ds = data();
    let cfg = small_config();
    let split = stratified_split(&ds, 0.2, 3, true).unwrap();
    let unlabeled = ds.unlabeled_indices();
    let mut corrupted = ds.features().to_owned();
    for (k, &i) in split.test.iter().enumerate() {
        for j in 0..corrupted.ncols() {
            corrupted[[i, j]] = corrupted[[i, j]] * -7.0 + 1e3 * ((k + j) as f64).sin();
        }
    }
    let mutated = ds.with_features(corrupted, ds.feature_names().to_vec()).unwrap();
    for spec in PipelineSpec::table1() {
        let a = run_pipeline(&ds, spec, &split, &unlabeled, &cfg, 3).unwrap();
        let b = run_pipeline(&mutated, spec, &split, &unlabeled, &cfg, 3).unwrap();
        assert_eq!(a.feature_map, b.feature_map, "{spec}: feature map changed");
        assert_eq!(a.svm, b.svm, "{spec}: svm changed");
        assert_eq!(a.hyper, b.hyper, "{spec}: hyperparameters changed");
    }
}

#[test]
fn every_spec_in_a_repeat_sees_the_same_split() {
    let ds = data();
    let mut cfg = small_config();
    cfg.base_seed = 40;
    let specs = PipelineSpec::llf_selectors();
    let table = run_experiment(&ds, &specs, &cfg).unwrap();
    for r in 0..cfg.repeats {
        let split = repeat_split(&ds, &cfg, r).unwrap();
        for spec in &specs {
            let expected = run_pipeline(&ds, *spec, &split, &ds.unlabeled_indices(), &cfg, 40 + r as u64).unwrap();
            let cell = table.get(*spec).unwrap();
            assert_eq!(cell.runs[r].accuracy, expected.accuracy, "{spec}, repeat {r}");
            assert_eq!(cell.runs[r].seed, 40 + r as u64);
        }
    }
}

#[test]
fn shared_sae_matches_a_fresh_fit() {
    let ds = data();
    let mut cfg = small_config();
    cfg.repeats = 1;
    let specs: Vec<PipelineSpec> = ["saef", "llf-saef:lasso", "semi-saef", "llf-semi-saef"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let table = run_experiment(&ds, &specs, &cfg).unwrap();
    let split = repeat_split(&ds, &cfg, 0).unwrap();
    for spec in specs {
        let fresh = run_pipeline(&ds, spec, &split, &ds.unlabeled_indices(), &cfg, 0).unwrap();
        assert_eq!(table.get(spec).unwrap().runs[0].accuracy, fresh.accuracy, "{spec}");
    }
}

#[test]
fn semi_supervised_without_unlabeled_rows_is_supervised() {
    let ds = data();
    let cfg = small_config();
    let split = stratified_split(&ds, 0.2, 8, true).unwrap();
    for (semi, plain) in [("semi-saef", "saef"), ("llf-semi-saef", "llf-saef"), ("llf-semi-saef:lasso", "llf-saef:lasso")] {
        let a = run_pipeline(&ds, semi.parse().unwrap(), &split, &[], &cfg, 8).unwrap();
        let b = run_pipeline(&ds, plain.parse().unwrap(), &split, &[], &cfg, 8).unwrap();
        assert_eq!(a.feature_map, b.feature_map);
        assert_eq!(a.svm, b.svm);
        assert_eq!(a.accuracy, b.accuracy);
    }
}

#[test]
fn unlabeled_rows_change_semi_supervised_features() {
    let ds = data();
    let cfg = small_config();
    let split = stratified_split(&ds, 0.2, 8, true).unwrap();
    let with = run_pipeline(&ds, "semi-saef".parse().unwrap(), &split, &ds.unlabeled_indices(), &cfg, 8).unwrap();
    let without = run_pipeline(&ds, "semi-saef".parse().unwrap(), &split, &[], &cfg, 8).unwrap();
    assert_ne!(with.feature_map.sae, without.feature_map.sae);
}

#[test]
fn experiments_are_deterministic_across_thread_counts() {
    let ds = data();
    let mut cfg = small_config();
    cfg.repeats = 3;
    let specs = PipelineSpec::table1();
    let one = run_experiment(&ds, &specs, &cfg).unwrap();
    let again = run_experiment(&ds, &specs, &cfg).unwrap();
    let threaded = run_experiment_with_jobs(&ds, &specs, &cfg, 3).unwrap();
    assert_eq!(results_to_csv(&one), results_to_csv(&again));
    assert_eq!(results_to_csv(&one), results_to_csv(&threaded));
    assert_eq!(one.cells.len(), 10);
    let text = render_table(&one, TableFormat::Text);
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn reported_mean_is_the_mean_of_repeats() {
    let ds = data();
    let mut cfg = small_config();
    cfg.repeats = 4;
    let table = run_experiment(&ds, &PipelineSpec::llf_selectors(), &cfg).unwrap();
    for cell in &table.cells {
        let direct: f64 = cell.runs.iter().map(|r| r.accuracy).sum::<f64>() / 4.0;
        assert!((cell.mean_pct() - 100.0 * direct).abs() < 1e-12);
        assert!((0.0..=100.0).contains(&cell.mean_pct()));
    }
}

#[test]
fn bad_inputs_name_the_stage() {
    let ds = data();
    let cfg = small_config();
    let mut split = stratified_split(&ds, 0.2, 0, true).unwrap();
    split.test.push(ds.unlabeled_indices()[0]);
    assert!(run_pipeline(&ds, "llf".parse().unwrap(), &split, &[], &cfg, 0).is_err());
    let mut cfg_bad = cfg.clone();
    cfg_bad.sae_dims = vec![40, 15];
    let split = stratified_split(&ds, 0.2, 0, true).unwrap();
    let err = run_pipeline(&ds, "saef".parse().unwrap(), &split, &[], &cfg_bad, 0).unwrap_err();
    assert!(err.to_string().contains("sae"), "{err}");
    assert!(run_experiment(&ds, &[], &cfg).is_err());
}

use featlink_core::data::{generate_synthetic, SyntheticSpec};
use featlink_core::experiment::{
    parse_config, run_experiment, ExperimentConfig, ExperimentError, ResultTable, RunOptions, Scheme,
};
use featlink_core::retrieval::{top_k_accuracy, Metric};

const SMALL: &str = "
synthetic.identities = 12
synthetic.samples_per_identity = 10
synthetic.dim = 16
";

fn config(body: &str) -> ExperimentConfig {
    parse_config(&format!("{SMALL}{body}")).unwrap()
}

fn run(c: &ExperimentConfig) -> featlink_core::experiment::RunReport {
    run_experiment(c, &RunOptions::default()).unwrap()
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let c = config("scheme = jscc_fc\nbandwidths = 4, 8\ntest_snrs = -3, 0, inf\ntrials = 3\nseed = 7\n");
    let a = run(&c).table.to_csv();
    let parallel = run_experiment(&c, &RunOptions { jobs: Some(3), cache_dir: None }).unwrap();
    assert_eq!(a, run(&c).table.to_csv());
    assert_eq!(a, parallel.table.to_csv());
    assert_ne!(a, run(&c.clone().with_seed(8)).table.to_csv());
}

#[test]
fn row_count_matches_sweep_size() {
    for body in [
        "scheme = jscc_ae\nbandwidths = 4, 8\ntrain_snrs = 0, 10\ntest_snrs = 0, 5, 10\n",
        "scheme = digital\nbandwidths = 4, 8\nlambdas = 1\nlatent_dims = 4, 8\ntest_snrs = 0, 20\n",
        "scheme = noiseless_bound\n",
    ] {
        let c = config(body);
        let report = run(&c);
        assert_eq!(report.table.rows.len(), c.sweep_len(), "{body}");
        assert_eq!(report.table.error_count(), 0);
    }
}

#[test]
fn digital_models_are_shared_across_bandwidths() {
    let c = config("scheme = digital\nbandwidths = 4, 8, 16\nlambdas = 1\nlatent_dims = 4\ntest_snrs = 0\n");
    let report = run(&c);
    assert_eq!(report.trained, 1);
    let bits: Vec<f64> = report.table.rows.iter().map(|r| r.mean_bits.unwrap()).collect();
    assert!(bits.windows(2).all(|w| w[0] == w[1]), "{bits:?}");
}

#[test]
fn noiseless_bound_is_raw_top1() {
    let c = config("scheme = noiseless_bound\n");
    let table = run(&c).table;
    assert_eq!(table.rows.len(), 1);
    let ds = generate_synthetic(&SyntheticSpec {
        num_identities: 12,
        samples_per_identity: 10,
        feature_dim: 16,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let (q, ids) = ds.queries();
    let raw = top_k_accuracy(&q, &ids, &ds.gallery().unwrap(), 1, Metric::Euclidean).unwrap();
    assert_eq!(table.rows[0].top1_accuracy, Some(raw));
    assert_eq!(table.rows[0].scheme, Scheme::NoiselessBound);
}

#[test]
fn mismatch_grid_has_one_row_per_pair() {
    let c = config("scheme = jscc_fc\nbandwidths = 8\ntrain_snrs = -3, 0, inf\ntest_snrs = -10, -6, -3, 0, 3, 6, 10, 20\ntrials = 2\n");
    let report = run(&c);
    assert_eq!(report.table.rows.len(), 3 * 8);
    assert_eq!(report.trained, 3);
    let back = ResultTable::from_csv(&report.table.to_csv()).unwrap();
    let pairs: Vec<String> =
        back.rows.iter().map(|r| format!("{}/{}", r.train_snr.unwrap(), r.test_snr.unwrap())).collect();
    assert_eq!(pairs[0], "-3/-10");
    assert_eq!(pairs[8], "0/-10");
    assert_eq!(pairs[23], "inf/20");
}

#[test]
fn failed_training_becomes_tagged_rows() {
    let c = config("scheme = digital\nbandwidths = 8\nlambdas = 1e300, 1\nlatent_dims = 4\ntest_snrs = 0, 10\n");
    let table = run(&c).table;
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.error_count(), 2);
    for row in &table.rows[..2] {
        let e = row.error.as_deref().unwrap();
        assert!(e.starts_with("training failed: "), "{e}");
        assert_eq!(row.top1_accuracy, None);
    }
    assert!(table.rows[2..].iter().all(|r| r.is_ok()));
    assert!(table.to_csv().contains(",error: training failed: "));
}

#[test]
fn disk_cache_skips_training() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { jobs: None, cache_dir: Some(dir.path().to_path_buf()) };
    for body in [
        "scheme = jscc_ae\nbandwidths = 4\ntest_snrs = 0, 10\ntrials = 2\n",
        "scheme = digital\nbandwidths = 4\nlambdas = 1, 10\nlatent_dims = 4\ntest_snrs = 0, 10\n",
    ] {
        let c = config(body);
        let first = run_experiment(&c, &opts).unwrap();
        let second = run_experiment(&c, &opts).unwrap();
        assert_eq!((second.trained, second.loaded), (0, first.trained), "{body}");
        assert_eq!(first.table.to_csv(), second.table.to_csv());
    }
}

#[test]
fn bandwidth_beyond_feature_dim_is_rejected() {
    let mut c = config("scheme = jscc_fc\n");
    c.bandwidths = vec![17];
    let err = run_experiment(&c, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, ExperimentError::Config(_)));
    assert!(err.to_string().contains("bandwidth 17 exceeds the feature dimension 16"), "{err}");
}

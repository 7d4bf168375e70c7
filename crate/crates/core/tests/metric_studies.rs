use leadrisk::learners::{ClassifierSpec, LearnerKind};
use leadrisk::metrics::{drop_one_importance, learning_curve, write_learning_curve_csv};
use leadrisk::pipeline::grouped_kfold;
use leadrisk::synth::{signal_dataset, SignalConfig, SIGNAL_FEATURE};

#[test]
fn two_feature_importance_finds_the_signal() {
    let (data, _) = signal_dataset(&SignalConfig { n_rows: 500, n_noise: 1, seed: 3, ..Default::default() }).unwrap();
    let plan = grouped_kfold(&data.groups, 5, 3).unwrap();
    let report = drop_one_importance(&ClassifierSpec::new(LearnerKind::LogRegL1), &data, &plan, 3).unwrap();
    assert_eq!(report.rank_of(SIGNAL_FEATURE), Some(1));
    let signal = report.entries.iter().find(|e| e.feature == SIGNAL_FEATURE).unwrap();
    assert!(signal.delta > 0.1, "{signal:?}");
}

#[test]
fn constant_feature_has_no_importance() {
    for seed in 0..5 {
        let cfg = SignalConfig { n_rows: 400, n_noise: 1, constant: true, seed, ..Default::default() };
        let (data, _) = signal_dataset(&cfg).unwrap();
        let plan = grouped_kfold(&data.groups, 5, seed).unwrap();
        let report = drop_one_importance(&ClassifierSpec::new(LearnerKind::Lda), &data, &plan, seed).unwrap();
        let constant = report.entries.iter().find(|e| e.feature == "constant").unwrap();
        assert!(constant.delta.abs() <= 0.01, "seed {seed}: {constant:?}");
    }
}

#[test]
fn learning_curve_rises_with_training_size() {
    let (data, _) = signal_dataset(&SignalConfig { n_rows: 2000, strength: 1.5, seed: 1, ..Default::default() }).unwrap();
    let spec = ClassifierSpec::new(LearnerKind::Gbt).with("trees", 30.0).with("max_depth", 2.0);
    let points = learning_curve(&spec, &data, &[40, 200, 1000], 50, 0.3, 1).unwrap();
    assert_eq!(points.len(), 3);
    assert!(points.iter().all(|p| p.replicates == 50));
    assert!(points[2].mean_auc > points[0].mean_auc + 0.02, "{points:?}");
    assert!(points[1].mean_auc >= points[0].mean_auc);
}

#[test]
fn large_validation_many_replicates_completes() {
    // 5503 single-row groups land in validation
    let (data, _) = signal_dataset(&SignalConfig { n_rows: 8000, seed: 2, ..Default::default() }).unwrap();
    let points =
        learning_curve(&ClassifierSpec::new(LearnerKind::Lda), &data, &[100, 500, 2000], 400, 5503.0 / 8000.0, 2)
            .unwrap();
    assert_eq!(points.len(), 3);
    assert!(points.iter().all(|p| p.replicates == 400 && p.mean_auc > 0.5));
    let mut buf = Vec::new();
    write_learning_curve_csv(&points, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("size,mean_auc,sd_auc,replicates\n"));
    assert_eq!(text.lines().count(), 4);
}

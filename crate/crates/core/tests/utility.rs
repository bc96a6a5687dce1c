use procal::baselines::CondensationConfig;
use procal::grouping::GroupingConfig;
use procal::synth::{self, BlobSpec};
use procal::utility::{self, CvConfig};
use procal::{Dataset, PerturbConfig, PerturbMethod, Record};

#[test]
fn knn_degenerate_k_is_global_majority() {
    let d = Dataset::from_records(vec![
        Record::labeled(vec![0.0], "a"),
        Record::labeled(vec![10.0], "b"),
        Record::labeled(vec![11.0], "b"),
        Record::labeled(vec![12.0], "c"),
    ])
    .unwrap();
    assert_eq!(utility::knn_classify(&d, &Record::new(vec![0.0]), 4).unwrap(), "b");
    assert_eq!(utility::knn_classify(&d, &Record::new(vec![12.0]), 1).unwrap(), "c");
}

#[test]
fn one_nn_recovers_its_own_training_labels() {
    let d = synth::gaussian_blobs(&BlobSpec::default().with_size(300, 4), 1);
    for r in d.records().iter().step_by(7) {
        assert_eq!(utility::knn_classify(&d, r, 1).unwrap(), r.label.as_deref().unwrap());
    }
}

#[test]
fn small_group_procal_keeps_up_with_condensation() {
    let d = synth::gaussian_blobs(&BlobSpec::default().with_size(2000, 10), 2);
    let methods = [
        PerturbMethod::Procal(PerturbConfig::new(GroupingConfig::by_group_size(10, 2), 2)),
        PerturbMethod::Condensation(CondensationConfig::new(10, 2)),
    ];
    let t = utility::utility_comparison(&d, &methods, &CvConfig::with_seed(2)).unwrap();
    assert_eq!(t.columns[0], "original");
    assert!(t.accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    assert!(t.accuracies[1] >= t.accuracies[2] - 0.02, "{:?}", t.accuracies);
}

#[test]
fn normalized_cv_is_scale_free() {
    let d = synth::gaussian_blobs(&BlobSpec::default().with_size(400, 3), 3);
    let scaled = d
        .with_records(
            d.records()
                .iter()
                .map(|r| Record {
                    values: vec![r.values[0] * 1000.0, r.values[1], r.values[2] * 0.01],
                    label: r.label.clone(),
                })
                .collect(),
        )
        .unwrap();
    let cfg = CvConfig {
        normalize: true,
        ..CvConfig::with_seed(3)
    };
    let a = utility::cross_validate(&d, &cfg).unwrap();
    let b = utility::cross_validate(&scaled, &cfg).unwrap();
    assert!((a.accuracy - b.accuracy).abs() <= 0.01, "{} vs {}", a.accuracy, b.accuracy);
}

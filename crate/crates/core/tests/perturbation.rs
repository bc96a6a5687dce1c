use procal::attacks;
use procal::baselines::{self, CondensationConfig};
use procal::grouping::GroupingConfig;
use procal::perturb::{self, PerturbConfig, RotationSource};
use procal::synth::{self, BlobSpec};
use procal::Dataset;

fn blobs(m: usize, n: usize, seed: u64) -> Dataset {
    synth::gaussian_blobs(&BlobSpec::default().with_size(m, n), seed)
}

fn sorted_labels(d: &Dataset) -> Vec<Option<String>> {
    let mut l: Vec<Option<String>> = d.labels().into_iter().map(|l| l.map(String::from)).collect();
    l.sort();
    l
}

#[test]
fn cardinality_labels_and_determinism() {
    let d = blobs(777, 6, 1);
    for cfg in [
        PerturbConfig::new(GroupingConfig::by_group_size(10, 2), 2),
        PerturbConfig::new(GroupingConfig::by_cluster_count(12, 2), 2),
    ] {
        let p = perturb::perturb_static(&d, &cfg).unwrap();
        assert_eq!(p.data.len(), d.len());
        assert_eq!(p.data.n_attributes(), d.n_attributes());
        assert_eq!(sorted_labels(&p.data), sorted_labels(&d));
        assert!(p.provenance.is_none());
        assert_eq!(p, perturb::perturb_static(&d, &cfg).unwrap());
    }
}

#[test]
fn no_identity_rotation_reaches_output() {
    let d = blobs(503, 5, 4);
    let cfg = PerturbConfig::new(GroupingConfig::by_group_size(10, 4), 4);
    let (_, trace) = perturb::perturb_static_traced(&d, &cfg).unwrap();
    for (g, &r) in trace.grouping.groups.iter().zip(&trace.group_rotation) {
        assert!(!trace.rotations[r].is_identity(1e-9), "group of {} got identity", g.len());
    }
    // 503 = 50·10 + 3: the remainder group still gets its own rotation
    assert!(trace.group_source.iter().all(|s| *s == RotationSource::Own));
}

#[test]
fn kmeans_singletons_use_a_fallback() {
    // an outlier far from everything forms its own cluster
    let mut recs = blobs(60, 3, 5).into_records();
    recs.push(procal::Record::labeled(vec![1e4, 1e4, 1e4], "c0"));
    let d = Dataset::from_records(recs).unwrap();
    let cfg = PerturbConfig::new(GroupingConfig::by_cluster_count(6, 5), 5).with_provenance();
    let (p, trace) = perturb::perturb_static_traced(&d, &cfg).unwrap();
    let lone = trace.grouping.assignment[60];
    assert_eq!(trace.grouping.groups[lone].len(), 1);
    assert_eq!(trace.group_source[lone], RotationSource::Fallback);
    let prov = p.provenance().unwrap();
    let out = prov.iter().position(|&i| i == 60).unwrap();
    assert_ne!(p.data.records()[out].values, d.records()[60].values);
}

#[test]
fn small_groups_displace_more_than_condensation() {
    let d = blobs(2000, 10, 9);
    let pr = perturb::perturb_static(
        &d,
        &PerturbConfig::new(GroupingConfig::by_group_size(10, 9), 9).with_provenance(),
    )
    .unwrap();
    let dc = baselines::perturb_condensation(&d, &CondensationConfig::new(10, 9)).unwrap();
    let a = attacks::naive_inference_metric(&d, &pr).unwrap();
    let b = attacks::naive_inference_metric(&d, &dc).unwrap();
    assert!(a.avg > b.avg, "procal {} vs dc {}", a.avg, b.avg);
    assert!(a.avg > 0.1);
    assert!(a.min <= a.avg && b.min <= b.avg);
}

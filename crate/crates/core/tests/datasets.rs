use pkm::datasets::{bundled, make_artificial, make_blobs, ArtificialConfig, BUNDLED};

#[test]
fn bundled_files_have_expected_shapes() {
    let expected = [
        ("iris", 150, 4, Some(3)),
        ("glass", 214, 9, Some(6)),
        ("ionosphere", 351, 33, Some(2)),
        ("breast_cancer", 683, 9, Some(2)),
        ("dermatology", 358, 34, None),
        ("yeast", 1484, 8, None),
    ];
    for (name, n, d, classes) in expected {
        let x = bundled(name).unwrap().load().unwrap();
        assert_eq!((x.len(), x.dim(), x.n_classes()), (n, d, classes), "{name}");
        assert!(x.points().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn every_registered_dataset_has_a_cluster_count() {
    assert!(BUNDLED.iter().all(|b| b.k >= 2));
    assert!(bundled("seeds").is_some());
    assert!(bundled("mnist").is_none());
}

#[test]
fn artificial_data_is_reproducible() {
    let a = make_artificial(5);
    let b = make_artificial(5);
    assert_eq!(a.points(), b.points());
    assert_ne!(a.points(), make_artificial(6).points());
    let sizes = a.labels().unwrap().iter().fold([0; 4], |mut acc, &l| {
        acc[l] += 1;
        acc
    });
    assert_eq!(sizes, [150, 150, 5, 5]);
}

#[test]
fn blobs_reject_empty_configs() {
    let empty = ArtificialConfig { blobs: vec![] };
    assert!(make_blobs(&empty, 0).is_err());
}

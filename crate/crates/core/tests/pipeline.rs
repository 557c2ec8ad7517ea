use nalgebra::DMatrix;
use r2vfl::dataset::{load_table, read_csv, CsvOptions, LabelColumn};
use r2vfl::eval::{accuracy, cross_validate, grid_search, GridSpec};
use r2vfl::model::{load_model, save_model, train};
use r2vfl::weighting::{compute_scores, WeightingConfig};
use r2vfl::kernel::CenterScheme;
use r2vfl::{Dataset, Error, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two tight clusters far apart in three dimensions.
fn separable(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = 2 * per_class;
    let labels: Vec<usize> = (0..l).map(|i| i % 2).collect();
    let x = DMatrix::from_fn(l, 3, |i, _| {
        let c = if labels[i] == 0 { 0.0 } else { 5.0 };
        c + rng.random_range(-0.5..0.5)
    });
    Dataset::new(x, labels, vec!["neg".into(), "pos".into()], "separable").unwrap()
}

#[test]
fn every_variant_separates_clusters() {
    let train_set = separable(30, 1);
    let test_set = separable(30, 2);
    for v in Variant::ALL {
        let model = train(&train_set, &ModelConfig::new(v)).unwrap();
        let pred = model.predict(test_set.features()).unwrap();
        let acc = accuracy(&pred.labels, test_set.labels()).unwrap();
        assert!(acc >= 95.0, "{v}: {acc}");
    }
}

#[test]
fn saved_model_predicts_identically() {
    let ds = separable(20, 3);
    let dir = tempfile::tempdir().unwrap();
    for v in Variant::ALL {
        let model = train(&ds, &ModelConfig::new(v)).unwrap();
        let path = dir.path().join(format!("{v}.mdl"));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(ds.features()).unwrap(), model.predict(ds.features()).unwrap());
    }
}

#[test]
fn cross_validation_repeats_exactly() {
    let ds = separable(25, 4);
    let cfg = ModelConfig::new(Variant::R2vflM);
    let a = cross_validate(&ds, &cfg, 5, 9).unwrap();
    let b = cross_validate(&ds, &cfg, 5, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fold_accuracies.len(), 5);
    assert!(a.warnings.is_empty());
}

#[test]
fn grid_sizes() {
    let ds = separable(10, 5);
    let single = GridSpec::single(1.0, 13, 1.0, 1.0);
    let res = grid_search(&ds, &ModelConfig::new(Variant::R2vflA), &single).unwrap();
    assert_eq!(res.trace.len(), 1);

    let full = GridSpec::default();
    assert_eq!(full.cardinality(Variant::Rvfl), 121);
    assert_eq!(full.cardinality(Variant::R2vflM), 6655);
    let res = grid_search(&ds, &ModelConfig::new(Variant::Rvfl), &full).unwrap();
    assert_eq!(res.trace.len(), 121);
    assert!(res.trace.iter().all(|e| e.mean <= res.best_mean));
}

#[test]
fn gross_outlier_gets_small_weight() {
    let mut x = separable(20, 6).features().clone();
    let labels = separable(20, 6).labels().to_vec();
    // sample 0 belongs to the cluster at 0 but sits far beyond the other one
    x.row_mut(0).fill(40.0);
    let ds = Dataset::new(x, labels, vec!["neg".into(), "pos".into()], "outlier").unwrap();
    for scheme in [CenterScheme::Average, CenterScheme::Median] {
        let mut cfg = WeightingConfig::new(scheme);
        cfg.kernel.gamma = 0.01;
        cfg.tau_multiplier = 0.5;
        let s = compute_scores(&ds, &cfg).unwrap();
        let typical = s.m[2..].iter().step_by(2).sum::<f64>() / 19.0;
        assert!(s.m[0] < typical, "{scheme:?}: outlier {} typical {typical}", s.m[0]);
    }
}

#[test]
fn csv_errors_name_row_and_column() {
    let text = "1,2,a\n3,x,b\n";
    match read_csv(text.as_bytes(), CsvOptions::default(), "t".into()) {
        Err(Error::Cell { row, column, .. }) => assert_eq!((row, column), (2, 2)),
        other => panic!("unexpected {other:?}"),
    }
    let single = read_csv("1,a\n2,a\n".as_bytes(), CsvOptions::default(), "t".into());
    assert!(matches!(single, Err(Error::InvalidData(_))));
}

#[test]
fn unlabeled_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, "f1,f2\n1,2\n3,4\n5,6\n").unwrap();
    let t = load_table(&path, true, None).unwrap();
    assert_eq!(t.features.shape(), (3, 2));
    assert!(t.labels.is_none());
    let t = load_table(&path, true, Some(LabelColumn::Index(0))).unwrap();
    assert_eq!(t.features.shape(), (3, 1));
    assert_eq!(t.labels.unwrap(), vec!["1", "3", "5"]);
}

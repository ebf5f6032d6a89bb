use honam::data::{read_csv, DatasetBundle, Schema};
use honam::feature_nets::FeatureNetConfig;
use honam::model::{HonamConfig, HonamModel, ModelMeta, Task};
use honam::train::{evaluate, fit, TrainConfig};
use honam::units::UnitKind;
use proptest::prelude::*;

const SCHEMA: &str = r#"{
    "task": "binary-classification",
    "columns": {
        "dose": {"kind": "continuous"},
        "site": {"kind": "categorical"},
        "outcome": {"kind": "target"}
    },
    "positive_labels": ["yes"]
}"#;

fn csv_text(n: usize) -> String {
    let mut s = String::from("dose,site,outcome,unused\n");
    for i in 0..n {
        let dose = (i as f64 * 0.37).sin() * 3.0;
        let site = ["north", "south", "east"][i % 3];
        let yes = dose + if site == "south" { 1.0 } else { -0.5 } > 0.0;
        let dose = if i % 17 == 0 { "NA".to_string() } else { dose.to_string() };
        s.push_str(&format!("{dose},{site},{},x\n", if yes { "yes" } else { "no" }));
    }
    s
}

fn small_net(unit: UnitKind) -> FeatureNetConfig {
    FeatureNetConfig {
        hidden: vec![8],
        repr_dim: 4,
        unit,
        ..FeatureNetConfig::default()
    }
}

#[test]
fn csv_to_saved_model_and_back() {
    let schema = Schema::from_json(SCHEMA).unwrap();
    let table = read_csv(csv_text(300).as_bytes(), &schema).unwrap();
    assert_eq!(table.n_rows(), 300);
    let bundle = DatasetBundle::prepare(&table, &schema, 11).unwrap();
    assert_eq!(bundle.train.len(), 180);

    let mut config = HonamConfig::new(2, 2, Task::BinaryClassification);
    config.net = small_net(UnitKind::ExpDive);
    let tc = TrainConfig {
        epochs: 40,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let (mut model, outcome) = fit(config, &bundle.train, &bundle.valid, &tc).unwrap();
    assert_eq!(outcome.history.len(), 40);
    let auroc = evaluate(&model, &bundle.test).unwrap()["auroc"].unwrap();
    assert!(auroc > 0.85, "test AUROC {auroc}");

    model.meta = ModelMeta {
        schema_hash: Some(schema.hash()),
        context: Some(serde_json::json!({"note": "kept verbatim"})),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.honam");
    model.save(&path).unwrap();
    let back = HonamModel::load_with_features(&path, 2).unwrap();
    assert_eq!(back.meta, model.meta);
    assert_eq!(back.forward(&bundle.test.x).unwrap(), model.forward(&bundle.test.x).unwrap());
    assert!(HonamModel::load_with_features(&path, 3).is_err());
}

#[test]
fn ablating_every_feature_leaves_only_the_bias() {
    let schema = Schema::from_json(SCHEMA).unwrap();
    let table = read_csv(csv_text(120).as_bytes(), &schema).unwrap();
    let bundle = DatasetBundle::prepare(&table, &schema, 2).unwrap();
    let mut config = HonamConfig::new(2, 3, Task::BinaryClassification);
    config.net = small_net(UnitKind::Exu);
    let tc = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let (mut model, _) = fit(config, &bundle.train, &bundle.valid, &tc).unwrap();
    model.ablate_features([0, 1]).unwrap();
    let out = model.forward(&bundle.test.x).unwrap();
    assert!(out.iter().all(|&v| v == model.bias()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contributions_reconstruct_output(seed in any::<u64>(), order in 1usize..=4, row in prop::collection::vec(-2.0f64..2.0, 4)) {
        use rand::SeedableRng;
        let mut config = HonamConfig::new(4, order, Task::Regression);
        config.net = small_net(UnitKind::Linear);
        let model = HonamModel::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for listed in 0..=order {
            let report = model.local_contributions(&row, listed).unwrap();
            prop_assert!((report.reconstructed() - report.total).abs() < 1e-9);
        }
    }
}

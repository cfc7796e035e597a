use std::collections::BTreeMap;

use ndarray::Array2;
use proptest::prelude::*;

use cactus_core::cf::EmbeddingTable;
use cactus_core::config::ExperimentConfig;
use cactus_core::data::InteractionMatrix;
use cactus_core::experiment;
use cactus_core::guidance::weights::positive_label_nll;
use cactus_core::guidance::{
    train_cf2label, weight_interaction, weight_lossbased, weight_uniform, Cf2LabelModel, WeightTable,
};

fn check_table(t: &WeightTable, embeddings: &EmbeddingTable) -> Result<(), TestCaseError> {
    let mut positive = Vec::new();
    for (id, w) in t.iter() {
        prop_assert!(w.is_finite() && w >= 0.0);
        if embeddings.get(id).is_none() {
            prop_assert_eq!(w, 0.0);
        }
        if w > 0.0 {
            positive.push(w);
        }
    }
    if !positive.is_empty() {
        let mean = positive.iter().sum::<f64>() / positive.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-9, "mean {}", mean);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_tables_are_normalized(
        pairs in prop::collection::vec((0u8..20, 0u8..30), 1..200),
        embedded in prop::collection::vec(any::<bool>(), 30),
    ) {
        let m = InteractionMatrix::from_pairs(pairs.iter().map(|(u, i)| (format!("u{u}"), format!("i{i:02}"))));
        let mut emb = EmbeddingTable::new(2, "test".into());
        for (k, &e) in embedded.iter().enumerate() {
            if e {
                emb.insert(format!("i{k:02}"), vec![k as f64, 1.0]).unwrap();
            }
        }
        check_table(&weight_uniform(m.items().iter().map(String::as_str), &emb), &emb)?;
        check_table(&weight_interaction(&m, &emb), &emb)?;
    }

    #[test]
    fn probe_outputs_are_probabilities(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 8 * 3)) {
        let model = Cf2LabelModel::new(8, 16, 5, seed);
        let probs = model.predict_batch(&Array2::from_shape_vec((3, 8), x).unwrap());
        prop_assert_eq!(probs.dim(), (3, 5));
        prop_assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

/// The loss-based weight of an item falls as the probe's NLL on its positive
/// labels rises.
#[test]
fn loss_weights_are_antitone_in_probe_nll() {
    let mut cfg = ExperimentConfig::default();
    cfg.guidance.probe.epochs = 50;
    let prepared = experiment::prepare(&cfg).unwrap();
    let emb = experiment::run_cf(&prepared, &cfg, cactus_core::cf::CfKind::Vae)
        .unwrap()
        .embeddings
        .unwrap();
    let (probe, _) = train_cf2label(&emb, &prepared.catalog, &prepared.split, &cfg.guidance.probe).unwrap();
    let table = weight_lossbased(&probe, &emb, &prepared.catalog).unwrap();
    let mut nll = BTreeMap::new();
    for r in prepared.catalog.records() {
        if let (Some(q), Some(labels)) = (emb.get(&r.item_id), &r.labels) {
            if let Some(l) = positive_label_nll(&probe.predict_labels(q).unwrap(), labels) {
                nll.insert(r.item_id.clone(), l);
            }
        }
    }
    let mut items: Vec<(&String, &f64)> = nll.iter().collect();
    items.sort_by(|a, b| a.1.total_cmp(b.1));
    assert!(items.len() > 100);
    for pair in items.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.1 < b.1 {
            assert!(table.omega(a.0) > table.omega(b.0), "{} vs {}", a.0, b.0);
        }
    }
    check_table(&table, &emb).unwrap();
}

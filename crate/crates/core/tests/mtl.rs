use ndarray::Array2;
use proptest::prelude::*;

use cactus_core::cf::{CfKind, EmbeddingTable};
use cactus_core::config::ExperimentConfig;
use cactus_core::data::Role;
use cactus_core::eval::mean_average_precision;
use cactus_core::experiment::{self, Method};
use cactus_core::guidance::cf2label::class_prior;
use cactus_core::guidance::weight_uniform;
use cactus_core::mtl::losses::{self, LossConfig};
use cactus_core::mtl::{train_image_only, train_mtl_reconstruct, EncoderPreset, MtlModel, Regime};

fn pair(f: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-2.0f64..2.0, f), prop::collection::vec(-2.0f64..2.0, f))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reconstruction_loss_is_at_least_one((q, q_hat) in (1usize..8).prop_flat_map(pair)) {
        let l = losses::loss_cf_reconstruct(&q, &q_hat).unwrap();
        prop_assert!(l >= 1.0);
        prop_assert_eq!(l == 1.0, q == q_hat);
        prop_assert_eq!(losses::loss_cf_reconstruct(&q, &q).unwrap(), 1.0);
    }

    #[test]
    fn aux_loss_vanishes_only_without_weight((q, q_hat) in (1usize..8).prop_flat_map(pair), omega in 0.0f64..10.0, cap in 0.1f64..6.0) {
        let l = losses::loss_aux(&q, &q_hat, omega, cap).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, omega == 0.0);
        prop_assert_eq!(losses::loss_aux(&q, &q_hat, 0.0, cap).unwrap(), 0.0);
        let (_, d_omega) = losses::grad_loss_aux(&q, &q_hat, cap + 0.5 + omega, cap).unwrap();
        prop_assert_eq!(d_omega, 0.0);
    }

    #[test]
    fn mtl_with_zero_alpha_is_main_loss(
        y_hat in prop::collection::vec(0.01f64..0.99, 4),
        y in prop::collection::vec(any::<bool>(), 4),
        (q, q_hat) in pair(3),
        omega in 0.0f64..4.0,
    ) {
        let y: Vec<f64> = y.into_iter().map(|b| f64::from(u8::from(b))).collect();
        let cfg = LossConfig::new(0.0, 5.0, 0.2, vec![0.5, 1.0, 1.5, 1.0]).unwrap();
        let mtl = losses::loss_mtl(&y_hat, Some(&y), &q_hat, Some(&q), omega, &cfg).unwrap();
        prop_assert_eq!(mtl.total, losses::loss_main(&y_hat, &y, &cfg.class_weights).unwrap());
    }

    #[test]
    fn class_weights_have_mean_one(eta in prop::collection::vec(0usize..500, 2..12)) {
        prop_assume!(eta.iter().any(|&c| c > 0));
        let w = losses::class_weights_from_counts(&eta).unwrap();
        let present: Vec<f64> = w.iter().zip(&eta).filter(|(_, &c)| c > 0).map(|(w, _)| *w).collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-9);
        for (k, &c) in eta.iter().enumerate() {
            prop_assert_eq!(w[k] == 0.0, c == 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn heads_share_features_and_stay_in_range(seed in any::<u64>(), pixels in prop::collection::vec(0.0f64..1.0, 2 * 3 * 16 * 16)) {
        let model = MtlModel::new(&EncoderPreset::DeskSmall, 16, 5, 7, seed).unwrap();
        let images: Vec<&[f64]> = pixels.chunks(3 * 16 * 16).collect();
        let fwd = model.forward(&images);
        prop_assert_eq!(fwd.y_hat.dim(), (2, 5));
        prop_assert_eq!(fwd.q_hat.dim(), (2, 7));
        prop_assert!(fwd.y_hat.iter().all(|&p| p > 0.0 && p < 1.0));
        prop_assert!(fwd.q_hat.iter().all(|v| v.is_finite()));
        prop_assert_eq!(model.predict_probs(&images), fwd.y_hat.clone());
        let (y, q) = model.predict(images[0]).unwrap();
        prop_assert_eq!(y, fwd.y_hat.row(0).to_vec());
        prop_assert_eq!(q, fwd.q_hat.row(0).to_vec());
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic.num_users = 400;
    cfg.dataset.synthetic.num_items = 150;
    cfg.mtl.epochs = 3;
    cfg
}

#[test]
fn empty_embeddings_reduce_to_image_only() {
    let cfg = small_config();
    let prepared = experiment::prepare(&cfg).unwrap();
    let empty = EmbeddingTable::new(cfg.cf.factors(), "empty".into());
    let weights = weight_uniform(prepared.catalog.item_ids(), &empty);
    let mut hyper = cfg.mtl.clone();
    hyper.regime = Regime::MtlReconstruct;
    let mtl = train_mtl_reconstruct(prepared.data(), Some((&empty, &weights)), &hyper, cfg.cf.factors()).unwrap();
    let io = train_image_only(prepared.data(), &hyper, cfg.cf.factors()).unwrap();
    assert_eq!(mtl.initial_checksum, io.initial_checksum);
    assert_eq!(mtl.checksums(), io.checksums());
    assert_eq!(mtl.regime, Regime::ImageOnly);
}

/// Sequential pretraining lowers its own objective: 5-epoch moving averages
/// of the stage-one loss never rise.
#[test]
fn sequential_pretraining_loss_decreases() {
    let cfg = ExperimentConfig::default();
    let prepared = experiment::prepare(&cfg).unwrap();
    let emb = experiment::run_cf(&prepared, &cfg, CfKind::Vae).unwrap().embeddings.unwrap();
    let mut hyper = cfg.mtl.clone();
    hyper.regime = Regime::Sequential;
    hyper.epochs = 1;
    let out = cactus_core::mtl::train(prepared.data(), Some(&emb), None, &hyper, emb.dim()).unwrap();
    let losses: Vec<f64> = out.pretrain_log.iter().map(|e| e.loss_aux).collect();
    assert_eq!(losses.len(), cfg.mtl.epochs_aux);
    let smooth: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for w in smooth.windows(2) {
        assert!(w[1] <= w[0], "stage-one loss rose: {losses:?}");
    }
}

/// One default run beats scoring every test item with the train class
/// frequencies.
#[test]
fn mtl_beats_the_class_prior() {
    let cfg = ExperimentConfig::default();
    let reports = experiment::run_comparison(&cfg, &[Method::MtlUniform]).unwrap();
    let prepared = experiment::prepare(&cfg).unwrap();
    let (_, scores, labels) = {
        let model = MtlModel::new(&EncoderPreset::DeskSmall, 16, prepared.catalog.num_classes(), 4, 0).unwrap();
        experiment::score_role(&model, &prepared, Role::Test).unwrap()
    };
    let prior = class_prior(&prepared.catalog, &prepared.split);
    let flat = Array2::from_shape_fn(scores.dim(), |(_, n)| prior[n]);
    let prior_map = mean_average_precision(&flat, &labels, None).unwrap().map;
    assert!(reports[0].metrics.map > prior_map, "{} vs {prior_map}", reports[0].metrics.map);
}

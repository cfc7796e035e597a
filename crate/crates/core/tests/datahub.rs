use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;

use cactus_core::data::split::{drop_labels, mask_heldout_interactions, split_interactions, split_items, Role};
use cactus_core::data::{generate_synthetic, InteractionMatrix, ItemCatalog, ItemRecord, SyntheticConfig};

fn catalog(labels: &[Option<Vec<bool>>], classes: usize) -> ItemCatalog {
    let records = labels
        .iter()
        .enumerate()
        .map(|(k, l)| ItemRecord {
            item_id: format!("i{k:03}"),
            image_ref: PathBuf::from(format!("i{k:03}.png")),
            labels: l.clone(),
        })
        .collect();
    ItemCatalog::new(records, (0..classes).map(|c| format!("c{c}")).collect()).unwrap()
}

fn labels_strategy() -> impl Strategy<Value = (Vec<Option<Vec<bool>>>, usize)> {
    (2usize..5).prop_flat_map(|n| {
        let row = prop::option::weighted(0.8, prop::collection::vec(any::<bool>(), n));
        (prop::collection::vec(row, 10..80), Just(n))
    })
}

fn pairs_strategy() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..30, 0u8..30), 1..300)
}

fn matrix(pairs: &[(u8, u8)]) -> InteractionMatrix {
    InteractionMatrix::from_pairs(pairs.iter().map(|(u, i)| (format!("u{u:02}"), format!("i{i:03}"))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_deduplicates_and_indexes(pairs in pairs_strategy()) {
        let m = matrix(&pairs);
        let distinct: BTreeSet<(u8, u8)> = pairs.iter().copied().collect();
        prop_assert_eq!(m.num_entries(), distinct.len());
        let s = m.sparsity();
        prop_assert!(s > 0.0 && s <= 1.0);
        let seen: BTreeSet<(usize, usize)> = m.pairs().collect();
        prop_assert_eq!(seen.len(), m.num_entries());
        for (u, i) in seen {
            prop_assert!(u < m.num_users() && i < m.num_items());
        }
    }

    #[test]
    fn split_items_partitions_deterministically((labels, n) in labels_strategy(), seed in any::<u64>()) {
        prop_assume!(labels.iter().any(Option::is_some));
        let c = catalog(&labels, n);
        let a = split_items(&c, 0.3, seed);
        let b = split_items(&c, 0.3, seed);
        let (a, b) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(_), Err(_)) => return Ok(()),
            _ => return Err(TestCaseError::fail("nondeterministic outcome")),
        };
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.assignment.len(), c.len());
        for id in c.item_ids() {
            prop_assert!(a.role(id).is_some());
        }
        let (val, test) = (a.count(Role::Val), a.count(Role::Test));
        prop_assert_eq!(val + test, (0.3 * c.len() as f64).round() as usize);
        prop_assert!(val.abs_diff(test) <= 1);
    }

    #[test]
    fn interaction_split_partitions(pairs in pairs_strategy(), seed in any::<u64>(), ratio in 0.05f64..0.95) {
        let m = matrix(&pairs);
        let (train, test) = split_interactions(&m, ratio, seed).unwrap();
        let all: BTreeSet<(usize, usize)> = m.pairs().collect();
        let tr: BTreeSet<(usize, usize)> = train.pairs().collect();
        let te: BTreeSet<(usize, usize)> = test.pairs().collect();
        prop_assert!(tr.is_disjoint(&te));
        prop_assert_eq!(tr.union(&te).copied().collect::<BTreeSet<_>>(), all);
        let (again, _) = split_interactions(&m, ratio, seed).unwrap();
        prop_assert_eq!(again.pairs().collect::<Vec<_>>(), train.pairs().collect::<Vec<_>>());
    }

    #[test]
    fn masking_empties_heldout_columns(pairs in pairs_strategy(), seed in any::<u64>()) {
        let m = matrix(&pairs);
        let labels: Vec<Option<Vec<bool>>> = (0..30).map(|k| Some(vec![k % 2 == 0, k % 2 == 1])).collect();
        let c = catalog(&labels, 2);
        let split = split_items(&c, 0.3, seed).unwrap();
        let masked = mask_heldout_interactions(&m, &split);
        prop_assert_eq!(masked.items(), m.items());
        let counts = masked.item_counts();
        for (k, id) in masked.items().iter().enumerate() {
            if split.is_heldout(id) {
                prop_assert_eq!(counts[k], 0);
            } else {
                prop_assert_eq!(counts[k], m.item_counts()[k]);
            }
        }
    }

    #[test]
    fn dropped_label_sets_nest((labels, n) in labels_strategy(), seed in any::<u64>(), r1 in 0.05f64..1.0, r2 in 0.05f64..1.0) {
        prop_assume!(labels.iter().any(Option::is_some));
        let c = catalog(&labels, n);
        let Ok(split) = split_items(&c, 0.3, seed) else { return Ok(()) };
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let labeled = |r: f64| -> BTreeSet<String> {
            drop_labels(&c, r, seed, &split)
                .unwrap()
                .catalog
                .records()
                .iter()
                .filter(|x| x.is_labeled())
                .map(|x| x.item_id.clone())
                .collect()
        };
        prop_assert!(labeled(lo).is_subset(&labeled(hi)));
        let full = labeled(1.0);
        let original: BTreeSet<String> = c.records().iter().filter(|x| x.is_labeled()).map(|x| x.item_id.clone()).collect();
        prop_assert_eq!(full, original);
    }
}

#[test]
fn thousand_pairs_collapse_to_distinct_count() {
    let pairs: Vec<(String, String)> = (0..1000u32)
        .map(|k| (format!("u{}", (k * 7) % 37), format!("i{}", (k * 13) % 41)))
        .collect();
    let m = InteractionMatrix::from_pairs(pairs.clone());
    let lines: BTreeSet<String> = pairs.iter().map(|(u, i)| format!("{u}\t{i}")).collect();
    assert_eq!(m.num_entries(), lines.len());
}

/// Users share interactions with items of their own classes more often than
/// across classes.
#[test]
fn synthetic_cooccurrence_is_class_conditional() {
    let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let m = &data.interactions;
    let class_of: Vec<usize> = m
        .items()
        .iter()
        .map(|id| data.true_class[data.catalog.position(id).unwrap()])
        .collect();
    let (mut same, mut same_pairs, mut cross, mut cross_pairs) = (0.0, 0.0, 0.0, 0.0);
    let mut co = vec![vec![0u32; m.num_items()]; m.num_items()];
    for u in 0..m.num_users() {
        let row = m.user_row(u);
        for &a in row {
            for &b in row {
                if a < b {
                    co[a][b] += 1;
                }
            }
        }
    }
    for a in 0..m.num_items() {
        for b in a + 1..m.num_items() {
            if class_of[a] == class_of[b] {
                same += f64::from(co[a][b]);
                same_pairs += 1.0;
            } else {
                cross += f64::from(co[a][b]);
                cross_pairs += 1.0;
            }
        }
    }
    assert!(same / same_pairs > cross / cross_pairs, "{} vs {}", same / same_pairs, cross / cross_pairs);
}

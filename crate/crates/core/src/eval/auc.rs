use crate::cf::CfModel;
use crate::data::InteractionMatrix;
use crate::error::{Error, Result};

/// Probability that a random positive outranks a random negative, ties
/// counted as one half.
pub fn pairwise_auc(pos_scores: &[f64], neg_scores: &[f64]) -> Option<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return None;
    }
    let mut neg = neg_scores.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut correct = 0.0;
    for &p in pos_scores {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        correct += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Some(correct / (pos_scores.len() * neg.len()) as f64)
}

/// Per-user AUC for every eligible user: at least one test positive and at
/// least one training interaction. Negatives are items the user has in
/// neither matrix.
pub fn per_user_auc(
    model: &CfModel,
    train: &InteractionMatrix,
    test: &InteractionMatrix,
) -> Result<Vec<(usize, f64)>> {
    if train.items() != test.items() || train.users() != test.users() {
        return Err(Error::invalid("train and test matrices use different id universes"));
    }
    if model.train.items() != train.items() {
        return Err(Error::invalid("model was trained on a different item universe"));
    }
    let eligible: Vec<usize> = (0..test.num_users())
        .filter(|&u| !test.user_row(u).is_empty() && !train.user_row(u).is_empty())
        .collect();
    let mut out = Vec::with_capacity(eligible.len());
    for chunk in eligible.chunks(256) {
        let scores = model.score_users(chunk);
        for (b, &u) in chunk.iter().enumerate() {
            let row = scores.row(b);
            let pos: Vec<f64> = test.user_row(u).iter().map(|&i| row[i]).collect();
            let neg: Vec<f64> = (0..train.num_items())
                .filter(|&i| !train.contains(u, i) && !test.contains(u, i))
                .map(|i| row[i])
                .collect();
            if let Some(a) = pairwise_auc(&pos, &neg) {
                out.push((u, a));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no eligible users for AUC evaluation"));
    }
    Ok(out)
}

/// Mean per-user AUC.
pub fn evaluate_auc(model: &CfModel, train: &InteractionMatrix, test: &InteractionMatrix) -> Result<f64> {
    let per_user = per_user_auc(model, train, test)?;
    Ok(per_user.iter().map(|(_, a)| a).sum::<f64>() / per_user.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_of_the_negatives_below() {
        let neg: Vec<f64> = (0..20).map(|k| k as f64).collect();
        assert_eq!(pairwise_auc(&[9.5], &neg), Some(0.5));
        assert_eq!(pairwise_auc(&[100.0], &neg), Some(1.0));
        assert_eq!(pairwise_auc(&[5.0], &[5.0]), Some(0.5));
        assert_eq!(pairwise_auc(&[], &neg), None);
    }
}

//! Bayesian personalized ranking over a matrix factorization with item bias:
//! `score(u, i) = P_u . Q_i + b_i`.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::CfHyper;
use crate::data::InteractionMatrix;
use crate::nn::activation::sigmoid;
use crate::nn::params::{join, Parameters};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BprParams {
    /// `[users, f]`
    pub user_factors: Array2<f64>,
    /// `[items, f]`
    pub item_factors: Array2<f64>,
    pub item_bias: Array1<f64>,
}

impl Parameters for BprParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        f(
            join(prefix, "user_factors"),
            self.user_factors.shape(),
            self.user_factors.as_slice().expect("contiguous"),
        );
        f(
            join(prefix, "item_factors"),
            self.item_factors.shape(),
            self.item_factors.as_slice().expect("contiguous"),
        );
        f(
            join(prefix, "item_bias"),
            self.item_bias.shape(),
            self.item_bias.as_slice().expect("contiguous"),
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.user_factors.as_slice_mut().expect("contiguous"));
        f(self.item_factors.as_slice_mut().expect("contiguous"));
        f(self.item_bias.as_slice_mut().expect("contiguous"));
    }
}

impl BprParams {
    pub fn init(users: usize, items: usize, factors: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "bpr/init");
        let dist = Normal::new(0.0, 0.1).expect("valid std");
        Self {
            user_factors: Array2::from_shape_fn((users, factors), |_| dist.sample(&mut r)),
            item_factors: Array2::from_shape_fn((items, factors), |_| dist.sample(&mut r)),
            item_bias: Array1::zeros(items),
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.user_factors.row(user).dot(&self.item_factors.row(item)) + self.item_bias[item]
    }

    pub fn user_scores(&self, user: usize) -> Vec<f64> {
        (self.item_factors.dot(&self.user_factors.row(user)) + &self.item_bias).to_vec()
    }
}

/// A sampled `(user, positive item, negative item)` triple.
pub type Triple = (usize, usize, usize);

/// Per-triple gradient of `ln s(x_uij) - reg/2 (|P_u|^2 + |Q_i|^2 + |Q_j|^2 + b_i^2 + b_j^2)`,
/// returned as `(dP_u, dQ_i, dQ_j, db_i, db_j)`.
fn triple_gradient(
    p: &BprParams,
    (u, i, j): Triple,
    reg: f64,
) -> (Array1<f64>, Array1<f64>, Array1<f64>, f64, f64) {
    let pu = p.user_factors.row(u);
    let qi = p.item_factors.row(i);
    let qj = p.item_factors.row(j);
    let x = p.score(u, i) - p.score(u, j);
    let g = sigmoid(-x);
    let d_pu = (&qi - &qj) * g - &pu * reg;
    let d_qi = &pu * g - &qi * reg;
    let d_qj = &pu * -g - &qj * reg;
    let d_bi = g - reg * p.item_bias[i];
    let d_bj = -g - reg * p.item_bias[j];
    (d_pu, d_qi, d_qj, d_bi, d_bj)
}

/// The BPR objective summed over `triples` (maximized during training).
pub fn objective(p: &BprParams, triples: &[Triple], reg: f64) -> f64 {
    triples
        .iter()
        .map(|&(u, i, j)| {
            let x = p.score(u, i) - p.score(u, j);
            let sq = |v: ndarray::ArrayView1<f64>| v.dot(&v);
            let penalty = sq(p.user_factors.row(u))
                + sq(p.item_factors.row(i))
                + sq(p.item_factors.row(j))
                + p.item_bias[i].powi(2)
                + p.item_bias[j].powi(2);
            -(1.0 + (-x).exp()).ln() - 0.5 * reg * penalty
        })
        .sum()
}

/// Gradient of [`objective`] with respect to every parameter.
pub fn gradient(p: &BprParams, triples: &[Triple], reg: f64) -> BprParams {
    let mut grad = crate::nn::params::zeros_like(p);
    for &t in triples {
        let (d_pu, d_qi, d_qj, d_bi, d_bj) = triple_gradient(p, t, reg);
        let (u, i, j) = t;
        grad.user_factors.row_mut(u).scaled_add(1.0, &d_pu);
        grad.item_factors.row_mut(i).scaled_add(1.0, &d_qi);
        grad.item_factors.row_mut(j).scaled_add(1.0, &d_qj);
        grad.item_bias[i] += d_bi;
        grad.item_bias[j] += d_bj;
    }
    grad
}

/// Stochastic gradient ascent, one pass over all positives per epoch with
/// fresh uniform negatives.
pub fn train(matrix: &InteractionMatrix, hyper: &CfHyper) -> BprParams {
    let n_items = matrix.num_items();
    let mut params = BprParams::init(matrix.num_users(), n_items, hyper.factors, hyper.seed);
    let positives: Vec<(usize, usize)> = matrix
        .pairs()
        .filter(|&(u, _)| matrix.user_row(u).len() < n_items)
        .collect();
    for epoch in 0..hyper.epochs {
        let mut r = rng::substream(hyper.seed, "bpr/epoch", epoch as u64);
        let mut order = positives.clone();
        order.shuffle(&mut r);
        for &(u, i) in &order {
            for _ in 0..hyper.negatives.max(1) {
                let j = loop {
                    let j = r.random_range(0..n_items);
                    if !matrix.contains(u, j) {
                        break j;
                    }
                };
                let (d_pu, d_qi, d_qj, d_bi, d_bj) = triple_gradient(&params, (u, i, j), hyper.reg);
                params.user_factors.row_mut(u).scaled_add(hyper.lr, &d_pu);
                params.item_factors.row_mut(i).scaled_add(hyper.lr, &d_qi);
                params.item_factors.row_mut(j).scaled_add(hyper.lr, &d_qj);
                params.item_bias[i] += hyper.lr * d_bi;
                params.item_bias[j] += hyper.lr * d_bj;
            }
        }
    }
    params
}

//! Multinomial variational autoencoder for implicit feedback, with an
//! additive per-item bias on the decoder output.
//!
//! Encoder: L2-normalised user row -> dropout -> tanh hidden -> (mu, logvar).
//! Decoder: z -> item logits `z Q^T + b`. Rows of `Q` are the item vectors.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::CfHyper;
use crate::data::InteractionMatrix;
use crate::nn::activation::log_softmax_rows;
use crate::nn::params::{join, zeros_like, Parameters};
use crate::nn::{Adam, Linear};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub encoder: Linear,
    pub mu: Linear,
    pub logvar: Linear,
    /// Final decoder layer: weight `[items, f]`, bias = per-item bias.
    pub decoder: Linear,
}

impl Parameters for VaeParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.mu.visit(&join(prefix, "mu"), f);
        self.logvar.visit(&join(prefix, "logvar"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.mu.visit_mut(f);
        self.logvar.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

impl VaeParams {
    pub fn init(items: usize, hidden: usize, factors: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "vae/init");
        Self {
            encoder: Linear::new(items, hidden, 1.0, &mut r),
            mu: Linear::new(hidden, factors, 1.0, &mut r),
            logvar: Linear::new(hidden, factors, 1.0, &mut r),
            decoder: Linear::new(factors, items, 1.0, &mut r),
        }
    }

    pub fn factors(&self) -> usize {
        self.decoder.input_dim()
    }

    /// Posterior mean for a batch of (already normalised) rows.
    pub fn encode_mean(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = self.encoder.forward(x).mapv(f64::tanh);
        self.mu.forward(&h)
    }

    /// Deterministic item scores: decoder applied to the posterior mean.
    pub fn score_rows(&self, rows: &Array2<f64>) -> Array2<f64> {
        self.decoder.forward(&self.encode_mean(&normalize_rows(rows)))
    }
}

/// Scales each row to unit L2 norm; all-zero rows stay zero.
pub fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Noise for one stochastic forward pass, fixed so the loss is a plain
/// function of the parameters.
#[derive(Debug, Clone)]
pub struct VaeNoise {
    /// Standard-normal draws, `[batch, f]`.
    pub eps: Array2<f64>,
    /// Inverted-dropout multipliers on the normalised input, `[batch, items]`.
    pub keep: Array2<f64>,
}

impl VaeNoise {
    pub fn sample(batch: usize, items: usize, factors: usize, dropout: f64, r: &mut Rng) -> Self {
        let eps = Array2::from_shape_fn((batch, factors), |_| StandardNormal.sample(r));
        let keep = if dropout > 0.0 {
            let scale = 1.0 / (1.0 - dropout);
            Array2::from_shape_fn((batch, items), |_| {
                if r.random::<f64>() < dropout {
                    0.0
                } else {
                    scale
                }
            })
        } else {
            Array2::ones((batch, items))
        };
        Self { eps, keep }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    /// Mean multinomial negative log-likelihood per user.
    pub nll: f64,
    /// Mean Gaussian KL divergence per user.
    pub kl: f64,
    pub beta: f64,
}

impl VaeLoss {
    pub fn total(&self) -> f64 {
        self.nll + self.beta * self.kl
    }
}

/// Negative ELBO (`nll + beta * kl`, averaged over the batch) and its gradient.
pub fn loss_and_gradient(
    p: &VaeParams,
    x: &Array2<f64>,
    noise: &VaeNoise,
    beta: f64,
) -> (VaeLoss, VaeParams) {
    let batch = x.nrows() as f64;
    let xin = normalize_rows(x) * &noise.keep;
    let h = p.encoder.forward(&xin).mapv(f64::tanh);
    let mu = p.mu.forward(&h);
    let logvar = p.logvar.forward(&h);
    let std = logvar.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&noise.eps * &std);
    let logits = p.decoder.forward(&z);
    let logp = log_softmax_rows(&logits);

    let nll = -(x * &logp).sum() / batch;
    let kl = 0.5 * (logvar.mapv(f64::exp) + mu.mapv(|m| m * m) - 1.0 - &logvar).sum() / batch;

    let mut grad = zeros_like(p);
    let row_mass = x.sum_axis(Axis(1)).insert_axis(Axis(1));
    let dlogits = (logp.mapv(f64::exp) * &row_mass - x) / batch;
    let dz = p.decoder.backward(&z, &dlogits, &mut grad.decoder);
    let dmu = &dz + &(&mu * (beta / batch));
    let dlogvar = &dz * &noise.eps * &std * 0.5 + logvar.mapv(|v| v.exp() - 1.0) * (0.5 * beta / batch);
    let dh = p.mu.backward(&h, &dmu, &mut grad.mu) + p.logvar.backward(&h, &dlogvar, &mut grad.logvar);
    let da = dh * h.mapv(|t| 1.0 - t * t);
    p.encoder.backward_params(&xin, &da, &mut grad.encoder);

    (VaeLoss { nll, kl, beta }, grad)
}

/// Dense binary rows for the given users.
pub fn dense_rows(matrix: &InteractionMatrix, users: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((users.len(), matrix.num_items()));
    for (b, &u) in users.iter().enumerate() {
        for &i in matrix.user_row(u) {
            x[[b, i]] = 1.0;
        }
    }
    x
}

/// Training record: one entry per optimizer step.
#[derive(Debug, Clone, Default)]
pub struct VaeTrace {
    pub steps: Vec<VaeLoss>,
}

pub fn train(matrix: &InteractionMatrix, hyper: &CfHyper) -> (VaeParams, VaeTrace) {
    let hidden = hyper.hidden.unwrap_or(2 * hyper.factors);
    let mut params = VaeParams::init(matrix.num_items(), hidden, hyper.factors, hyper.seed);
    let mut opt = Adam::new(hyper.lr).with_weight_decay(hyper.reg);
    let users: Vec<usize> = (0..matrix.num_users())
        .filter(|&u| !matrix.user_row(u).is_empty())
        .collect();
    let mut trace = VaeTrace::default();
    let mut step = 0usize;
    for epoch in 0..hyper.epochs {
        let mut r = rng::substream(hyper.seed, "vae/epoch", epoch as u64);
        let mut order = users.clone();
        order.shuffle(&mut r);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let beta = if hyper.anneal_steps == 0 {
                hyper.kl_cap
            } else {
                (step as f64 / hyper.anneal_steps as f64).min(hyper.kl_cap)
            };
            let x = dense_rows(matrix, chunk);
            let noise = VaeNoise::sample(chunk.len(), matrix.num_items(), hyper.factors, hyper.dropout, &mut r);
            let (loss, grad) = loss_and_gradient(&params, &x, &noise, beta);
            opt.step(&mut params, &grad);
            trace.steps.push(loss);
            step += 1;
        }
    }
    (params, trace)
}

/// Item vectors: rows of the final decoder weight, bias excluded.
pub fn item_vectors(p: &VaeParams) -> Vec<Array1<f64>> {
    p.decoder.weight.axis_iter(Axis(0)).map(|r| r.to_owned()).collect()
}

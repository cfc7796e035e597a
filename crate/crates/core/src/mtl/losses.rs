//! Losses of the multitask objective and their analytic gradients.

use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, Role, SplitAssignment};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-7;
/// Largest exponent passed to `exp` in the reconstruction loss.
pub const EXP_CAP: f64 = 700.0;

/// Loss hyperparameters plus the per-class weights of the main loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    /// Clamp on item weights (`Omega`).
    pub cap: f64,
    /// Triplet margin.
    pub tau: f64,
    pub class_weights: Vec<f64>,
}

impl LossConfig {
    pub fn new(alpha: f64, cap: f64, tau: f64, class_weights: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            alpha,
            cap,
            tau,
            class_weights,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.cap > 0.0) {
            return Err(Error::Config(format!("weight cap must be > 0, got {}", self.cap)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("triplet margin must be > 0, got {}", self.tau)));
        }
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("class weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Effective multiplier `alpha * min(omega, cap)` of an item's
    /// reconstruction loss.
    pub fn aux_scale(&self, omega: f64) -> f64 {
        self.alpha * omega.min(self.cap)
    }
}

/// `w_n = c / eta_n`, normalized to mean 1 over classes with `eta_n > 0`;
/// classes without positives get weight 0.
pub fn class_weights_from_counts(eta: &[usize]) -> Result<Vec<f64>> {
    let present = eta.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return Err(Error::invalid("no labels: every class has zero positives"));
    }
    let inv_sum: f64 = eta.iter().filter(|&&c| c > 0).map(|&c| 1.0 / c as f64).sum();
    let c = present as f64 / inv_sum;
    Ok(eta
        .iter()
        .map(|&n| if n > 0 { c / n as f64 } else { 0.0 })
        .collect())
}

/// Class weights from the positives of labeled train items.
pub fn class_weights(catalog: &ItemCatalog, split: &SplitAssignment) -> Result<Vec<f64>> {
    let mut eta = vec![0usize; catalog.num_classes()];
    for r in catalog.records() {
        if split.role(&r.item_id) == Some(Role::Train) {
            for n in r.positives() {
                eta[n] += 1;
            }
        }
    }
    class_weights_from_counts(&eta)
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: length mismatch ({a} vs {b})")));
    }
    Ok(())
}

/// Class-balanced binary cross-entropy on clipped probabilities.
pub fn loss_main(y_hat: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    check_len("loss_main", y_hat.len(), y.len())?;
    check_len("loss_main", y_hat.len(), w.len())?;
    Ok(y_hat
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&p, &t), &wn)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -wn * (t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum())
}

/// Gradient of [`loss_main`] with respect to `y_hat` (zero where clipped).
pub fn grad_loss_main(y_hat: &[f64], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len("loss_main", y_hat.len(), y.len())?;
    check_len("loss_main", y_hat.len(), w.len())?;
    Ok(y_hat
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&p, &t), &wn)| {
            if p <= EPS || p >= 1.0 - EPS {
                0.0
            } else {
                -wn * (t / p - (1.0 - t) / (1.0 - p))
            }
        })
        .collect())
}

/// Gradient of [`loss_main`] with respect to the logits `z`, `y_hat = sigmoid(z)`.
pub fn grad_loss_main_logits(y_hat: &[f64], y: &[f64], w: &[f64]) -> Vec<f64> {
    y_hat
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&p, &t), &wn)| wn * (p - t))
        .collect()
}

fn distances(q: &[f64], q_hat: &[f64]) -> (f64, f64) {
    let l1 = q.iter().zip(q_hat).map(|(a, b)| (a - b).abs()).sum();
    let l2 = q.iter().zip(q_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    (l1, l2)
}

/// `exp(L1 + L2)` between the target and predicted CF vectors, capped at
/// `exp(EXP_CAP)`.
pub fn loss_cf_reconstruct(q: &[f64], q_hat: &[f64]) -> Result<f64> {
    check_len("loss_cf_reconstruct", q.len(), q_hat.len())?;
    let (l1, l2) = distances(q, q_hat);
    Ok((l1 + l2).min(EXP_CAP).exp())
}

/// Gradient of [`loss_cf_reconstruct`] with respect to `q_hat`. Past the cap
/// the magnitude stays at `exp(EXP_CAP)` and only the direction varies.
pub fn grad_cf_reconstruct(q: &[f64], q_hat: &[f64]) -> Result<Vec<f64>> {
    check_len("loss_cf_reconstruct", q.len(), q_hat.len())?;
    let (l1, l2) = distances(q, q_hat);
    let e = (l1 + l2).min(EXP_CAP).exp();
    Ok(q
        .iter()
        .zip(q_hat)
        .map(|(&a, &b)| {
            let d = b - a;
            let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            let radial = if l2 > 0.0 { d / l2 } else { 0.0 };
            e * (sign + radial)
        })
        .collect())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega >= 0.0) {
        return Err(Error::invalid(format!("item weight must be >= 0, got {omega}")));
    }
    Ok(())
}

/// `min(omega, cap) * loss_cf_reconstruct(q, q_hat)`; exactly 0 when `omega = 0`.
pub fn loss_aux(q: &[f64], q_hat: &[f64], omega: f64, cap: f64) -> Result<f64> {
    check_omega(omega)?;
    check_len("loss_aux", q.len(), q_hat.len())?;
    if omega == 0.0 {
        return Ok(0.0);
    }
    Ok(omega.min(cap) * loss_cf_reconstruct(q, q_hat)?)
}

/// Gradients of [`loss_aux`] with respect to `q_hat` and to `omega`.
pub fn grad_loss_aux(q: &[f64], q_hat: &[f64], omega: f64, cap: f64) -> Result<(Vec<f64>, f64)> {
    check_omega(omega)?;
    let scale = omega.min(cap);
    let g = grad_cf_reconstruct(q, q_hat)?
        .into_iter()
        .map(|v| scale * v)
        .collect();
    let d_omega = if omega < cap {
        loss_cf_reconstruct(q, q_hat)?
    } else {
        0.0
    };
    Ok((g, d_omega))
}

/// One item's contribution to the multitask objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlLoss {
    pub total: f64,
    pub main: Option<f64>,
    pub aux: Option<f64>,
}

impl MtlLoss {
    /// Neither a label nor a CF target: the item teaches nothing.
    pub fn is_wasted(&self) -> bool {
        self.main.is_none() && self.aux.is_none()
    }
}

/// `loss_main + alpha * loss_aux`, dropping the term whose target is missing.
pub fn loss_mtl(
    y_hat: &[f64],
    y: Option<&[f64]>,
    q_hat: &[f64],
    q: Option<&[f64]>,
    omega: f64,
    cfg: &LossConfig,
) -> Result<MtlLoss> {
    let main = y.map(|y| loss_main(y_hat, y, &cfg.class_weights)).transpose()?;
    let aux = q.map(|q| loss_aux(q, q_hat, omega, cfg.cap)).transpose()?;
    let total = main.unwrap_or(0.0) + aux.map_or(0.0, |a| cfg.alpha * a);
    Ok(MtlLoss { total, main, aux })
}

/// Gradients of [`loss_mtl`]'s total with respect to `y_hat` and `q_hat`.
pub fn grad_loss_mtl(
    y_hat: &[f64],
    y: Option<&[f64]>,
    q_hat: &[f64],
    q: Option<&[f64]>,
    omega: f64,
    cfg: &LossConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gy = match y {
        Some(y) => grad_loss_main(y_hat, y, &cfg.class_weights)?,
        None => vec![0.0; y_hat.len()],
    };
    let gq = match q {
        Some(q) => grad_loss_aux(q, q_hat, omega, cfg.cap)?
            .0
            .into_iter()
            .map(|v| cfg.alpha * v)
            .collect(),
        None => vec![0.0; q_hat.len()],
    };
    Ok((gy, gq))
}

/// Mean of per-item losses and the number of wasted items.
pub fn batch_loss_mtl(items: &[MtlLoss]) -> (f64, usize) {
    let wasted = items.iter().filter(|l| l.is_wasted()).count();
    let mean = if items.is_empty() {
        0.0
    } else {
        items.iter().map(|l| l.total).sum::<f64>() / items.len() as f64
    };
    (mean, wasted)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("triplet margin must be > 0, got {tau}")));
    }
    Ok(())
}

/// `max(L2(a, p) - L2(a, n) + tau, 0)`.
pub fn loss_triplet(a: &[f64], p: &[f64], n: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_len("loss_triplet", a.len(), p.len())?;
    check_len("loss_triplet", a.len(), n.len())?;
    Ok((l2(a, p) - l2(a, n) + tau).max(0.0))
}

/// Gradients of [`loss_triplet`] with respect to `a`, `p` and `n`.
pub fn grad_loss_triplet(a: &[f64], p: &[f64], n: &[f64], tau: f64) -> Result<[Vec<f64>; 3]> {
    let f = a.len();
    if loss_triplet(a, p, n, tau)? <= 0.0 {
        return Ok([vec![0.0; f], vec![0.0; f], vec![0.0; f]]);
    }
    let (dp, dn) = (l2(a, p), l2(a, n));
    let unit = |x: f64, y: f64, d: f64| if d > 0.0 { (x - y) / d } else { 0.0 };
    let ga = (0..f).map(|k| unit(a[k], p[k], dp) - unit(a[k], n[k], dn)).collect();
    let gp = (0..f).map(|k| -unit(a[k], p[k], dp)).collect();
    let gn = (0..f).map(|k| unit(a[k], n[k], dn)).collect();
    Ok([ga, gp, gn])
}

use super::params::{tensor_slices, Parameters};

/// Stochastic gradient descent with classical momentum:
/// `v = momentum * v + g; p -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay: 0.0,
            velocity: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let grads = tensor_slices(grads);
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        let mut k = 0;
        let velocity = &mut self.velocity;
        params.visit_mut(&mut |p| {
            for ((w, g), v) in p.iter_mut().zip(&grads[k]).zip(velocity[k].iter_mut()) {
                let g = g + wd * *w;
                *v = mu * *v + g;
                *w -= lr * *v;
            }
            k += 1;
        });
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let grads = tensor_slices(grads);
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2, eps, lr, wd) = (self.beta1, self.beta2, self.eps, self.lr, self.weight_decay);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut k = 0;
        params.visit_mut(&mut |p| {
            for (j, w) in p.iter_mut().enumerate() {
                let g = grads[k][j] + wd * *w;
                m[k][j] = b1 * m[k][j] + (1.0 - b1) * g;
                v[k][j] = b2 * v[k][j] + (1.0 - b2) * g * g;
                *w -= lr * (m[k][j] / c1) / ((v[k][j] / c2).sqrt() + eps);
            }
            k += 1;
        });
    }
}

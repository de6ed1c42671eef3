//! One-hidden-layer ReLU network with a softmax output, trained by mini-batch
//! gradient descent with momentum on mean cross-entropy.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            hidden: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Parameters live in one flat vector laid out as `[w1 | b1 | w2 | b2]`,
/// with `w1` hidden × inputs and `w2` classes × hidden, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "mlp-init", &[]);
        let mut params = vec![0.0; hidden * inputs + hidden + classes * hidden + classes];
        let s1 = (2.0 / inputs as f64).sqrt();
        let s2 = (2.0 / hidden as f64).sqrt();
        let (w1, rest) = params.split_at_mut(hidden * inputs);
        for v in w1.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * s1;
        }
        let w2 = &mut rest[hidden..hidden + classes * hidden];
        for v in w2.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * s2;
        }
        Mlp {
            inputs,
            hidden,
            classes,
            params,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }

    /// (pre-activation hidden, class probabilities)
    fn forward_full(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        let pre: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &p[h * self.inputs..(h + 1) * self.inputs];
                p[ob1 + h] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &p[ow2 + c * self.hidden..ow2 + (c + 1) * self.hidden];
                p[ob2 + c] + row.iter().zip(&pre).map(|(a, z)| a * z.max(0.0)).sum::<f64>()
            })
            .collect();
        (pre, softmax(&logits))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward_full(x).1
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| -self.predict_proba(x)[y].max(1e-300).ln())
            .sum::<f64>()
            / xs.len() as f64
    }

    /// Gradient of [`Mlp::loss`] with respect to `params`.
    pub fn gradient(&self, xs: &[Vec<f64>], ys: &[usize]) -> Vec<f64> {
        let (ob1, ow2, ob2) = self.offsets();
        let mut g = vec![0.0; self.params.len()];
        let scale = 1.0 / xs.len() as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let (pre, prob) = self.forward_full(x);
            let act: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
            let mut dhidden = vec![0.0; self.hidden];
            for c in 0..self.classes {
                let dlogit = (prob[c] - if c == y { 1.0 } else { 0.0 }) * scale;
                g[ob2 + c] += dlogit;
                let row = ow2 + c * self.hidden;
                for h in 0..self.hidden {
                    g[row + h] += dlogit * act[h];
                    dhidden[h] += dlogit * self.params[row + h];
                }
            }
            for h in 0..self.hidden {
                if pre[h] <= 0.0 {
                    continue;
                }
                let d = dhidden[h];
                g[ob1 + h] += d;
                let row = h * self.inputs;
                for (gi, xi) in g[row..row + self.inputs].iter_mut().zip(x) {
                    *gi += d * xi;
                }
            }
        }
        g
    }

    /// Trains in place. Weight decay applies to weights, not biases.
    pub fn train(&mut self, xs: &[Vec<f64>], ys: &[usize], params: &TrainParams) {
        let (ob1, ow2, ob2) = self.offsets();
        let is_bias = |i: usize| (ob1..ow2).contains(&i) || i >= ob2;
        let mut velocity = vec![0.0; self.params.len()];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut rng = rng::stream(params.seed, "mlp-batches", &[]);
        let batch = params.batch_size.max(1);
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
                let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
                let g = self.gradient(&bx, &by);
                for (i, (p, v)) in self.params.iter_mut().zip(velocity.iter_mut()).enumerate() {
                    let decay = if is_bias(i) { 0.0 } else { params.weight_decay * *p };
                    *v = params.momentum * *v - params.learning_rate * (g[i] + decay);
                    *p += *v;
                }
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if *x > best.1 { (i, *x) } else { best })
        .0
}

/// Per-feature z-scoring fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = std.into_iter().map(|s| s.sqrt().max(1e-8)).collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

//! Multinomial logistic regression.

use crate::error::{invalid, Result};

/// Row-major `classes x (features + 1)` weights; the last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    features: usize,
    classes: usize,
    weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(features: usize, classes: usize) -> Self {
        Self {
            features,
            classes,
            weights: vec![0.0; classes * (features + 1)],
        }
    }

    pub fn from_weights(features: usize, classes: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * (features + 1) {
            return Err(invalid("weight vector has the wrong length"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("model weights must be finite"));
        }
        Ok(Self {
            features,
            classes,
            weights,
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.features == other.features && self.classes == other.classes
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        let stride = self.features + 1;
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * stride..(c + 1) * stride];
            *o = row[self.features]
                + row[..self.features]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
        }
    }

    /// Class probabilities for one sample.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.classes];
        self.logits_into(x, &mut z);
        softmax_in_place(&mut z);
        z
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.classes];
        self.logits_into(x, &mut z);
        argmax(&z)
    }

    /// Cross-entropy of one sample.
    pub fn sample_loss(&self, x: &[f64], y: usize) -> f64 {
        let mut z = vec![0.0; self.classes];
        self.logits_into(x, &mut z);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - z[y]
    }

    /// Adds `scale * grad l(w; x, y)` to `grad`, reusing `buf` for logits.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        y: usize,
        scale: f64,
        grad: &mut [f64],
        buf: &mut [f64],
    ) {
        self.logits_into(x, buf);
        softmax_in_place(buf);
        let stride = self.features + 1;
        for c in 0..self.classes {
            let r = scale * (buf[c] - if c == y { 1.0 } else { 0.0 });
            let row = &mut grad[c * stride..(c + 1) * stride];
            for (g, v) in row[..self.features].iter_mut().zip(x) {
                *g += r * v;
            }
            row[self.features] += r;
        }
    }

    /// Mean-loss gradient over the given rows.
    pub fn gradient<'a>(&self, rows: impl IntoIterator<Item = (&'a [f64], usize)>) -> Vec<f64> {
        let rows: Vec<_> = rows.into_iter().collect();
        let mut grad = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.classes];
        if rows.is_empty() {
            return grad;
        }
        let scale = 1.0 / rows.len() as f64;
        for (x, y) in rows {
            self.accumulate_gradient(x, y, scale, &mut grad, &mut buf);
        }
        grad
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Index of the largest entry, first one on ties.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

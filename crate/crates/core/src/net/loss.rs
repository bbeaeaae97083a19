//! Classification losses on logits and the margin quantities used to bound them.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    #[default]
    CrossEntropy,
    /// Ramp loss of the negated margin with width `gamma`.
    Ramp { gamma: f64 },
}

/// Index of the largest logit other than `y` (first one on ties).
fn runner_up(logits: &[f64], y: usize) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in logits.iter().enumerate() {
        if i != y && (best == usize::MAX || v > logits[best]) {
            best = i;
        }
    }
    best
}

/// `logits[y] - max_{i != y} logits[i]`. Requires at least two classes.
pub fn margin(logits: &[f64], y: usize) -> f64 {
    assert!(logits.len() >= 2, "margin needs at least two classes");
    logits[y] - logits[runner_up(logits, y)]
}

/// 0 below `-gamma`, `1 + x / gamma` on `[-gamma, 0]`, 1 above 0.
pub fn ramp_loss(x: f64, gamma: f64) -> f64 {
    if x < -gamma {
        0.0
    } else if x > 0.0 {
        1.0
    } else {
        1.0 + x / gamma
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss value and its gradient with respect to the logits.
pub fn loss_and_grad(logits: &[f64], y: usize, loss: &LossKind) -> (f64, Vec<f64>) {
    match *loss {
        LossKind::CrossEntropy => {
            let value = log_sum_exp(logits) - logits[y];
            let mut grad = softmax(logits);
            grad[y] -= 1.0;
            (value, grad)
        }
        LossKind::Ramp { gamma } => {
            let other = runner_up(logits, y);
            let x = -(logits[y] - logits[other]);
            let value = ramp_loss(x, gamma);
            let mut grad = vec![0.0; logits.len()];
            if (-gamma..=0.0).contains(&x) {
                grad[y] = -1.0 / gamma;
                grad[other] = 1.0 / gamma;
            }
            (value, grad)
        }
    }
}

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grad_logits: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy against a single target class. The gradient is `probs − one_hot(target)`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<CrossEntropy> {
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + shifted_sum.ln();
    let loss = log_z - logits[target];
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("logits {logits:?}")));
    }
    let probs = softmax(logits);
    let mut grad_logits = probs.clone();
    grad_logits[target] -= 1.0;
    Ok(CrossEntropy {
        loss,
        probs,
        grad_logits,
    })
}

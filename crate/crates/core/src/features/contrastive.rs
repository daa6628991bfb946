use super::{dot, FeatureVec};
use crate::error::{Result, SeaError};

/// One InfoNCE term: a query, its positive key and `r >= 1` negative keys.
#[derive(Clone, Debug)]
pub struct ContrastiveBatch {
    pub query: FeatureVec,
    pub positive: FeatureVec,
    pub negatives: Vec<FeatureVec>,
    pub temperature: f64,
}

impl ContrastiveBatch {
    pub fn new(query: FeatureVec, positive: FeatureVec, negatives: Vec<FeatureVec>, temperature: f64) -> Result<Self> {
        if negatives.is_empty() {
            return Err(SeaError::invalid("contrastive batch needs at least one negative"));
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(SeaError::invalid(format!("temperature must be > 0, got {temperature}")));
        }
        let d = query.dim();
        for k in std::iter::once(&positive).chain(&negatives) {
            if k.dim() != d {
                return Err(SeaError::DimensionMismatch { expected: d, got: k.dim() });
            }
        }
        Ok(Self { query, positive, negatives, temperature })
    }

    fn logits(&self, q: &[f64]) -> Vec<f64> {
        std::iter::once(&self.positive).chain(&self.negatives).map(|k| dot(q, k.as_slice()) / self.temperature).collect()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-log(exp(q.p/t) / sum_j exp(q.k_j/t))`, where `k_0` is the positive.
pub fn contrastive_loss(batch: &ContrastiveBatch) -> f64 {
    let logits = batch.logits(batch.query.as_slice());
    log_sum_exp(&logits) - logits[0]
}

/// Loss together with its gradient with respect to the query vector
/// (keys are treated as constants).
pub fn contrastive_loss_and_grad(batch: &ContrastiveBatch) -> (f64, Vec<f64>) {
    let logits = batch.logits(batch.query.as_slice());
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[0];
    let mut grad = vec![0.0; batch.query.dim()];
    for (j, k) in std::iter::once(&batch.positive).chain(&batch.negatives).enumerate() {
        let w = (logits[j] - lse).exp() - if j == 0 { 1.0 } else { 0.0 };
        for (g, x) in grad.iter_mut().zip(k.as_slice()) {
            *g += w * x / batch.temperature;
        }
    }
    (loss, grad)
}

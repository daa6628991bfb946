use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{contrastive_loss_and_grad, kmeans_fit, ClusterModel, ContrastiveBatch, FeatureVec};
use crate::error::{Result, SeaError};
use crate::rng::{derive, seeded};

/// Linear projection followed by L2 normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceEmbedder {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
}

impl PlaceEmbedder {
    pub fn random(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        Self { in_dim, out_dim, weights }
    }

    fn project(&self, raw: &[f64]) -> Vec<f64> {
        self.weights.chunks(self.in_dim).map(|row| super::dot(row, raw)).collect()
    }

    pub fn embed(&self, raw: &[f64]) -> Result<FeatureVec> {
        if raw.len() != self.in_dim {
            return Err(SeaError::DimensionMismatch { expected: self.in_dim, got: raw.len() });
        }
        FeatureVec::normalized(self.project(raw))
    }
}

/// Place clusters plus the encoder that maps raw place observations into the
/// cluster space. Serialized as the cluster model document with an optional
/// `embedder` entry; without one, raw features are used directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceModel {
    #[serde(flatten)]
    pub clusters: ClusterModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<PlaceEmbedder>,
}

impl PlaceModel {
    pub fn n_places(&self) -> usize {
        self.clusters.k
    }

    pub fn place_feature(&self, raw: &[f64]) -> Result<FeatureVec> {
        match &self.embedder {
            Some(e) => e.embed(raw),
            None => FeatureVec::normalized(raw.to_vec()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledSample {
    pub raw: Vec<f64>,
    /// Rotated/nearby view of the same location.
    pub near: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedderTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub temperature_place: f64,
    pub temperature_near: f64,
    pub temperature_cluster: f64,
    pub negatives: usize,
    pub clusters: usize,
    pub out_dim: usize,
    pub seed: u64,
}

impl Default for EmbedderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.05,
            temperature_place: 0.2,
            temperature_near: 0.7,
            temperature_cluster: 0.2,
            negatives: 16,
            clusters: 8,
            out_dim: super::PLACE_DIM,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub embedder: PlaceEmbedder,
    /// Mean combined loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Gradient descent on `L_place + L_near + L_cluster`. Keys are held fixed
/// within each step; cluster targets are refreshed by k-means every epoch.
pub fn train_place_embedder(samples: &[LabeledSample], config: &EmbedderTrainConfig) -> Result<TrainingReport> {
    let in_dim = samples.first().map(|s| s.raw.len()).ok_or_else(|| SeaError::invalid("no training samples"))?;
    if samples.iter().any(|s| s.raw.len() != in_dim || s.near.len() != in_dim) {
        return Err(SeaError::invalid("training samples have inconsistent dimensions"));
    }
    if config.negatives == 0 {
        return Err(SeaError::invalid("need at least one negative"));
    }
    let mut embedder = PlaceEmbedder::random(in_dim, config.out_dim, derive(config.seed, 1));
    let mut rng = seeded(derive(config.seed, 2));
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let keys: Vec<FeatureVec> = samples.iter().map(|s| embedder.embed(&s.raw)).collect::<Result<_>>()?;
        let k = config.clusters.min(samples.len()).max(1);
        let fit = kmeans_fit(&keys, k, derive(config.seed, 1000 + epoch as u64))?;

        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;

        for &i in &order {
            let s = &samples[i];
            let u = embedder.project(&s.raw);
            let q = FeatureVec::normalized(u.clone())?;
            let mut grad_q = vec![0.0; config.out_dim];
            let mut loss = 0.0;

            let negatives = sample_negatives(samples, &keys, s.label, config.negatives, &mut rng);
            if let (Some(pos), false) = (sample_positive(samples, &keys, i, &mut rng), negatives.is_empty()) {
                let b = ContrastiveBatch::new(q.clone(), pos, negatives.clone(), config.temperature_place)?;
                accumulate(&b, &mut loss, &mut grad_q);
            }
            if !negatives.is_empty() {
                let near = embedder.embed(&s.near)?;
                let b = ContrastiveBatch::new(q.clone(), near, negatives, config.temperature_near)?;
                accumulate(&b, &mut loss, &mut grad_q);
            }
            if k > 1 {
                let own = fit.assignments[i];
                let others = fit.model.centroids.iter().enumerate().filter(|&(c, _)| c != own).map(|(_, c)| c.clone()).collect();
                let b = ContrastiveBatch::new(q.clone(), fit.model.centroids[own].clone(), others, config.temperature_cluster)?;
                accumulate(&b, &mut loss, &mut grad_q);
            }

            if !loss.is_finite() {
                return Err(SeaError::NonFinite(format!("metric loss at epoch {epoch}, sample {i}: {loss}")));
            }
            epoch_loss += loss;

            // back through the normalization: du = (I - q q^T) dq / |u|
            let norm = super::dot(&u, &u).sqrt();
            let qg = q.dot(&FeatureVec::from_raw(grad_q.clone()));
            for (row, (gq, qa)) in grad_q.iter().zip(q.as_slice()).enumerate() {
                let du = (gq - qa * qg) / norm;
                if du == 0.0 {
                    continue;
                }
                let w = &mut embedder.weights[row * in_dim..(row + 1) * in_dim];
                for (wv, x) in w.iter_mut().zip(&s.raw) {
                    *wv -= config.learning_rate * du * x;
                }
            }
        }
        trace.push(epoch_loss / samples.len() as f64);
    }

    Ok(TrainingReport { embedder, loss_trace: trace })
}

fn accumulate(b: &ContrastiveBatch, loss: &mut f64, grad: &mut [f64]) {
    let (l, g) = contrastive_loss_and_grad(b);
    *loss += l;
    for (a, x) in grad.iter_mut().zip(g) {
        *a += x;
    }
}

fn sample_positive<R: Rng>(samples: &[LabeledSample], keys: &[FeatureVec], i: usize, rng: &mut R) -> Option<FeatureVec> {
    let label = samples[i].label;
    let same: Vec<usize> = (0..samples.len()).filter(|&j| j != i && samples[j].label == label).collect();
    (!same.is_empty()).then(|| keys[same[rng.random_range(0..same.len())]].clone())
}

fn sample_negatives<R: Rng>(samples: &[LabeledSample], keys: &[FeatureVec], label: usize, r: usize, rng: &mut R) -> Vec<FeatureVec> {
    let pool: Vec<usize> = (0..samples.len()).filter(|&j| samples[j].label != label).collect();
    if pool.is_empty() {
        return Vec::new();
    }
    (0..r).map(|_| keys[pool[rng.random_range(0..pool.len())]].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cosine_sim;
    use rand_distr::{Distribution, Normal};

    fn toy(n_labels: usize, per_label: usize, seed: u64) -> Vec<LabeledSample> {
        let mut rng = seeded(seed);
        let protos: Vec<FeatureVec> = (0..n_labels).map(|l| FeatureVec::random_unit(24, &mut seeded(500 + l as u64))).collect();
        let noise = Normal::new(0.0, 0.25).unwrap();
        let mut out = Vec::new();
        for (label, p) in protos.iter().enumerate() {
            for _ in 0..per_label {
                let raw: Vec<f64> = p.as_slice().iter().map(|x| x + noise.sample(&mut rng)).collect();
                let near: Vec<f64> = raw.iter().map(|x| x + 0.3 * noise.sample(&mut rng)).collect();
                out.push(LabeledSample { raw, near, label });
            }
        }
        out
    }

    fn mean_sims(e: &PlaceEmbedder, data: &[LabeledSample]) -> (f64, f64) {
        let f: Vec<_> = data.iter().map(|s| e.embed(&s.raw).unwrap()).collect();
        let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0, 0.0, 0);
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                let s = cosine_sim(&f[i], &f[j]).unwrap();
                if data[i].label == data[j].label {
                    intra += s;
                    ni += 1;
                } else {
                    inter += s;
                    ne += 1;
                }
            }
        }
        (intra / ni as f64, inter / ne as f64)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = toy(2, 5, 1);
        let cfg = EmbedderTrainConfig { epochs: 0, out_dim: 8, seed: 3, ..Default::default() };
        let rep = train_place_embedder(&data, &cfg).unwrap();
        assert_eq!(rep.embedder, PlaceEmbedder::random(24, 8, derive(3, 1)));
        assert!(rep.loss_trace.is_empty());
    }

    #[test]
    fn training_reduces_loss_and_separates_labels() {
        let data = toy(4, 50, 7);
        let held_out = toy(4, 10, 8);
        let cfg = EmbedderTrainConfig { epochs: 50, clusters: 4, out_dim: 16, seed: 5, ..Default::default() };
        let rep = train_place_embedder(&data, &cfg).unwrap();
        let first = rep.loss_trace[0];
        let last = *rep.loss_trace.last().unwrap();
        assert!(last < first, "loss {first} -> {last}");
        let (intra, inter) = mean_sims(&rep.embedder, &held_out);
        assert!(intra > inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn rejects_inconsistent_samples() {
        let bad = vec![LabeledSample { raw: vec![1.0, 0.0], near: vec![1.0], label: 0 }];
        assert!(train_place_embedder(&bad, &EmbedderTrainConfig::default()).is_err());
        assert!(train_place_embedder(&[], &EmbedderTrainConfig::default()).is_err());
    }

    #[test]
    fn place_model_json_extends_cluster_schema() {
        let clusters = ClusterModel::new(vec![FeatureVec::basis(3, 0), FeatureVec::basis(3, 2)]).unwrap();
        let pm = PlaceModel { clusters: clusters.clone(), embedder: Some(PlaceEmbedder::random(2, 3, 0)) };
        let v = serde_json::to_value(&pm).unwrap();
        assert_eq!(v["K"], 2);
        assert!(v["embedder"].is_object());
        let plain: ClusterModel = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(plain, clusters);
        let back: PlaceModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, pm);
    }
}

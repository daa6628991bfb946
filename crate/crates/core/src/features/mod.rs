//! Embedding space utilities: unit-norm feature vectors, cosine similarity,
//! spherical k-means, InfoNCE losses and the linear place embedder.

mod contrastive;
mod embedder;
mod kmeans;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeaError};

pub use contrastive::{contrastive_loss, contrastive_loss_and_grad, ContrastiveBatch};
pub use embedder::{train_place_embedder, EmbedderTrainConfig, LabeledSample, PlaceEmbedder, PlaceModel, TrainingReport};
pub use kmeans::{kmeans, kmeans_best_of, kmeans_fit, ClusterModel, KMeansFit};

pub const PLACE_DIM: usize = 128;
pub const IMAGE_DIM: usize = 512;
pub const OBJECT_DIM: usize = 32;

/// Real-valued feature vector. Constructors that normalize guarantee unit
/// L2 norm; `from_raw` keeps the values untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = Self(values);
        v.normalize()?;
        Ok(v)
    }

    /// Standard basis vector `e_axis` of dimension `dim`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    /// Uniformly random direction on the unit sphere.
    pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(f) = Self::normalized(v) {
                return f;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn dot(&self, other: &FeatureVec) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || n <= 0.0 {
            return Err(SeaError::ZeroVector);
        }
        self.0.iter_mut().for_each(|x| *x /= n);
        Ok(())
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-6
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity `dot(a,b)/(|a||b|)`, clamped into [-1, 1].
pub fn cosine_sim(a: &FeatureVec, b: &FeatureVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(SeaError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(SeaError::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity for vectors already known to be unit norm and of equal
/// dimension. Hot path for graph scans.
#[inline]
pub(crate) fn unit_sim(a: &FeatureVec, b: &FeatureVec) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.dot(b).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn self_similarity_is_one() {
        let v = FeatureVec::from_raw(vec![0.3, -2.0, 5.0]);
        assert!((cosine_sim(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_basis_vectors() {
        let a = FeatureVec::basis(4, 0);
        let b = FeatureVec::basis(4, 1);
        assert_eq!(cosine_sim(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_against_axis() {
        let s = 1.0 / 2f64.sqrt();
        let a = FeatureVec::from_raw(vec![s, s]);
        let b = FeatureVec::from_raw(vec![1.0, 0.0]);
        assert!((cosine_sim(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = FeatureVec::from_raw(vec![1.0, 0.0]);
        let b = FeatureVec::from_raw(vec![1.0, 0.0, 0.0]);
        let z = FeatureVec::from_raw(vec![0.0, 0.0]);
        assert!(matches!(cosine_sim(&a, &b), Err(SeaError::DimensionMismatch { .. })));
        assert!(matches!(cosine_sim(&a, &z), Err(SeaError::ZeroVector)));
        assert!(FeatureVec::normalized(vec![0.0; 3]).is_err());
    }

    #[test]
    fn symmetry_on_random_vectors() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let a = FeatureVec::random_unit(16, &mut rng);
            let b = FeatureVec::random_unit(16, &mut rng);
            assert!(a.is_unit());
            let ab = cosine_sim(&a, &b).unwrap();
            assert_eq!(ab, cosine_sim(&b, &a).unwrap());
            assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cosine_bounded_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            s in 0.1f64..50.0,
        ) {
            let fa = FeatureVec::from_raw(a.clone());
            let fb = FeatureVec::from_raw(b);
            prop_assume!(fa.norm() > 1e-6 && fb.norm() > 1e-6);
            let c = cosine_sim(&fa, &fb).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            let scaled = FeatureVec::from_raw(a.iter().map(|x| x * s).collect());
            prop_assert!((cosine_sim(&scaled, &fb).unwrap() - c).abs() < 1e-9);
        }
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{unit_sim, FeatureVec};
use crate::error::{Result, SeaError};
use crate::rng::seeded;
use crate::SCHEMA_VERSION;

const MAX_ITERS: usize = 300;
const SHIFT_TOL: f64 = 1e-6;

/// Spherical k-means model: unit centroids, cosine assignment.
/// Inertia is the sum over points of `1 - cos(point, centroid)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<FeatureVec>,
    #[serde(default)]
    pub inertia: f64,
}

impl ClusterModel {
    pub fn new(centroids: Vec<FeatureVec>) -> Result<Self> {
        let dim = centroids.first().map(FeatureVec::dim).ok_or_else(|| SeaError::invalid("cluster model needs at least one centroid"))?;
        let mut cs = Vec::with_capacity(centroids.len());
        for mut c in centroids {
            if c.dim() != dim {
                return Err(SeaError::DimensionMismatch { expected: dim, got: c.dim() });
            }
            c.normalize()?;
            cs.push(c);
        }
        Ok(Self { schema_version: SCHEMA_VERSION, k: cs.len(), dim, centroids: cs, inertia: 0.0 })
    }

    /// Index of the most similar centroid; ties resolve to the lowest index.
    pub fn nearest(&self, feature: &FeatureVec) -> Result<(usize, f64)> {
        if self.centroids.is_empty() {
            return Err(SeaError::invalid("empty cluster model"));
        }
        if feature.dim() != self.dim {
            return Err(SeaError::DimensionMismatch { expected: self.dim, got: feature.dim() });
        }
        let n = feature.norm();
        if n == 0.0 {
            return Err(SeaError::ZeroVector);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let s = c.dot(feature) / n;
            if s > best.1 {
                best = (i, s);
            }
        }
        Ok(best)
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Objective after every assignment step.
    pub inertia_trace: Vec<f64>,
}

pub fn kmeans(points: &[FeatureVec], k: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_fit(points, k, seed).map(|f| f.model)
}

/// Runs `restarts` seeded fits and keeps the lowest-inertia one.
pub fn kmeans_best_of(points: &[FeatureVec], k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let fit = kmeans_fit(points, k, crate::rng::derive(seed, r as u64))?;
        if best.as_ref().is_none_or(|b| fit.model.inertia < b.model.inertia - 1e-12) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans_fit(points: &[FeatureVec], k: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(SeaError::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(SeaError::invalid(format!("k = {k} exceeds number of points {}", points.len())));
    }
    let dim = points[0].dim();
    let mut unit = Vec::with_capacity(points.len());
    for p in points {
        if p.dim() != dim {
            return Err(SeaError::DimensionMismatch { expected: dim, got: p.dim() });
        }
        let mut u = p.clone();
        u.normalize()?;
        unit.push(u);
    }

    let mut rng = seeded(seed);
    let mut centroids = plus_plus_seeds(&unit, k, &mut rng);
    let mut assignments = vec![0usize; unit.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let inertia = assign(&unit, &centroids, &mut assignments);
        trace.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in unit.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_slice()) {
                *s += x;
            }
        }

        let mut taken = Vec::new();
        let mut shift: f64 = 0.0;
        let mut new_centroids = Vec::with_capacity(k);
        for c in 0..k {
            let next = if counts[c] == 0 {
                let far = farthest_point(&unit, &centroids, &assignments, &taken);
                taken.push(far);
                unit[far].clone()
            } else {
                FeatureVec::normalized(std::mem::take(&mut sums[c])).unwrap_or_else(|_| centroids[c].clone())
            };
            let d: f64 = next.as_slice().iter().zip(centroids[c].as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            shift = shift.max(d);
            new_centroids.push(next);
        }
        centroids = new_centroids;

        if shift < SHIFT_TOL || iterations >= MAX_ITERS {
            break;
        }
    }

    let inertia = assign(&unit, &centroids, &mut assignments);
    let mut model = ClusterModel::new(centroids)?;
    model.inertia = inertia;
    Ok(KMeansFit { model, assignments, iterations, inertia_trace: trace })
}

fn assign(points: &[FeatureVec], centroids: &[FeatureVec], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, slot) in points.iter().zip(out.iter_mut()) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in centroids.iter().enumerate() {
            let s = unit_sim(p, c);
            if s > best.1 {
                best = (i, s);
            }
        }
        *slot = best.0;
        inertia += (1.0 - best.1).max(0.0);
    }
    inertia
}

fn farthest_point(points: &[FeatureVec], centroids: &[FeatureVec], assignments: &[usize], taken: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        let d = 1.0 - unit_sim(p, &centroids[assignments[i]]);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// k-means++ seeding with `D = 1 - cos` and probabilities proportional to `D^2`.
fn plus_plus_seeds<R: Rng>(points: &[FeatureVec], k: usize, rng: &mut R) -> Vec<FeatureVec> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| (1.0 - unit_sim(p, &points[chosen[0]])).max(0.0).powi(2)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            if d2[idx] <= 0.0 {
                // numeric fallthrough: take the last positive-weight point
                d2.iter().rposition(|&w| w > 0.0).unwrap_or(idx)
            } else {
                idx
            }
        } else {
            // all remaining points coincide with a seed
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        for (i, p) in points.iter().enumerate() {
            let d = (1.0 - unit_sim(p, &points[pick])).max(0.0).powi(2);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        d2[pick] = 0.0;
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cosine_sim;
    use crate::rng::seeded;
    use rand_distr::{Distribution, Normal};

    fn blob(center: &FeatureVec, n: usize, sigma: f64, seed: u64) -> Vec<FeatureVec> {
        let mut rng = seeded(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| FeatureVec::normalized(center.as_slice().iter().map(|x| x + normal.sample(&mut rng)).collect()).unwrap()).collect()
    }

    #[test]
    fn k_one_is_normalized_mean() {
        let pts = blob(&FeatureVec::basis(8, 2), 30, 0.3, 1);
        let model = kmeans(&pts, 1, 5).unwrap();
        let mut mean = vec![0.0; 8];
        for p in &pts {
            let u = FeatureVec::normalized(p.as_slice().to_vec()).unwrap();
            for (m, x) in mean.iter_mut().zip(u.as_slice()) {
                *m += x;
            }
        }
        let mean = FeatureVec::normalized(mean).unwrap();
        for (a, b) in model.centroids[0].as_slice().iter().zip(mean.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let mut rng = seeded(3);
        let pts: Vec<_> = (0..7).map(|_| FeatureVec::random_unit(5, &mut rng)).collect();
        let fit = kmeans_fit(&pts, 7, 9).unwrap();
        assert!(fit.model.inertia.abs() < 1e-12);
        for p in &pts {
            let best = fit.model.centroids.iter().map(|c| cosine_sim(c, p).unwrap()).fold(f64::NEG_INFINITY, f64::max);
            assert!((best - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_orthogonal_blobs_are_pure() {
        let a = blob(&FeatureVec::basis(16, 0), 40, 0.05, 10);
        let b = blob(&FeatureVec::basis(16, 1), 40, 0.05, 11);
        let labels: Vec<usize> = std::iter::repeat_n(0, 40).chain(std::iter::repeat_n(1, 40)).collect();
        let pts: Vec<_> = a.into_iter().chain(b).collect();
        let fit = kmeans_fit(&pts, 2, 42).unwrap();
        // label-majority purity: every cluster's members share one label
        let mut purity_hits = 0;
        for c in 0..2 {
            let members: Vec<usize> = (0..pts.len()).filter(|&i| fit.assignments[i] == c).collect();
            let ones = members.iter().filter(|&&i| labels[i] == 1).count();
            purity_hits += ones.max(members.len() - ones);
        }
        assert_eq!(purity_hits as f64 / pts.len() as f64, 1.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let mut rng = seeded(8);
        let pts: Vec<_> = (0..120).map(|_| FeatureVec::random_unit(6, &mut rng)).collect();
        let f1 = kmeans_fit(&pts, 5, 77).unwrap();
        let f2 = kmeans_fit(&pts, 5, 77).unwrap();
        assert_eq!(f1.model, f2.model);
        assert_eq!(f1.assignments, f2.assignments);
        for w in f1.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "inertia increased: {:?}", w);
        }
        assert!(f1.iterations <= MAX_ITERS);
    }

    #[test]
    fn every_point_assigned_to_nearest_centroid() {
        let mut rng = seeded(21);
        let pts: Vec<_> = (0..60).map(|_| FeatureVec::random_unit(4, &mut rng)).collect();
        let fit = kmeans_fit(&pts, 4, 1).unwrap();
        for (p, &a) in pts.iter().zip(&fit.assignments) {
            assert_eq!(fit.model.nearest(p).unwrap().0, a);
        }
    }

    #[test]
    fn k_too_large_is_argument_error() {
        let pts = vec![FeatureVec::basis(3, 0)];
        assert!(matches!(kmeans(&pts, 2, 0), Err(SeaError::InvalidArgument(_))));
        assert!(kmeans(&pts, 0, 0).is_err());
    }

    #[test]
    fn json_schema_fields() {
        let m = ClusterModel::new(vec![FeatureVec::basis(2, 0), FeatureVec::basis(2, 1)]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["K"], 2);
        assert_eq!(v["dim"], 2);
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["centroids"][1][1], 1.0);
        let back: ClusterModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
